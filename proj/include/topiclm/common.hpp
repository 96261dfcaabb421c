#pragma once

/**
 * Shared basics: id types, error categories, deterministic RNG,
 * a slot-based parallel_for and small hashing helpers.
 */

#include <atomic>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace topiclm {

using TokenId = std::uint32_t;
using DocId = std::uint32_t;
using NodeId = std::uint32_t;

inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

/// Base error. UsageError maps to CLI exit 2, DataError to exit 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

namespace diag {

/// Diagnostics sink. Notes go to stderr so stdout/file artifacts stay clean;
/// tests may swap the sink to capture messages.
inline std::function<void(std::string_view)>& sink() {
  static std::function<void(std::string_view)> s = [](std::string_view msg) {
    static std::mutex m;
    std::lock_guard<std::mutex> lock(m);
    std::cerr << "note: " << msg << "\n";
  };
  return s;
}

inline void note(const std::string& msg) { sink()(msg); }

}  // namespace diag

/**
 * Deterministic RNG. mt19937_64 has a bit-exact standardized sequence; the
 * derived draws below avoid std::*_distribution, whose output is
 * implementation-defined.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed), seed_snapshot_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double in_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  /// Derive an independent stream; `salt` distinguishes consumers.
  Rng fork(std::uint64_t salt) const {
    return Rng(mix64(seed_snapshot_ ^ salt));
  }

  static std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_snapshot_ = 0;
};

inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/**
 * Index-sliced parallel loop. Each fn(i) must touch only its own slot, so
 * results do not depend on scheduling and runs stay reproducible. Reductions
 * belong in a sequential pass over the slots afterwards.
 */
template <typename F>
void parallel_for(std::size_t n, int workers, F&& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int nthreads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), n));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nthreads));
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
          break;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace topiclm
