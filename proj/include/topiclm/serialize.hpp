#pragma once

/**
 * Versioned binary container for the trained hierarchical model.
 *
 * Layout: magic/version, scalars (order, mode, betas, weights), word-class
 * bits, idf, collapsed topology with topic centroids, the root Katz tables,
 * and per-node free-space tables plus unknown-space scales. Fixed-space
 * probabilities are never stored; they resolve through the root at load
 * time. All maps serialize in key order and doubles as raw bit patterns, so
 * identical models produce identical bytes.
 */

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "topiclm/common.hpp"
#include "topiclm/lm.hpp"

namespace topiclm {

inline constexpr char kModelMagic[4] = {'T', 'P', 'L', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

class BinWriter {
 public:
  explicit BinWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot write model file: " + path.string());
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

 private:
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot read model file: " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw DataError("model file truncated");
    }
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    bytes(&v, 4);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

 private:
  std::ifstream in_;
};

inline void write_prob_list(BinWriter& w, const std::vector<std::pair<TokenId, double>>& probs) {
  w.u32(static_cast<std::uint32_t>(probs.size()));
  for (const auto& [t, p] : probs) {
    w.u32(t);
    w.f64(p);
  }
}

inline std::vector<std::pair<TokenId, double>> read_prob_list(BinReader& r) {
  const std::uint32_t n = r.u32();
  std::vector<std::pair<TokenId, double>> probs;
  probs.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const TokenId t = r.u32();
    const double p = r.f64();
    probs.emplace_back(t, p);
  }
  return probs;
}

}  // namespace detail

inline void save_model(const HierarchicalLM& lm, const std::filesystem::path& path) {
  detail::BinWriter w(path);
  w.bytes(kModelMagic, 4);
  w.u32(kModelVersion);
  w.u64(lm.vocab_hash);
  w.u32(static_cast<std::uint32_t>(lm.vocab_size));
  w.u8(static_cast<std::uint8_t>(lm.order));
  w.u8(lm.em_mode ? 1 : 0);
  w.f64(lm.beta2);
  w.f64(lm.beta3);
  w.f64(lm.global_lambda.parent);
  w.f64(lm.global_lambda.lower);
  w.f64(lm.global_lambda.relfreq);

  // EM weight table
  w.u32(static_cast<std::uint32_t>(lm.em_lambda.n_depths));
  for (const auto& t : lm.em_lambda.rows) {
    w.f64(t.parent);
    w.f64(t.lower);
    w.f64(t.relfreq);
  }

  // word classes and idf
  for (std::size_t i = 0; i < lm.vocab_size; ++i) {
    w.u8(lm.classes.is_function(static_cast<TokenId>(i)) ? 1 : 0);
  }
  for (std::size_t i = 0; i < lm.vocab_size; ++i) w.f64(lm.idf[i]);

  // collapsed topology
  w.u32(static_cast<std::uint32_t>(lm.topo.nodes.size()));
  for (const auto& n : lm.topo.nodes) {
    w.u32(n.orig_id);
    w.i32(n.parent);
    w.i32(n.depth);
    w.u8(n.is_topic ? 1 : 0);
  }

  // topics: centroid (eps coefficient + sparse entries) and training mass
  w.u32(static_cast<std::uint32_t>(lm.topo.topics.size()));
  for (std::size_t t = 0; t < lm.topo.topics.size(); ++t) {
    w.u32(static_cast<std::uint32_t>(lm.topo.topics[t]));
    w.u32(lm.topic_mass[t]);
    const auto& c = lm.topic_centroids[t];
    w.f64(c.eps_coeff());
    detail::write_prob_list(w, c.entries());
  }

  // root model
  for (std::size_t i = 0; i < lm.vocab_size; ++i) w.f64(lm.root.unigram[i]);
  w.f64(lm.root.unigram_zero_floor);
  for (int o = 2; o <= lm.order; ++o) {
    const auto& table = o == 2 ? lm.root.cond2 : lm.root.cond3;
    w.u32(static_cast<std::uint32_t>(table.size()));
    for (const auto& [key, e] : table) {
      w.u64(key);
      w.u64(e.history_count);
      w.f64(e.bow);
      w.f64(e.unseen_mass);
      detail::write_prob_list(w, e.probs);
    }
  }

  // node models (root slot stores only its unigram copy)
  for (std::size_t idx = 0; idx < lm.nodes.size(); ++idx) {
    const auto& nm = lm.nodes[idx];
    for (std::size_t i = 0; i < lm.vocab_size; ++i) {
      w.f64(idx == 0 ? lm.root.unigram[i] : nm.unigram[i]);
    }
    if (idx == 0) continue;
    for (int o = 2; o <= lm.order; ++o) {
      const auto& table = o == 2 ? nm.cond2 : nm.cond3;
      w.u32(static_cast<std::uint32_t>(table.size()));
      for (const auto& [key, t] : table) {
        w.u64(key);
        w.f64(t.alpha_scale);
        detail::write_prob_list(w, t.free_probs);
      }
    }
  }
}

inline bool eps_requires_background(const HierarchicalLM& lm) {
  for (const auto& c : lm.topic_centroids) {
    if (c.eps_coeff() > 0.0) return true;
  }
  return false;
}

inline HierarchicalLM load_model(const std::filesystem::path& path,
                                 const std::shared_ptr<const Background>& bg = nullptr) {
  detail::BinReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0) {
    throw DataError("not a model file (bad magic): " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) {
    throw DataError("unsupported model version " + std::to_string(version));
  }

  HierarchicalLM lm;
  lm.vocab_hash = r.u64();
  lm.vocab_size = r.u32();
  lm.order = r.u8();
  if (lm.order < 2 || lm.order > 3) throw DataError("model file has invalid order");
  lm.em_mode = r.u8() != 0;
  lm.beta2 = r.f64();
  lm.beta3 = r.f64();
  lm.global_lambda.parent = r.f64();
  lm.global_lambda.lower = r.f64();
  lm.global_lambda.relfreq = r.f64();

  lm.em_lambda.n_depths = static_cast<int>(r.u32());
  lm.em_lambda.rows.resize(static_cast<std::size_t>(lm.em_lambda.n_depths) *
                           LambdaTable::kBuckets);
  for (auto& t : lm.em_lambda.rows) {
    t.parent = r.f64();
    t.lower = r.f64();
    t.relfreq = r.f64();
  }

  {
    std::vector<std::uint8_t> mask(lm.vocab_size);
    for (auto& b : mask) b = r.u8();
    lm.classes = WordClassPartition::from_mask(std::move(mask));
  }
  lm.idf.resize(lm.vocab_size);
  for (auto& v : lm.idf) v = r.f64();

  const std::uint32_t n_nodes = r.u32();
  lm.topo.nodes.resize(n_nodes);
  for (auto& n : lm.topo.nodes) {
    n.orig_id = r.u32();
    n.parent = r.i32();
    n.depth = r.i32();
    n.is_topic = r.u8() != 0;
    lm.topo.max_depth = std::max(lm.topo.max_depth, n.depth);
  }
  for (std::uint32_t i = 0; i < n_nodes; ++i) {
    const int p = lm.topo.nodes[i].parent;
    if (p >= 0) lm.topo.nodes[p].children.push_back(static_cast<int>(i));
  }

  const std::uint32_t n_topics = r.u32();
  for (std::uint32_t t = 0; t < n_topics; ++t) {
    lm.topo.topics.push_back(static_cast<int>(r.u32()));
    lm.topic_mass.push_back(r.u32());
    const double eps = r.f64();
    auto entries = detail::read_prob_list(r);
    lm.topic_centroids.emplace_back(std::move(entries), eps, eps > 0.0 ? bg : nullptr);
  }

  lm.root.order = lm.order;
  lm.root.vocab_size = lm.vocab_size;
  lm.root.unigram.resize(lm.vocab_size);
  for (auto& v : lm.root.unigram) v = r.f64();
  lm.root.unigram_zero_floor = r.f64();
  for (int o = 2; o <= lm.order; ++o) {
    auto& table = o == 2 ? lm.root.cond2 : lm.root.cond3;
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint64_t key = r.u64();
      RootModel::CondEntry e;
      e.history_count = r.u64();
      e.bow = r.f64();
      e.unseen_mass = r.f64();
      e.probs = detail::read_prob_list(r);
      table.emplace(key, std::move(e));
    }
  }

  lm.nodes.resize(n_nodes);
  for (std::uint32_t idx = 0; idx < n_nodes; ++idx) {
    auto& nm = lm.nodes[idx];
    nm.unigram.resize(lm.vocab_size);
    for (auto& v : nm.unigram) v = r.f64();
    if (idx == 0) continue;
    for (int o = 2; o <= lm.order; ++o) {
      auto& table = o == 2 ? nm.cond2 : nm.cond3;
      const std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint64_t key = r.u64();
        NodeCondTable t;
        t.alpha_scale = r.f64();
        t.free_probs = detail::read_prob_list(r);
        table.emplace(key, std::move(t));
      }
    }
  }
  if (eps_requires_background(lm) && !bg) {
    diag::note("load_model: centroids carry smoothing but no background was supplied");
  }
  return lm;
}

}  // namespace topiclm
