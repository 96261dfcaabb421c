#pragma once

/**
 * Minimal CSV writing plus a schema validator. Every CSV the pipeline emits
 * has a registered schema (header names and column types) and the tests
 * round-trip each artifact through validation.
 */

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "topiclm/common.hpp"

namespace topiclm::csv {

enum class ColumnType { kString, kInteger, kReal };

struct Column {
  std::string name;
  ColumnType type;
};

struct Schema {
  std::string name;
  std::vector<Column> columns;

  std::string header() const {
    std::string h;
    for (const auto& c : columns) {
      if (!h.empty()) h += ',';
      h += c.name;
    }
    return h;
  }
};

inline std::vector<std::string> split_row(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

struct ValidationResult {
  bool ok = true;
  std::string error;
  std::size_t rows = 0;
};

inline ValidationResult validate(const Schema& schema, std::istream& in) {
  ValidationResult res;
  std::string line;
  if (!std::getline(in, line)) {
    return {false, schema.name + ": empty file", 0};
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != schema.header()) {
    return {false, schema.name + ": header mismatch, got '" + line + "'", 0};
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != schema.columns.size()) {
      return {false,
              schema.name + ": line " + std::to_string(lineno) + " has " +
                  std::to_string(cells.size()) + " cells, expected " +
                  std::to_string(schema.columns.size()),
              res.rows};
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& cell = cells[c];
      const auto type = schema.columns[c].type;
      if (type == ColumnType::kString) continue;
      if (cell.empty()) {
        return {false, schema.name + ": line " + std::to_string(lineno) + " empty numeric cell",
                res.rows};
      }
      if (type == ColumnType::kInteger) {
        std::int64_t v;
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc{} || p != cell.data() + cell.size()) {
          return {false,
                  schema.name + ": line " + std::to_string(lineno) + " bad integer '" + cell + "'",
                  res.rows};
        }
      } else {
        try {
          std::size_t pos = 0;
          (void)std::stod(cell, &pos);
          if (pos != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
          return {false,
                  schema.name + ": line " + std::to_string(lineno) + " bad real '" + cell + "'",
                  res.rows};
        }
      }
    }
    ++res.rows;
  }
  return res;
}

inline ValidationResult validate_file(const Schema& schema, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {false, schema.name + ": cannot open " + path.string(), 0};
  return validate(schema, in);
}

/// Registered schemas for every CSV artifact the pipeline writes.
inline const Schema& merges_schema() {
  static const Schema s{"merges",
                        {{"step", ColumnType::kInteger},
                         {"left", ColumnType::kInteger},
                         {"right", ColumnType::kInteger},
                         {"similarity", ColumnType::kReal}}};
  return s;
}

inline const Schema& balance_schema() {
  static const Schema s{"balance",
                        {{"alpha", ColumnType::kReal},
                         {"epsilon", ColumnType::kReal},
                         {"linkage", ColumnType::kString},
                         {"max_depth", ColumnType::kInteger},
                         {"mean_leaf_depth", ColumnType::kReal},
                         {"imbalance", ColumnType::kReal}}};
  return s;
}

inline const Schema& entropy_sweep_schema() {
  static const Schema s{"entropy_sweep",
                        {{"alpha", ColumnType::kReal},
                         {"linkage", ColumnType::kString},
                         {"K", ColumnType::kInteger},
                         {"entropy", ColumnType::kReal}}};
  return s;
}

inline const Schema& lambda_by_height_schema() {
  static const Schema s{"lambda_by_height",
                        {{"height", ColumnType::kInteger},
                         {"lambda_parent", ColumnType::kReal},
                         {"lambda_lower", ColumnType::kReal},
                         {"lambda_relfreq", ColumnType::kReal},
                         {"events", ColumnType::kInteger}}};
  return s;
}

inline const Schema& bigram_classes_schema() {
  static const Schema s{"bigram_classes",
                        {{"model", ColumnType::kString},
                         {"bigram_type", ColumnType::kString},
                         {"freq_pct", ColumnType::kReal}}};
  return s;
}

inline const Schema& perdoc_schema() {
  static const Schema s{"perdoc",
                        {{"doc_id", ColumnType::kString}, {"adaptive_ppl", ColumnType::kReal}}};
  return s;
}

inline const Schema& demo_schema() {
  static const Schema s{"demo",
                        {{"token", ColumnType::kString},
                         {"baseline_p", ColumnType::kReal},
                         {"adaptive_p", ColumnType::kReal},
                         {"top3_topics", ColumnType::kString}}};
  return s;
}

class Writer {
 public:
  Writer(const std::filesystem::path& path, const Schema& schema) : schema_(schema) {
    out_.open(path, std::ios::binary);
    if (!out_) throw DataError("cannot write CSV: " + path.string());
    out_ << schema.header() << '\n';
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != schema_.columns.size()) {
      throw Error("CSV row width mismatch for schema " + schema_.name);
    }
    std::string line;
    for (const auto& c : cells) {
      if (!line.empty()) line += ',';
      line += c;
    }
    out_ << line << '\n';
  }

  static std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }

 private:
  std::ofstream out_;
  const Schema& schema_;
};

}  // namespace topiclm::csv
