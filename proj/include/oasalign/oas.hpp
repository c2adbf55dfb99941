#pragma once

// Optimal Alignment Score: the share of alignment-block mass that lies on the
// optimal monotone path. Plus per-head corpus tables, layer/top-k aggregates and
// alignment-head designation.

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "oasalign/attention_store.hpp"
#include "oasalign/parallel.hpp"
#include "oasalign/viterbi.hpp"

namespace oasalign {

inline constexpr std::size_t kDefaultLayerTopK = 7;
inline constexpr std::size_t kDefaultFinalTopK = 5;

/// n_layers x n_heads table of per-head scores.
using OasTable = Matrix<double>;

struct OasBreakdown {
  double path_mass = 0.0;
  double total_mass = 0.0;
  AlignmentPath path;

  double value() const { return path_mass / total_mass; }
};

template <class T>
OasBreakdown oas_breakdown(const Matrix<T>& a) {
  detail::require_alignment_input(a);
  for (T v : a.values())
    require(v >= T{0}, ErrorCode::negative_entry, "alignment matrix has a negative entry");
  OasBreakdown b;
  b.total_mass = total_sum(a);
  require(b.total_mass > 0.0, ErrorCode::degenerate_input,
          "alignment block has zero total mass; OAS is undefined");
  b.path = optimal_path(a);
  b.path_mass = path_score(a, b.path);
  return b;
}

template <class T>
double oas(const Matrix<T>& a) {
  return oas_breakdown(a).value();
}

/// OAS of every head of one dump.
inline OasTable head_oas_table(const AttentionDump& dump) {
  const Manifest& m = dump.manifest;
  OasTable table(m.n_layers, m.n_heads);
  for (std::size_t l = 0; l < m.n_layers; ++l) {
    for (std::size_t h = 0; h < m.n_heads; ++h) {
      try {
        table(l, h) = oas(alignment_block(dump, l, h));
      } catch (const Error& e) {
        throw Error(e.code(), "utterance '" + m.utterance_id + "' layer " + std::to_string(l) +
                                  " head " + std::to_string(h) + ": " + e.what());
      }
    }
  }
  return table;
}

namespace detail {

inline void require_same_model(const std::vector<OasTable>& tables) {
  require(!tables.empty(), ErrorCode::invalid_argument, "no dumps given");
  for (const auto& t : tables)
    require(t.rows() == tables.front().rows() && t.cols() == tables.front().cols(),
            ErrorCode::shape_mismatch, "dumps disagree on n_layers / n_heads");
}

inline OasTable add_tables(OasTable x, const OasTable& y) {
  for (std::size_t k = 0; k < x.size(); ++k) x.values()[k] += y.values()[k];
  return x;
}

}  // namespace detail

/// Unweighted mean of per-utterance tables, reduced pairwise in input order.
inline OasTable mean_table(const std::vector<OasTable>& tables) {
  detail::require_same_model(tables);
  OasTable sum = pairwise_reduce(tables, 0, tables.size(), detail::add_tables);
  for (double& v : sum.values()) v /= static_cast<double>(tables.size());
  return sum;
}

/// Per-utterance tables, computed on up to `jobs` threads; result order = input order.
inline std::vector<OasTable> utterance_tables(const std::vector<AttentionDump>& dumps,
                                              std::size_t jobs = 1) {
  require(!dumps.empty(), ErrorCode::invalid_argument, "no dumps given");
  std::vector<OasTable> tables(dumps.size());
  parallel_for(dumps.size(), jobs, [&](std::size_t i) { tables[i] = head_oas_table(dumps[i]); });
  detail::require_same_model(tables);
  return tables;
}

/// Corpus-mean OAS per (layer, head).
inline OasTable per_head_oas(const std::vector<AttentionDump>& dumps, std::size_t jobs = 1) {
  return mean_table(utterance_tables(dumps, jobs));
}

namespace detail {

inline double mean_of_top_k(std::vector<double> values, std::size_t k) {
  k = std::min(k, values.size());
  std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end(),
                    std::greater<>());
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += values[i];
  return acc / static_cast<double>(k);
}

}  // namespace detail

/// Mean of the k best heads in each layer (all heads when k > n_heads).
inline std::vector<double> layer_topk_mean(const OasTable& table, std::size_t k = kDefaultLayerTopK) {
  require(!table.empty(), ErrorCode::invalid_argument, "empty OAS table");
  require(k >= 1, ErrorCode::invalid_argument, "k must be positive");
  std::vector<double> out(table.rows());
  for (std::size_t l = 0; l < table.rows(); ++l) {
    auto row = table.row(l);
    out[l] = detail::mean_of_top_k({row.begin(), row.end()}, k);
  }
  return out;
}

/// Mean of the k best heads over the whole table.
inline double final_oas(const OasTable& table, std::size_t k = kDefaultFinalTopK) {
  require(!table.empty(), ErrorCode::invalid_argument, "empty OAS table");
  require(k >= 1, ErrorCode::invalid_argument, "k must be positive");
  auto flat = table.values();
  return detail::mean_of_top_k({flat.begin(), flat.end()}, k);
}

// Head designation policies.

/// The best `per_layer_count` heads inside each named layer. An unset count means
/// half the heads of a layer.
struct FixedLayers {
  std::vector<std::size_t> layers{8, 9};
  std::optional<std::size_t> per_layer_count;
};

/// The `count` best heads anywhere in the model.
struct TopOas {
  std::size_t count = 1;
};

using HeadPolicy = std::variant<FixedLayers, TopOas>;

struct HeadSet {
  std::vector<HeadKey> heads;  // sorted by (layer, head)
  std::string policy;

  bool contains(HeadKey k) const { return std::binary_search(heads.begin(), heads.end(), k); }
};

namespace detail {

struct RankedHead {
  double score;
  HeadKey key;
};

// Descending score; ties resolved by (layer, head) ascending.
inline void rank_heads(std::vector<RankedHead>& heads) {
  std::sort(heads.begin(), heads.end(), [](const RankedHead& x, const RankedHead& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.key < y.key;
  });
}

}  // namespace detail

inline HeadSet select_alignment_heads(const OasTable& table, const HeadPolicy& policy) {
  require(!table.empty(), ErrorCode::invalid_argument, "empty OAS table");
  HeadSet out;
  if (const auto* fixed = std::get_if<FixedLayers>(&policy)) {
    const std::size_t count = fixed->per_layer_count.value_or(table.cols() / 2);
    require(count >= 1 && count <= table.cols(), ErrorCode::invalid_argument,
            "per-layer head count " + std::to_string(count) + " not in [1, " +
                std::to_string(table.cols()) + "]");
    std::vector<std::size_t> layers = fixed->layers;
    std::sort(layers.begin(), layers.end());
    require(std::adjacent_find(layers.begin(), layers.end()) == layers.end(),
            ErrorCode::invalid_argument, "duplicate layer in fixed policy");
    out.policy = "fixed(layers=";
    for (std::size_t idx = 0; idx < layers.size(); ++idx) {
      const std::size_t l = layers[idx];
      require(l < table.rows(), ErrorCode::invalid_argument,
              "layer " + std::to_string(l) + " out of range [0, " + std::to_string(table.rows()) +
                  ")");
      out.policy += (idx ? "," : "") + std::to_string(l);
      std::vector<detail::RankedHead> ranked;
      for (std::size_t h = 0; h < table.cols(); ++h) ranked.push_back({table(l, h), {l, h}});
      detail::rank_heads(ranked);
      for (std::size_t r = 0; r < count; ++r) out.heads.push_back(ranked[r].key);
    }
    out.policy += ";per_layer=" + std::to_string(count) + ")";
  } else {
    const auto& top = std::get<TopOas>(policy);
    require(top.count >= 1 && top.count <= table.size(), ErrorCode::invalid_argument,
            "head count " + std::to_string(top.count) + " not in [1, " +
                std::to_string(table.size()) + "]");
    std::vector<detail::RankedHead> ranked;
    for (std::size_t l = 0; l < table.rows(); ++l)
      for (std::size_t h = 0; h < table.cols(); ++h) ranked.push_back({table(l, h), {l, h}});
    detail::rank_heads(ranked);
    for (std::size_t r = 0; r < top.count; ++r) out.heads.push_back(ranked[r].key);
    out.policy = "top_oas(count=" + std::to_string(top.count) + ")";
  }
  std::sort(out.heads.begin(), out.heads.end());
  return out;
}

/// The single highest-OAS head, ties to the smallest (layer, head).
inline HeadKey best_head(const OasTable& table) {
  return select_alignment_heads(table, TopOas{1}).heads.front();
}

}  // namespace oasalign
