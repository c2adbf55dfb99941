#pragma once

// Chain-of-thought supervision targets built from a teacher alignment path:
// durations, the fully repeated text sequence, the sparsely repeated text
// sequence (one revealed slot per duration block, interior slots preferred),
// progress-bar values and their sparse counterpart.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "oasalign/attention_store.hpp"
#include "oasalign/viterbi.hpp"

namespace oasalign {

using TokenId = std::int64_t;

/// Serialized stand-in for a masked slot. Never a vocabulary id.
inline constexpr TokenId kMaskId = -1;

struct SparseTarget {
  /// One entry per CoT slot (sum of durations); nullopt = masked.
  std::vector<std::optional<TokenId>> slots;
  /// Duration of every text token, including zero-length blocks.
  DurationVector block_lengths;

  std::vector<bool> valid() const {
    std::vector<bool> v(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) v[i] = slots[i].has_value();
    return v;
  }

  std::vector<TokenId> serialized() const {
    std::vector<TokenId> out(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) out[i] = slots[i].value_or(kMaskId);
    return out;
  }
};

namespace detail {

inline void require_tokens_match(const std::vector<TokenId>& tokens, const DurationVector& d) {
  require(!tokens.empty(), ErrorCode::invalid_argument, "empty token sequence");
  require(tokens.size() == d.size(), ErrorCode::shape_mismatch,
          std::to_string(tokens.size()) + " tokens but " + std::to_string(d.size()) +
              " durations");
  for (TokenId t : tokens)
    require(t >= 0, ErrorCode::invalid_argument, "token ids must be non-negative");
}

inline std::size_t total_duration(const DurationVector& d) {
  std::size_t total = 0;
  for (auto x : d) total += x;
  return total;
}

// Offset of the revealed slot inside a block of length n >= 1.
inline std::size_t draw_mark_offset(std::size_t n, std::mt19937_64& rng) {
  if (n == 1) return 0;
  if (n == 2) return std::uniform_int_distribution<std::size_t>(0, 1)(rng);
  if (n == 3) return 1;
  return std::uniform_int_distribution<std::size_t>(1, n - 2)(rng);
}

}  // namespace detail

/// Token j repeated d[j] times, in order.
inline std::vector<TokenId> full_repeat_targets(const std::vector<TokenId>& tokens,
                                                const DurationVector& d) {
  detail::require_tokens_match(tokens, d);
  require(detail::total_duration(d) >= 1, ErrorCode::degenerate_input, "all durations are zero");
  std::vector<TokenId> out;
  out.reserve(detail::total_duration(d));
  for (std::size_t j = 0; j < tokens.size(); ++j) out.insert(out.end(), d[j], tokens[j]);
  return out;
}

enum class ZeroDurations { reject, skip };

/// Reveals each token once inside its block. With `skip`, zero-length blocks are
/// passed over; with `reject` they are an error.
inline SparseTarget sparse_repeat_targets(const std::vector<TokenId>& tokens,
                                          const DurationVector& d, std::uint64_t seed,
                                          ZeroDurations zeros = ZeroDurations::reject) {
  detail::require_tokens_match(tokens, d);
  SparseTarget out;
  out.block_lengths = d;
  out.slots.assign(detail::total_duration(d), std::nullopt);
  require(!out.slots.empty(), ErrorCode::degenerate_input, "all durations are zero");
  std::mt19937_64 rng(seed);
  std::size_t block_start = 0;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    if (d[j] == 0) {
      require(zeros == ZeroDurations::skip, ErrorCode::zero_duration,
              "token " + std::to_string(j) + " has zero duration and cannot be marked");
      continue;
    }
    out.slots[block_start + detail::draw_mark_offset(d[j], rng)] = tokens[j];
    block_start += d[j];
  }
  return out;
}

/// p_n = (d_1 + ... + d_n) / (d_1 + ... + d_L). The last entry is exactly 1.
inline std::vector<double> progress_values(const DurationVector& d) {
  require(!d.empty(), ErrorCode::invalid_argument, "empty duration vector");
  const std::size_t total = detail::total_duration(d);
  require(total >= 1, ErrorCode::degenerate_input, "all durations are zero");
  std::vector<double> p(d.size());
  std::size_t running = 0;
  for (std::size_t n = 0; n < d.size(); ++n) {
    running += d[n];
    p[n] = static_cast<double>(running) / static_cast<double>(total);
  }
  return p;
}

/// p_j at the revealed slot of block j; nullopt elsewhere.
inline std::vector<std::optional<double>> sparse_progress_targets(const std::vector<double>& p,
                                                                  const SparseTarget& o_s) {
  require(p.size() == o_s.block_lengths.size(), ErrorCode::shape_mismatch,
          std::to_string(p.size()) + " progress values for " +
              std::to_string(o_s.block_lengths.size()) + " blocks");
  std::vector<std::optional<double>> out(o_s.slots.size());
  std::size_t block_start = 0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    for (std::size_t k = 0; k < o_s.block_lengths[j]; ++k)
      if (o_s.slots[block_start + k]) out[block_start + k] = p[j];
    block_start += o_s.block_lengths[j];
  }
  return out;
}

struct SupervisionBundle {
  AlignmentPath path;
  DurationVector durations;
  std::vector<TokenId> o_w;
  SparseTarget o_s;
  std::vector<std::optional<double>> o_p;
  std::vector<double> p;
  std::vector<std::string> warnings;
};

/// Path -> durations -> all targets. Zero-duration tokens get no slot and no
/// mark (reported in `warnings`) but keep their progress value.
inline SupervisionBundle build_supervision(const std::vector<TokenId>& tokens,
                                           const AlignmentPath& path, std::uint64_t seed) {
  path.validate();
  require(tokens.size() == path.text_len, ErrorCode::shape_mismatch,
          std::to_string(tokens.size()) + " tokens but the alignment has " +
              std::to_string(path.text_len) + " text columns");
  SupervisionBundle b;
  b.path = path;
  b.durations = path_to_durations(path);
  for (std::size_t j = 0; j < b.durations.size(); ++j)
    if (b.durations[j] == 0)
      b.warnings.push_back("token " + std::to_string(j) +
                           " has zero duration on the alignment path; left unmarked");
  b.o_w = full_repeat_targets(tokens, b.durations);
  b.o_s = sparse_repeat_targets(tokens, b.durations, seed, ZeroDurations::skip);
  b.p = progress_values(b.durations);
  b.o_p = sparse_progress_targets(b.p, b.o_s);
  return b;
}

inline SupervisionBundle build_supervision(const std::vector<TokenId>& tokens,
                                           const AlignmentMatrix& teacher, std::uint64_t seed) {
  return build_supervision(tokens, optimal_path(teacher), seed);
}

}  // namespace oasalign
