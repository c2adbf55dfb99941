#pragma once

// Optimal monotone alignment path through a speech x text attention block.
//
// A path assigns every speech row i a text column P[i] with P[i+1] - P[i] in {0, 1}.
// Start and end columns are free. The DP maximizes sum_i A[i, P[i]]:
//
//   dp[0, j] = A[0, j]
//   dp[i, j] = A[i, j] + max(dp[i-1, j-1], dp[i-1, j])      (dp[i-1, -1] = -inf)
//
// Backtracking starts at the smallest argmax of the last dp row and steps
// diagonally whenever dp[i-1, j-1] >= dp[i-1, j]. Indices are 0-based here; the
// usual 1-based statement maps by subtracting one from every row and column.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "oasalign/error.hpp"
#include "oasalign/matrix.hpp"

namespace oasalign {

struct AlignmentPath {
  std::vector<std::size_t> indices;
  std::size_t text_len = 0;

  std::size_t speech_len() const noexcept { return indices.size(); }

  void validate() const {
    require(!indices.empty(), ErrorCode::invalid_argument, "empty alignment path");
    for (std::size_t i = 0; i < indices.size(); ++i) {
      require(indices[i] < text_len, ErrorCode::invalid_argument,
              "path entry " + std::to_string(i) + " = " + std::to_string(indices[i]) +
                  " is outside [0, " + std::to_string(text_len) + ")");
      if (i > 0) {
        require(indices[i] == indices[i - 1] || indices[i] == indices[i - 1] + 1,
                ErrorCode::invalid_argument,
                "path step at " + std::to_string(i) + " is neither stay nor +1");
      }
    }
  }

  friend bool operator==(const AlignmentPath&, const AlignmentPath&) = default;
};

/// Speech tokens per text token. Sums to the path length.
using DurationVector = std::vector<std::size_t>;

namespace detail {

template <class T>
void require_alignment_input(const Matrix<T>& a) {
  require(a.rows() >= 1 && a.cols() >= 1, ErrorCode::degenerate_input, "empty alignment matrix");
  require_finite(a, "alignment matrix");
}

inline void require_path_fits(std::size_t rows, std::size_t cols, const AlignmentPath& p) {
  p.validate();
  require(p.speech_len() == rows && p.text_len == cols, ErrorCode::shape_mismatch,
          "path of shape " + std::to_string(p.speech_len()) + "x" + std::to_string(p.text_len) +
              " does not fit a " + std::to_string(rows) + "x" + std::to_string(cols) +
              " matrix");
}

}  // namespace detail

/// Viterbi search. Accumulates in double whatever the element type.
template <class T>
AlignmentPath optimal_path(const Matrix<T>& a) {
  detail::require_alignment_input(a);
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();

  Matrix<double> dp(rows, cols);
  for (std::size_t j = 0; j < cols; ++j) dp(0, j) = static_cast<double>(a(0, j));
  for (std::size_t i = 1; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double diag = j > 0 ? dp(i - 1, j - 1) : neg_inf;
      dp(i, j) = static_cast<double>(a(i, j)) + std::max(diag, dp(i - 1, j));
    }
  }

  AlignmentPath path{std::vector<std::size_t>(rows), cols};
  auto last = dp.row(rows - 1);
  std::size_t j = static_cast<std::size_t>(std::max_element(last.begin(), last.end()) - last.begin());
  path.indices[rows - 1] = j;
  for (std::size_t i = rows - 1; i > 0; --i) {
    if (j > 0 && dp(i - 1, j - 1) >= dp(i - 1, j)) --j;
    path.indices[i - 1] = j;
  }
  return path;
}

/// Sum of A along the path, accumulated in row order.
template <class T>
double path_score(const Matrix<T>& a, const AlignmentPath& p) {
  detail::require_path_fits(a.rows(), a.cols(), p);
  double score = 0.0;
  for (std::size_t i = 0; i < p.indices.size(); ++i) score += static_cast<double>(a(i, p.indices[i]));
  return score;
}

inline DurationVector path_to_durations(const AlignmentPath& p) {
  p.validate();
  DurationVector d(p.text_len, 0);
  for (std::size_t j : p.indices) ++d[j];
  return d;
}

/// Inverse of path_to_durations for durations whose positive entries are contiguous.
inline AlignmentPath durations_to_path(const DurationVector& d) {
  AlignmentPath p{{}, d.size()};
  for (std::size_t j = 0; j < d.size(); ++j) p.indices.insert(p.indices.end(), d[j], j);
  p.validate();
  return p;
}

/// Number of free-endpoint stay/+1 paths through a rows x cols grid, saturating at `cap`.
inline std::uint64_t count_monotone_paths(std::size_t rows, std::size_t cols,
                                          std::uint64_t cap = std::numeric_limits<std::uint64_t>::max()) {
  std::vector<std::uint64_t> ways(cols, 1);
  for (std::size_t i = 1; i < rows; ++i) {
    for (std::size_t j = cols; j-- > 1;) ways[j] = std::min(cap, ways[j] + ways[j - 1]);
  }
  std::uint64_t total = 0;
  for (auto w : ways) total = std::min(cap, total + w);
  return total;
}

inline constexpr std::uint64_t kBruteForcePathLimit = 10'000'000;

/// Exhaustive search over every monotone path. Test oracle for optimal_path.
///
/// Among equal-scoring paths it returns the one that is smallest when compared
/// from the last row backwards, which is the path the Viterbi tie rules produce.
template <class T>
AlignmentPath brute_force_optimal_path(const Matrix<T>& a) {
  detail::require_alignment_input(a);
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  require(count_monotone_paths(rows, cols, kBruteForcePathLimit + 1) <= kBruteForcePathLimit,
          ErrorCode::too_large,
          "brute-force search over a " + std::to_string(rows) + "x" + std::to_string(cols) +
              " matrix exceeds the path limit");

  std::vector<std::size_t> current(rows);
  std::vector<std::size_t> best;
  double best_score = -std::numeric_limits<double>::infinity();

  auto reverse_less = [&](const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
    for (std::size_t i = rows; i-- > 0;)
      if (x[i] != y[i]) return x[i] < y[i];
    return false;
  };

  // Prefix sums are carried forward so each score is A[0,P0] + A[1,P1] + ... in row order.
  auto visit = [&](auto&& self, std::size_t i, double prefix) -> void {
    if (i == rows) {
      if (best.empty() || prefix > best_score ||
          (prefix == best_score && reverse_less(current, best))) {
        best = current;
        best_score = prefix;
      }
      return;
    }
    const std::size_t prev = current[i - 1];
    for (std::size_t step = 0; step < 2; ++step) {
      const std::size_t j = prev + step;
      if (j >= cols) break;
      current[i] = j;
      self(self, i + 1, prefix + static_cast<double>(a(i, j)));
    }
  };

  for (std::size_t j0 = 0; j0 < cols; ++j0) {
    current[0] = j0;
    visit(visit, 1, static_cast<double>(a(0, j0)));
  }
  return AlignmentPath{std::move(best), cols};
}

}  // namespace oasalign
