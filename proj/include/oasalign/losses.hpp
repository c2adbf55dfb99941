#pragma once

// Training-side alignment quantities: the alignment attention mask, the path
// log-likelihood loss on alignment heads and the progress-bar loss, with gradients.
//
// The optimal path is recomputed on every call and held constant when
// differentiating; gradients flow only through the log terms on path cells.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oasalign/attention_store.hpp"
#include "oasalign/viterbi.hpp"

namespace oasalign {

/// seq_len x seq_len; 1 = attention allowed.
struct AlignmentMask {
  SequenceLayout layout;
  Matrix<std::uint8_t> allowed;
};

/// Speech rows may attend to the text span only; every other row is causal.
inline AlignmentMask alignment_mask(const SequenceLayout& layout) {
  layout.validate();
  AlignmentMask mask{layout, Matrix<std::uint8_t>(layout.seq_len, layout.seq_len, 0)};
  for (std::size_t i = 0; i < layout.seq_len; ++i) {
    const bool speech_row = i >= layout.speech.start && i < layout.speech.end;
    if (speech_row) {
      for (std::size_t j = layout.text.start; j < layout.text.end; ++j) mask.allowed(i, j) = 1;
    } else {
      for (std::size_t j = 0; j <= i; ++j) mask.allowed(i, j) = 1;
    }
  }
  return mask;
}

/// Softmax over each row's allowed entries; disallowed entries become exactly 0.
inline Matrix<double> masked_row_softmax(const Matrix<double>& logits, const AlignmentMask& mask) {
  require(logits.rows() == mask.allowed.rows() && logits.cols() == mask.allowed.cols(),
          ErrorCode::shape_mismatch, "logits and mask shapes differ");
  require_finite(logits, "logits");
  Matrix<double> out(logits.rows(), logits.cols(), 0.0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.cols(); ++j)
      if (mask.allowed(i, j)) peak = std::max(peak, logits(i, j));
    if (!std::isfinite(peak)) continue;  // fully masked row
    double norm = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      if (!mask.allowed(i, j)) continue;
      out(i, j) = std::exp(logits(i, j) - peak);
      norm += out(i, j);
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) /= norm;
  }
  return out;
}

/// Plain row softmax of an L_s x L_t block of alignment logits.
inline Matrix<double> row_softmax(const Matrix<double>& logits) {
  require(logits.rows() >= 1 && logits.cols() >= 1, ErrorCode::degenerate_input, "empty logits");
  require_finite(logits, "logits");
  Matrix<double> out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    const double peak = *std::max_element(z.begin(), z.end());
    double norm = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) norm += (out(i, j) = std::exp(z[j] - peak));
    for (std::size_t j = 0; j < z.size(); ++j) out(i, j) /= norm;
  }
  return out;
}

inline constexpr double kDefaultProbabilityFloor = 1e-8;

struct LossOptions {
  /// When set, path probabilities below the floor are raised to it (and get zero
  /// gradient). Unset means a zero path probability is an error.
  std::optional<double> probability_floor;
};

struct OasLoss {
  double loss = 0.0;
  AlignmentPath path;
};

namespace detail {

inline double path_probability(const Matrix<double>& a, std::size_t i, std::size_t j,
                               const LossOptions& options, bool* floored = nullptr) {
  double v = a(i, j);
  if (options.probability_floor && v < *options.probability_floor) {
    if (floored) *floored = true;
    return *options.probability_floor;
  }
  if (floored) *floored = false;
  if (!(v > 0.0))
    fail(ErrorCode::infinite_loss, "path probability at (" + std::to_string(i) + ", " +
                                       std::to_string(j) +
                                       ") is zero; the head has collapsed");
  return v;
}

}  // namespace detail

/// -(1/L_s) sum_i log A[i, P[i]] for a given (frozen) path.
inline double oas_loss_for_path(const Matrix<double>& a, const AlignmentPath& p,
                                const LossOptions& options = {}) {
  detail::require_alignment_input(a);
  detail::require_path_fits(a.rows(), a.cols(), p);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    acc += std::log(detail::path_probability(a, i, p.indices[i], options));
  return -acc / static_cast<double>(a.rows());
}

/// Loss with the optimal path searched on this very matrix.
inline OasLoss oas_loss(const Matrix<double>& a, const LossOptions& options = {}) {
  OasLoss out;
  out.path = optimal_path(a);
  out.loss = oas_loss_for_path(a, out.path, options);
  return out;
}

/// d loss / d A: -1/(L_s A[i, P[i]]) on path cells, zero elsewhere.
inline Matrix<double> oas_loss_grad_wrt_A(const Matrix<double>& a, const AlignmentPath& p,
                                          const LossOptions& options = {}) {
  detail::require_alignment_input(a);
  detail::require_path_fits(a.rows(), a.cols(), p);
  const double n = static_cast<double>(a.rows());
  Matrix<double> grad(a.rows(), a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    bool floored = false;
    const double v = detail::path_probability(a, i, p.indices[i], options, &floored);
    if (!floored) grad(i, p.indices[i]) = -1.0 / (n * v);
  }
  return grad;
}

/// d loss / d Z where A = row_softmax(Z): (A - onehot(P)) / L_s. Rows sum to zero.
inline Matrix<double> oas_loss_grad_wrt_logits(const Matrix<double>& logits,
                                               const AlignmentPath& p) {
  Matrix<double> grad = row_softmax(logits);
  detail::require_path_fits(grad.rows(), grad.cols(), p);
  const double n = static_cast<double>(grad.rows());
  for (std::size_t i = 0; i < grad.rows(); ++i) {
    grad(i, p.indices[i]) -= 1.0;
    for (double& g : grad.row(i)) g /= n;
  }
  return grad;
}

/// Mean of per-utterance losses, each already normalized by its own L_s.
inline double batch_oas_loss(const std::vector<Matrix<double>>& blocks,
                             const LossOptions& options = {}) {
  require(!blocks.empty(), ErrorCode::invalid_argument, "empty batch");
  double acc = 0.0;
  for (const auto& a : blocks) acc += oas_loss(a, options).loss;
  return acc / static_cast<double>(blocks.size());
}

// Progress-bar loss: L1 to targets plus a hinge on decreases between consecutive
// supervised positions. Invalid positions take part in neither term.

namespace detail {

inline std::vector<std::size_t> valid_positions(std::span<const double> p_hat,
                                                std::span<const double> p,
                                                const std::vector<bool>& valid) {
  require(p_hat.size() == p.size() && p.size() == valid.size(), ErrorCode::shape_mismatch,
          "progress vectors differ in length: p_hat " + std::to_string(p_hat.size()) + ", p " +
              std::to_string(p.size()) + ", valid " + std::to_string(valid.size()));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) idx.push_back(i);
  require(!idx.empty(), ErrorCode::invalid_argument, "no valid progress positions");
  for (std::size_t i : idx)
    require(std::isfinite(p_hat[i]) && std::isfinite(p[i]), ErrorCode::non_finite,
            "non-finite progress value at position " + std::to_string(i));
  return idx;
}

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace detail

inline double progress_loss(std::span<const double> p_hat, std::span<const double> p,
                            const std::vector<bool>& valid) {
  const auto idx = detail::valid_positions(p_hat, p, valid);
  double l1 = 0.0;
  for (std::size_t i : idx) l1 += std::abs(p_hat[i] - p[i]);
  double hinge = 0.0;
  for (std::size_t k = 1; k < idx.size(); ++k)
    hinge += std::max(p_hat[idx[k - 1]] - p_hat[idx[k]], 0.0);
  return l1 + hinge;
}

/// Subgradient of progress_loss with sign(0) = 0 and no hinge contribution at equality.
inline std::vector<double> progress_loss_grad(std::span<const double> p_hat,
                                              std::span<const double> p,
                                              const std::vector<bool>& valid) {
  const auto idx = detail::valid_positions(p_hat, p, valid);
  std::vector<double> grad(p_hat.size(), 0.0);
  for (std::size_t i : idx) grad[i] = detail::sign(p_hat[i] - p[i]);
  for (std::size_t k = 1; k < idx.size(); ++k) {
    const std::size_t a = idx[k - 1];
    const std::size_t b = idx[k];
    if (p_hat[a] > p_hat[b]) {
      grad[a] += 1.0;
      grad[b] -= 1.0;
    }
  }
  return grad;
}

}  // namespace oasalign
