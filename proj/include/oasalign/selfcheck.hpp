#pragma once

// Oracle suites shared by the `selfcheck` subcommand and the acceptance tests:
// exhaustive Viterbi comparison against brute-force enumeration, and central
// finite-difference checks of every analytic gradient.

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oasalign/losses.hpp"
#include "oasalign/viterbi.hpp"

namespace oasalign::selfcheck {

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::size_t instances = 0;
  double worst = 0.0;  // largest observed error for the suite's metric
  double seconds = 0.0;
  std::string detail;
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void record_failure(SuiteResult& r, const std::string& what) {
  if (r.passed) r.detail = what;
  r.passed = false;
}

inline bool is_monotone_path(const AlignmentPath& p, std::size_t rows, std::size_t cols) {
  if (p.indices.size() != rows || p.text_len != cols) return false;
  for (std::size_t i = 0; i < rows; ++i) {
    if (p.indices[i] >= cols) return false;
    if (i > 0 && p.indices[i] != p.indices[i - 1] && p.indices[i] != p.indices[i - 1] + 1)
      return false;
  }
  return true;
}

inline std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// Central difference of f at x along every coordinate.
inline std::vector<double> central_differences(const std::function<double(std::vector<double>&)>& f,
                                               std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = f(x);
    x[k] = saved - h;
    const double down = f(x);
    x[k] = saved;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b||_2 / max(||b||_2, 1e-12)
inline double relative_error(const std::vector<double>& a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += (a[k] - b[k]) * (a[k] - b[k]);
    den += b[k] * b[k];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace detail

struct ViterbiSuiteOptions {
  std::size_t max_rows = 6;
  std::size_t max_cols = 4;
  std::size_t random_per_shape = 25;
  std::size_t ties_per_shape = 25;
  std::uint64_t seed = 20240601;
  double tolerance = 1e-12;
};

/// optimal_path vs brute_force_optimal_path on every shape up to max_rows x max_cols:
/// seeded uniform matrices (score equality), seeded matrices over {0, 0.5, 1} where
/// ties abound and arithmetic is exact (path identity), and every one-hot row
/// pattern (score equality; monotone patterns must score L_s).
inline SuiteResult viterbi_oracle_suite(const ViterbiSuiteOptions& opt = {}) {
  detail::Stopwatch clock;
  SuiteResult r;
  r.name = "viterbi-oracle";
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 2);

  auto check = [&](const Matrix<double>& a, bool require_same_path, const char* family) {
    ++r.instances;
    const auto fast = optimal_path(a);
    const auto slow = brute_force_optimal_path(a);
    if (!detail::is_monotone_path(fast, a.rows(), a.cols())) {
      detail::record_failure(r, std::string(family) + " " + detail::shape_str(a.rows(), a.cols()) +
                                    ": optimal_path returned a non-monotone path");
      return;
    }
    const double diff = std::abs(path_score(a, fast) - path_score(a, slow));
    r.worst = std::max(r.worst, diff);
    if (diff > opt.tolerance)
      detail::record_failure(r, std::string(family) + " " + detail::shape_str(a.rows(), a.cols()) +
                                    ": score differs by " + std::to_string(diff));
    if (require_same_path && fast != slow)
      detail::record_failure(r, std::string(family) + " " + detail::shape_str(a.rows(), a.cols()) +
                                    ": tie resolution differs from the oracle");
  };

  for (std::size_t rows = 1; rows <= opt.max_rows; ++rows) {
    for (std::size_t cols = 1; cols <= opt.max_cols; ++cols) {
      for (std::size_t n = 0; n < opt.random_per_shape; ++n) {
        Matrix<double> a(rows, cols);
        for (double& v : a.values()) v = unit(rng);
        check(a, false, "random");
      }
      for (std::size_t n = 0; n < opt.ties_per_shape; ++n) {
        Matrix<double> a(rows, cols);
        for (double& v : a.values()) v = 0.5 * level(rng);
        check(a, true, "ties");
      }
      // Every assignment of a single 1 per row.
      std::vector<std::size_t> hot(rows, 0);
      while (true) {
        Matrix<double> a(rows, cols, 0.0);
        bool monotone = true;
        for (std::size_t i = 0; i < rows; ++i) {
          a(i, hot[i]) = 1.0;
          if (i > 0 && hot[i] != hot[i - 1] && hot[i] != hot[i - 1] + 1) monotone = false;
        }
        check(a, true, "one-hot");
        if (monotone) {
          const auto p = brute_force_optimal_path(a);
          if (p.indices != hot || path_score(a, p) != static_cast<double>(rows))
            detail::record_failure(r, "one-hot " + detail::shape_str(rows, cols) +
                                          ": monotone pattern not recovered");
        }
        std::size_t i = 0;
        while (i < rows && ++hot[i] == cols) hot[i++] = 0;
        if (i == rows) break;
      }
    }
  }
  r.seconds = clock.seconds();
  return r;
}

struct GradientSuiteOptions {
  std::size_t instances = 100;
  std::uint64_t seed = 7;
  double step = 1e-6;
  double tolerance = 1e-5;
};

/// d(loss)/dA and d(loss)/dZ against central differences of the loss with the path frozen.
inline SuiteResult oas_gradient_suite(const GradientSuiteOptions& opt = {}) {
  detail::Stopwatch clock;
  SuiteResult r;
  r.name = "oas-loss-gradients";
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> rows_dist(1, 8), cols_dist(1, 6);
  std::normal_distribution<double> logit(0.0, 1.0);

  for (std::size_t n = 0; n < opt.instances; ++n) {
    Matrix<double> z(rows_dist(rng), cols_dist(rng));
    for (double& v : z.values()) v = logit(rng);
    const Matrix<double> a = row_softmax(z);
    const AlignmentPath path = oas_loss(a).path;

    // With respect to the probabilities.
    auto loss_of_a = [&](std::vector<double>& flat) {
      return oas_loss_for_path(Matrix<double>(a.rows(), a.cols(), flat), path);
    };
    const auto fd_a = detail::central_differences(
        loss_of_a, {a.values().begin(), a.values().end()}, opt.step);
    const auto grad_a = oas_loss_grad_wrt_A(a, path);
    const double err_a = detail::relative_error(fd_a, grad_a.values());

    // With respect to the logits.
    auto loss_of_z = [&](std::vector<double>& flat) {
      return oas_loss_for_path(row_softmax(Matrix<double>(z.rows(), z.cols(), flat)), path);
    };
    const auto fd_z = detail::central_differences(
        loss_of_z, {z.values().begin(), z.values().end()}, opt.step);
    const auto grad_z = oas_loss_grad_wrt_logits(z, path);
    const double err_z = detail::relative_error(fd_z, grad_z.values());

    // Rows of the logit gradient sum to zero.
    double row_sum_err = 0.0;
    for (std::size_t i = 0; i < grad_z.rows(); ++i) {
      double s = 0.0;
      for (double g : grad_z.row(i)) s += g;
      row_sum_err = std::max(row_sum_err, std::abs(s));
    }

    // A 1-column block has an identically zero logit gradient; compare absolutely there.
    const bool zero_case = z.cols() == 1;
    double fd_z_max = 0.0;
    for (double g : fd_z) fd_z_max = std::max(fd_z_max, std::abs(g));
    const double err = std::max(err_a, zero_case ? fd_z_max : err_z);

    ++r.instances;
    r.worst = std::max(r.worst, err);
    if (err > opt.tolerance || row_sum_err > 1e-12)
      detail::record_failure(r, "instance " + std::to_string(n) + " (" +
                                    detail::shape_str(z.rows(), z.cols()) +
                                    "): rel err dA=" + std::to_string(err_a) +
                                    " dZ=" + std::to_string(err_z));
  }
  r.seconds = clock.seconds();
  return r;
}

/// Progress-loss subgradient against central differences away from every kink.
inline SuiteResult progress_gradient_suite(const GradientSuiteOptions& opt = {}) {
  detail::Stopwatch clock;
  SuiteResult r;
  r.name = "progress-loss-gradients";
  std::mt19937_64 rng(opt.seed ^ 0x5eedULL);
  std::uniform_int_distribution<std::size_t> len_dist(1, 12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution keep(0.6);
  constexpr double margin = 1e-3;

  for (std::size_t n = 0; n < opt.instances; ++n) {
    const std::size_t len = len_dist(rng);
    std::vector<double> p(len), p_hat(len);
    std::vector<bool> valid(len);
    bool away_from_kinks = false;
    while (!away_from_kinks) {
      for (std::size_t i = 0; i < len; ++i) {
        p[i] = unit(rng);
        p_hat[i] = unit(rng);
        valid[i] = keep(rng);
      }
      valid[len_dist(rng) % len] = true;
      std::sort(p.begin(), p.end());
      away_from_kinks = true;
      std::ptrdiff_t prev = -1;
      for (std::size_t i = 0; i < len; ++i) {
        if (!valid[i]) continue;
        if (std::abs(p_hat[i] - p[i]) <= margin) away_from_kinks = false;
        if (prev >= 0 && std::abs(p_hat[static_cast<std::size_t>(prev)] - p_hat[i]) <= margin)
          away_from_kinks = false;
        prev = static_cast<std::ptrdiff_t>(i);
      }
    }
    auto loss = [&](std::vector<double>& x) { return progress_loss(x, p, valid); };
    const auto fd = detail::central_differences(loss, p_hat, opt.step);
    const auto grad = progress_loss_grad(p_hat, p, valid);
    const double err = detail::relative_error(fd, grad);
    ++r.instances;
    r.worst = std::max(r.worst, err);
    if (err > opt.tolerance)
      detail::record_failure(r, "instance " + std::to_string(n) + ": rel err " +
                                    std::to_string(err));
  }
  r.seconds = clock.seconds();
  return r;
}

struct MaskSuiteOptions {
  std::size_t instances = 100;
  std::uint64_t seed = 11;
  double tolerance = 1e-10;
};

/// Under the alignment mask, masked softmax leaves every speech row a distribution
/// over the text span, so the alignment block sums to L_s.
inline SuiteResult mask_normalization_suite(const MaskSuiteOptions& opt = {}) {
  detail::Stopwatch clock;
  SuiteResult r;
  r.name = "mask-normalization";
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> small(0, 4), len(1, 12);
  std::normal_distribution<double> logit(0.0, 3.0);
  for (std::size_t n = 0; n < opt.instances; ++n) {
    SequenceLayout layout;
    layout.text.start = small(rng);
    layout.text.end = layout.text.start + len(rng);
    layout.speech.start = layout.text.end + small(rng);
    layout.speech.end = layout.speech.start + len(rng);
    layout.seq_len = layout.speech.end + small(rng);
    Matrix<double> z(layout.seq_len, layout.seq_len);
    for (double& v : z.values()) v = logit(rng);
    const auto probs = masked_row_softmax(z, alignment_mask(layout));
    const auto block = extract_alignment_submatrix(probs, layout);
    const double err = std::abs(total_sum(block) - static_cast<double>(layout.speech_len()));
    ++r.instances;
    r.worst = std::max(r.worst, err);
    if (err > opt.tolerance)
      detail::record_failure(r, "instance " + std::to_string(n) + ": denominator off by " +
                                    std::to_string(err));
  }
  r.seconds = clock.seconds();
  return r;
}

inline std::string summary_line(const SuiteResult& r) {
  std::ostringstream out;
  out << (r.passed ? "PASS " : "FAIL ") << r.name << " instances=" << r.instances
      << " worst=" << r.worst << " time=" << r.seconds << "s";
  if (!r.passed) out << " :: " << r.detail;
  return out.str();
}

}  // namespace oasalign::selfcheck
