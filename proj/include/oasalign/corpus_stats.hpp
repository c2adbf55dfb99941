#pragma once

// Correlation of per-utterance final OAS with externally measured WER.

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oasalign/error.hpp"

namespace oasalign {

namespace detail {

inline double mean(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

inline void require_paired(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::shape_mismatch,
          "x has " + std::to_string(x.size()) + " values, y has " + std::to_string(y.size()));
  require(x.size() >= 2, ErrorCode::invalid_argument, "need at least two points");
  for (std::size_t i = 0; i < x.size(); ++i)
    require(std::isfinite(x[i]) && std::isfinite(y[i]), ErrorCode::non_finite,
            "non-finite value at index " + std::to_string(i));
}

struct Moments {
  double mean_x, mean_y, sxx, syy, sxy;
};

// Two-pass: means first, then centred sums.
inline Moments centred_moments(std::span<const double> x, std::span<const double> y) {
  require_paired(x, y);
  Moments m{mean(x), mean(y), 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - m.mean_x;
    const double dy = y[i] - m.mean_y;
    m.sxx += dx * dx;
    m.syy += dy * dy;
    m.sxy += dx * dy;
  }
  require(m.sxx > 0.0, ErrorCode::zero_variance, "x has zero variance");
  require(m.syy > 0.0, ErrorCode::zero_variance, "y has zero variance");
  return m;
}

}  // namespace detail

/// Sample Pearson correlation.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  const auto m = detail::centred_moments(x, y);
  return std::clamp(m.sxy / std::sqrt(m.sxx * m.syy), -1.0, 1.0);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y ~ slope * x + intercept.
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  const auto m = detail::centred_moments(x, y);
  LinearFit fit;
  fit.slope = m.sxy / m.sxx;
  fit.intercept = m.mean_y - fit.slope * m.mean_x;
  return fit;
}

struct UtteranceRecord {
  std::string utterance_id;
  double final_oas = 0.0;
  double wer = 0.0;
};

struct CorrReport {
  std::vector<UtteranceRecord> records;  // sorted by utterance_id
  double r = 0.0;
  LinearFit fit;

  double abs_r() const { return std::abs(r); }
  std::size_t n() const { return records.size(); }
};

/// Pure function of the record multiset: records are ordered by id before any arithmetic.
inline CorrReport oas_wer_report(std::vector<UtteranceRecord> records) {
  for (const auto& rec : records) {
    require(std::isfinite(rec.final_oas) && std::isfinite(rec.wer), ErrorCode::non_finite,
            "record '" + rec.utterance_id + "' has a non-finite value");
    require(rec.wer >= 0.0, ErrorCode::invalid_argument,
            "record '" + rec.utterance_id + "' has negative WER");
  }
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.utterance_id < b.utterance_id; });
  auto dup = std::adjacent_find(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return a.utterance_id == b.utterance_id;
  });
  require(dup == records.end(), ErrorCode::duplicate_id,
          dup == records.end() ? "" : "duplicate utterance id '" + dup->utterance_id + "'");

  std::vector<double> x, y;
  for (const auto& rec : records) {
    x.push_back(rec.final_oas);
    y.push_back(rec.wer);
  }
  CorrReport report;
  report.r = pearson(x, y);
  report.fit = linear_fit(x, y);
  report.records = std::move(records);
  return report;
}

inline nlohmann::json corr_report_json(const CorrReport& report) {
  return {{"r", report.r},
          {"abs_r", report.abs_r()},
          {"slope", report.fit.slope},
          {"intercept", report.fit.intercept},
          {"n", report.n()}};
}

inline std::string scatter_tsv(const CorrReport& report) {
  std::ostringstream out;
  out << "utterance_id\tfinal_oas\twer\n";
  for (const auto& rec : report.records)
    out << rec.utterance_id << '\t' << nlohmann::json(rec.final_oas).dump() << '\t'
        << nlohmann::json(rec.wer).dump() << '\n';
  return out.str();
}

}  // namespace oasalign
