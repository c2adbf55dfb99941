#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "oasalign/matrix.hpp"

namespace oasalign::testing {

inline Matrix<double> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                    double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix<double> m(rows, cols);
  for (double& v : m.values()) v = u(rng);
  return m;
}

inline Matrix<double> random_row_stochastic(std::size_t rows, std::size_t cols,
                                            std::mt19937_64& rng) {
  auto m = random_matrix(rows, cols, rng, 0.01, 1.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v;
    for (double& v : m.row(i)) v /= s;
  }
  return m;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("oasalign_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace oasalign::testing
