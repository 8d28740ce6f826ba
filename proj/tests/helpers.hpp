#pragma once

#include "hrg/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace testing {

template <typename Scalar = float>
hrg::Tensor<Scalar> random_tensor(const hrg::Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  hrg::Tensor<Scalar> t(s);
  for (hrg::Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(u(rng));
  return t;
}

template <typename Scalar>
double max_abs_diff(const hrg::Tensor<Scalar>& a, const hrg::Tensor<Scalar>& b) {
  return (a.values().template cast<double>() - b.values().template cast<double>()).cwiseAbs().maxCoeff();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("hrg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
