#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "capstag/rng.hpp"
#include "capstag/tensor.hpp"

namespace capstag::testutil {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0,
                            double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = uniform_range(rng, lo, hi);
  return t;
}

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline std::string temp_path(const std::string& name) {
  return std::string("capstag_test_") + name;
}

}  // namespace capstag::testutil
