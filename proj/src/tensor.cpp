#include "capstag/tensor.hpp"

#include <cmath>

#include "capstag/errors.hpp"

namespace capstag {

std::size_t shape_product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(shape_product(shape), 0.0) {}

Tensor Tensor::full(std::vector<std::size_t> s, double v) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = v;
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data.assign(1, v);
  return t;
}

Tensor Tensor::vec(std::initializer_list<double> xs) {
  Tensor t;
  t.shape = {xs.size()};
  t.data.assign(xs.begin(), xs.end());
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  Tensor t;
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  t.shape = {r, c};
  t.data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix initializer");
    t.data.insert(t.data.end(), row.begin(), row.end());
  }
  return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> s, std::vector<double> d) {
  if (shape_product(s) != d.size())
    throw DimensionError("data length " + std::to_string(d.size()) + " does not fill shape " +
                         capstag::shape_str(s));
  Tensor t;
  t.shape = std::move(s);
  t.data = std::move(d);
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on tensor of shape " + shape_str());
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on tensor of shape " + shape_str());
  return shape[1];
}

bool Tensor::all_finite() const {
  for (double x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str() const { return capstag::shape_str(shape); }

}  // namespace capstag
