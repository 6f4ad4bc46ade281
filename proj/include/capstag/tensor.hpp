#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace capstag {

// Dense row-major tensor of doubles. Rank 0 (shape {}) is a scalar with one
// element; storage is always product(shape) values.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::size_t> s, double v);
  static Tensor scalar(double v);
  static Tensor vec(std::initializer_list<double> xs);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor from_data(std::vector<std::size_t> s, std::vector<double> d);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t i) { return data[i]; }
  double operator()(std::size_t i) const { return data[i]; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols_unchecked() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols_unchecked() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::size_t cols_unchecked() const { return shape.back(); }
};

std::string shape_str(const std::vector<std::size_t>& s);
std::size_t shape_product(const std::vector<std::size_t>& s);

}  // namespace capstag
