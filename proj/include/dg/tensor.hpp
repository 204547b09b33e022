#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace dg {

// Dense row-major tensor of doubles. Rank is usually 1 or 2; a few places
// use flattened (rows = i*n + j) layouts for pair-indexed data.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel()), 0.0);
  }
  Tensor(std::initializer_list<int64_t> s) : Tensor(std::vector<int64_t>(s)) {}

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, double x) {
    Tensor t(std::move(s));
    for (auto& e : t.v) e = x;
    return t;
  }
  static Tensor row3(double x, double y, double z) {
    Tensor t({1, 3});
    t.v = {x, y, z};
    return t;
  }

  int64_t numel() const {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * cols() + j)]; }
  double at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * cols() + j)]; }
  double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  void fill(double x) {
    for (auto& e : v) e = x;
  }

  std::string shape_str() const;
};

// Throws std::runtime_error with the given message when cond is false.
void require(bool cond, const std::string& msg);

bool all_finite(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace dg
