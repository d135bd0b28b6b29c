#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace steprl::nn {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Vectors are 1 x n or n x 1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor column(const std::vector<double>& v) {
    Tensor t(static_cast<int>(v.size()), 1);
    t.data = v;
    return t;
  }

  std::size_t size() const { return data.size(); }
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double item() const {
    if (data.size() != 1) throw std::invalid_argument("item() on a non-scalar tensor");
    return data[0];
  }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
  bool operator==(const Tensor&) const = default;

  std::string shape_str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }
};

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajorMat>;
using ConstMatMap = Eigen::Map<const RowMajorMat>;

inline MatMap as_mat(Tensor& t) { return MatMap(t.data.data(), t.rows, t.cols); }
inline ConstMatMap as_mat(const Tensor& t) { return ConstMatMap(t.data.data(), t.rows, t.cols); }

}  // namespace steprl::nn
