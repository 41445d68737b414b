#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "fairlab/error.hpp"

namespace fairlab {

// Dense row-major matrix of doubles. Value type; copies are deep.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);
  static Matrix column_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;
  Matrix transposed() const;
  // Rows selected by index, in the given order.
  Matrix gather_rows(std::span<const std::size_t> indices) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Per-parameter gradient blocks, aligned 1:1 with a model's parameter list.
using ParamList = std::vector<Matrix>;
using Gradient = std::vector<Matrix>;

// Throws ShapeError unless the two lists hold matrices of identical shapes.
void require_congruent(const ParamList& a, const ParamList& b);
void require_finite(const Matrix& m, const char* what);

Gradient zeros_like(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

// Product with left-to-right summation over the inner index.
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a b^T without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double s);
// Adds a 1 x cols row to every row of m.
void add_row_broadcast(Matrix& m, const Matrix& row);
// Column sums as a 1 x cols matrix.
Matrix column_sums(const Matrix& m);

// Numerically stable softmax per row (max subtracted first).
Matrix rowwise_softmax(const Matrix& z);
double sigmoid(double z);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// Angle between two vectors in degrees; the cosine is clamped to [-1, 1].
double cosine_angle_deg(std::span<const double> a, std::span<const double> b);

using ScalarFunction = std::function<double(const ParamList&)>;

// Central differences (f(x + eps e_k) - f(x - eps e_k)) / (2 eps) for every coordinate.
Gradient finite_diff_grad(const ScalarFunction& f, const ParamList& params, double epsilon = 1e-6);

// ||a - b|| / max(||a||, ||b||, floor) over all blocks.
double relative_error(const Gradient& a, const Gradient& b, double floor = 1e-10);

}  // namespace fairlab
