#include "fairlab/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fairlab/kernels.hpp"

namespace fairlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column_vector(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw ShapeError("gather_rows index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

void require_congruent(const ParamList& a, const ParamList& b) {
  if (a.size() != b.size()) throw ShapeError("parameter lists differ in length");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols()) {
      throw ShapeError("parameter block " + std::to_string(i) + " shape mismatch");
    }
  }
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.all_finite()) throw NumericError(std::string("non-finite values in ") + what);
}

Gradient zeros_like(const ParamList& params) {
  Gradient g;
  g.reserve(params.size());
  for (const auto& p : params) g.emplace_back(p.rows(), p.cols());
  return g;
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

namespace {

bool use_parallel(std::size_t work) { return kernels::openmp_enabled() && work >= kernels::kParallelThreshold; }

std::string dims(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + dims(a) + " times " + dims(b));
  Matrix out(a.rows(), b.cols());
  const kernels::Dims d{a.rows(), a.cols(), b.cols()};
  if (use_parallel(d.m * d.k * d.n))
    kernels::parallel::gemm(a.data(), b.data(), out.data(), d);
  else
    kernels::serial::gemm(a.data(), b.data(), out.data(), d);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: " + dims(a) + "^T times " + dims(b));
  Matrix out(a.cols(), b.cols());
  const kernels::Dims d{a.cols(), a.rows(), b.cols()};
  if (use_parallel(d.m * d.k * d.n))
    kernels::parallel::gemm_tn(a.data(), b.data(), out.data(), d);
  else
    kernels::serial::gemm_tn(a.data(), b.data(), out.data(), d);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: " + dims(a) + " times " + dims(b) + "^T");
  Matrix out(a.rows(), b.rows());
  const kernels::Dims d{a.rows(), a.cols(), b.rows()};
  if (use_parallel(d.m * d.k * d.n))
    kernels::parallel::gemm_nt(a.data(), b.data(), out.data(), d);
  else
    kernels::serial::gemm_nt(a.data(), b.data(), out.data(), d);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: " + dims(a) + " vs " + dims(b));
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix scaled(const Matrix& a, double s) {
  Matrix out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

void add_row_broadcast(Matrix& m, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != m.cols()) throw ShapeError("broadcast row " + dims(row) + " onto " + dims(m));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto dst = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] += row(0, c);
  }
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += m(r, c);
  return out;
}

Matrix rowwise_softmax(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  if (use_parallel(z.size() * 8))
    kernels::parallel::softmax_rows(z.data(), out.data(), z.rows(), z.cols());
  else
    kernels::serial::softmax_rows(z.data(), out.data(), z.rows(), z.cols());
  return out;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine_angle_deg(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw DomainError("angle with a zero vector is undefined");
  const double c = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

Gradient finite_diff_grad(const ScalarFunction& f, const ParamList& params, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("finite_diff_grad: epsilon must be positive");
  ParamList probe = params;
  Gradient g = zeros_like(params);
  for (std::size_t b = 0; b < probe.size(); ++b) {
    for (std::size_t i = 0; i < probe[b].size(); ++i) {
      double& x = probe[b].data()[i];
      const double saved = x;
      x = saved + epsilon;
      const double up = f(probe);
      x = saved - epsilon;
      const double down = f(probe);
      x = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("finite_diff_grad: non-finite objective");
      g[b].data()[i] = (up - down) / (2.0 * epsilon);
    }
  }
  return g;
}

double relative_error(const Gradient& a, const Gradient& b, double floor) {
  require_congruent(a, b);
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      const double x = a[k].data()[i];
      const double y = b[k].data()[i];
      diff += (x - y) * (x - y);
      na += x * x;
      nb += y * y;
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

}  // namespace fairlab
