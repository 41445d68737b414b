#include "fairlab/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fairlab::kernels {

namespace {

inline void gemm_row(const double* a, const double* b, double* out, std::size_t k, std::size_t n) {
  std::fill(out, out + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
  }
}

// Row i of a^T b: column i of a against every column of b, summed over rows of a.
inline void gemm_tn_row(const double* a, const double* b, double* out, std::size_t i, Dims d) {
  std::fill(out, out + d.n, 0.0);
  for (std::size_t p = 0; p < d.k; ++p) {
    const double av = a[p * d.m + i];
    const double* brow = b + p * d.n;
    for (std::size_t j = 0; j < d.n; ++j) out[j] += av * brow[j];
  }
}

inline void gemm_nt_row(const double* a, const double* b, double* out, std::size_t k, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += a[p] * brow[p];
    out[j] = s;
  }
}

inline void softmax_row(const double* z, double* out, std::size_t cols) {
  double mx = z[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, z[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = std::exp(z[j] - mx);
    s += out[j];
  }
  for (std::size_t j = 0; j < cols; ++j) out[j] /= s;
}

inline void sq_dist_row(const double* probe, const double* gallery, double* out, std::size_t g, std::size_t d) {
  for (std::size_t j = 0; j < g; ++j) {
    const double* grow = gallery + j * d;
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = probe[c] - grow[c];
      s += diff * diff;
    }
    out[j] = s;
  }
}

}  // namespace

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d) {
  for (std::size_t i = 0; i < d.m; ++i) gemm_row(a.data() + i * d.k, b.data(), out.data() + i * d.n, d.k, d.n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d) {
  for (std::size_t i = 0; i < d.m; ++i) gemm_tn_row(a.data(), b.data(), out.data() + i * d.n, i, d);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d) {
  for (std::size_t i = 0; i < d.m; ++i) gemm_nt_row(a.data() + i * d.k, b.data(), out.data() + i * d.n, d.k, d.n);
}

void softmax_rows(std::span<const double> z, std::span<double> out, std::size_t rows, std::size_t cols) {
  if (cols == 0) return;
  for (std::size_t i = 0; i < rows; ++i) softmax_row(z.data() + i * cols, out.data() + i * cols, cols);
}

void sq_distances(std::span<const double> probes, std::span<const double> gallery, std::span<double> out,
                  std::size_t p, std::size_t g, std::size_t d) {
  for (std::size_t i = 0; i < p; ++i) sq_dist_row(probes.data() + i * d, gallery.data(), out.data() + i * g, g, d);
}

}  // namespace serial

namespace parallel {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d) {
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_row(a.data() + r * d.k, b.data(), out.data() + r * d.n, d.k, d.n);
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d) {
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_tn_row(a.data(), b.data(), out.data() + r * d.n, r, d);
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d) {
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_nt_row(a.data() + r * d.k, b.data(), out.data() + r * d.n, d.k, d.n);
  }
}

void softmax_rows(std::span<const double> z, std::span<double> out, std::size_t rows, std::size_t cols) {
  if (cols == 0) return;
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    softmax_row(z.data() + r * cols, out.data() + r * cols, cols);
  }
}

void sq_distances(std::span<const double> probes, std::span<const double> gallery, std::span<double> out,
                  std::size_t p, std::size_t g, std::size_t d) {
  const auto n = static_cast<std::ptrdiff_t>(p);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    sq_dist_row(probes.data() + r * d, gallery.data(), out.data() + r * g, g, d);
  }
}

}  // namespace parallel

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace fairlab::kernels
