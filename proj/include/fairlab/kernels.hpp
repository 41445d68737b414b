#pragma once

// Data-parallel inner loops. Every kernel exists twice: a serial reference
// and an OpenMP version. Parallelism is only over independent output rows and
// each output element is accumulated in the same order as the reference, so
// the two are bit-identical for any thread count.

#include <cstddef>
#include <span>

namespace fairlab::kernels {

struct Dims {
  std::size_t m;  // rows of the output
  std::size_t k;  // inner dimension
  std::size_t n;  // cols of the output
};

namespace serial {

// out[m x n] = a[m x k] * b[k x n]
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d);
// out[m x n] = a[k x m]^T * b[k x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d);
// out[m x n] = a[m x k] * b[n x k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d);
void softmax_rows(std::span<const double> z, std::span<double> out, std::size_t rows, std::size_t cols);
// out[p x g] = squared Euclidean distances between rows of probes[p x d] and gallery[g x d]
void sq_distances(std::span<const double> probes, std::span<const double> gallery, std::span<double> out,
                  std::size_t p, std::size_t g, std::size_t d);

}  // namespace serial

namespace parallel {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, Dims d);
void softmax_rows(std::span<const double> z, std::span<double> out, std::size_t rows, std::size_t cols);
void sq_distances(std::span<const double> probes, std::span<const double> gallery, std::span<double> out,
                  std::size_t p, std::size_t g, std::size_t d);

}  // namespace parallel

// Work (multiply-adds) below which the dispatching wrappers stay serial.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

bool openmp_enabled();
int max_threads();

}  // namespace fairlab::kernels
