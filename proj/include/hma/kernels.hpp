#pragma once

#include <cstddef>
#include <span>

// Dense inner loops behind the differentiable ops. Every kernel exists twice:
// the default (OpenMP-parallel when built with HMA_WITH_OPENMP) and a plain
// serial reference in `serial::` kept for testing and benchmarking. Parallel
// loops only split over independent output rows and each row is reduced in
// the same order as the serial version, so both produce identical bits
// regardless of thread count.
//
// All matrices are row-major. Reductions accumulate in double.
namespace hma::kernels {

// c[b] = a[b] (m x k) * b[b] (k x n)
void matmul_nn(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n);
// c[b] = a[b] (m x k) * b[b]^T, b[b] is (n x k)
void matmul_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n);
// c[b] = a[b]^T * b[b], a[b] is (k x m), b[b] is (k x n)
void matmul_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n);

// Max-subtracted softmax over each row of `cols` values.
void softmax_rows(std::span<const float> x, std::span<float> y, std::size_t rows,
                  std::size_t cols);
// dx = y * (dy - sum(dy * y)) per row.
void softmax_rows_backward(std::span<const float> y, std::span<const float> dy,
                           std::span<float> dx, std::size_t rows, std::size_t cols);

// y = gain * (x - mean) * rstd + bias; writes the normalized values and
// per-row rstd for the backward pass.
void layer_norm_rows(std::span<const float> x, std::span<const float> gain,
                     std::span<const float> bias, std::span<float> y, std::span<float> xhat,
                     std::span<float> rstd, std::size_t rows, std::size_t cols, float eps);
// dx only; gain/bias gradients are column sums done by the caller.
void layer_norm_rows_backward(std::span<const float> xhat, std::span<const float> rstd,
                              std::span<const float> gain, std::span<const float> dy,
                              std::span<float> dx, std::size_t rows, std::size_t cols);

namespace serial {
void matmul_nn(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<const float> x, std::span<float> y, std::size_t rows,
                  std::size_t cols);
void softmax_rows_backward(std::span<const float> y, std::span<const float> dy,
                           std::span<float> dx, std::size_t rows, std::size_t cols);
void layer_norm_rows(std::span<const float> x, std::span<const float> gain,
                     std::span<const float> bias, std::span<float> y, std::span<float> xhat,
                     std::span<float> rstd, std::size_t rows, std::size_t cols, float eps);
void layer_norm_rows_backward(std::span<const float> xhat, std::span<const float> rstd,
                              std::span<const float> gain, std::span<const float> dy,
                              std::span<float> dx, std::size_t rows, std::size_t cols);
}  // namespace serial

// Threads the parallel kernels would use (1 without OpenMP).
int max_threads();

}  // namespace hma::kernels
