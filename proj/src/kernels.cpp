#include "hma/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef HMA_WITH_OPENMP
#include <omp.h>
#endif

namespace hma::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;

#ifdef HMA_WITH_OPENMP
#define HMA_PRAGMA(x) _Pragma(#x)
#define HMA_PARALLEL_FOR(work) HMA_PRAGMA(omp parallel for schedule(static) if ((work) >= kParallelWork))
#else
#define HMA_PARALLEL_FOR(work)
#endif

void softmax_row(const float* x, float* y, std::size_t cols) {
    float mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    thread_local std::vector<double> e;
    e.resize(cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        e[j] = std::exp(static_cast<double>(x[j]) - mx);
        total += e[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < cols; ++j) y[j] = static_cast<float>(e[j] * inv);
}

void softmax_backward_row(const float* y, const float* dy, float* dx, std::size_t cols) {
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += static_cast<double>(dy[j]) * y[j];
    for (std::size_t j = 0; j < cols; ++j) dx[j] = static_cast<float>(y[j] * (dy[j] - dot));
}

void layer_norm_row(const float* x, const float* gain, const float* bias, float* y, float* xhat,
                    float* rstd, std::size_t cols, float eps) {
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += x[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        const double c = x[j] - mean;
        var += c * c;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    *rstd = static_cast<float>(inv);
    for (std::size_t j = 0; j < cols; ++j) {
        const double xh = (x[j] - mean) * inv;
        xhat[j] = static_cast<float>(xh);
        y[j] = static_cast<float>(xh * gain[j] + bias[j]);
    }
}

void layer_norm_backward_row(const float* xhat, float rstd, const float* gain, const float* dy,
                             float* dx, std::size_t cols) {
    // dxhat = dy * gain; dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    double sum_d = 0.0;
    double sum_dx = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        const double d = static_cast<double>(dy[j]) * gain[j];
        sum_d += d;
        sum_dx += d * xhat[j];
    }
    const double n = static_cast<double>(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        const double d = static_cast<double>(dy[j]) * gain[j];
        dx[j] = static_cast<float>(rstd * (d - sum_d / n - xhat[j] * sum_dx / n));
    }
}

// Row r of c from row-major a (k wide) and b (k x n), accumulating over k in
// ascending order.
inline void row_times_matrix(const float* arow, std::size_t a_stride, const float* bmat, float* crow,
                             std::size_t k, std::size_t n, double* acc) {
    std::fill(acc, acc + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p * a_stride];
        const float* brow = bmat + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
}

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 8;

// Up to kTileRows rows of c. Element (i, p) of a is a[i * row_step + p * p_stride].
// Full blocks keep a kTileRows x kTileCols accumulator tile in registers; the
// per-element summation order over p is unchanged.
void rows_times_matrix(const float* a, std::size_t row_step, std::size_t p_stride, const float* bmat,
                       float* c, std::size_t rows, std::size_t k, std::size_t n) {
    if (rows < kTileRows) {
        thread_local std::vector<double> acc;
        acc.resize(n);
        for (std::size_t i = 0; i < rows; ++i)
            row_times_matrix(a + i * row_step, p_stride, bmat, c + i * n, k, n, acc.data());
        return;
    }
    std::size_t j0 = 0;
    for (; j0 + kTileCols <= n; j0 += kTileCols) {
        double t[kTileRows][kTileCols] = {};
        for (std::size_t p = 0; p < k; ++p) {
            const float* bp = bmat + p * n + j0;
            double bv[kTileCols];
            for (std::size_t jj = 0; jj < kTileCols; ++jj) bv[jj] = bp[jj];
            for (std::size_t i = 0; i < kTileRows; ++i) {
                const double av = a[i * row_step + p * p_stride];
                for (std::size_t jj = 0; jj < kTileCols; ++jj) t[i][jj] += av * bv[jj];
            }
        }
        for (std::size_t i = 0; i < kTileRows; ++i)
            for (std::size_t jj = 0; jj < kTileCols; ++jj) c[i * n + j0 + jj] = static_cast<float>(t[i][jj]);
    }
    for (std::size_t i = 0; i < kTileRows; ++i) {
        for (std::size_t j = j0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(a[i * row_step + p * p_stride]) * bmat[p * n + j];
            c[i * n + j] = static_cast<float>(acc);
        }
    }
}

}  // namespace

void matmul_nn(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t per_batch = (m + kTileRows - 1) / kTileRows;
    const auto blocks = static_cast<std::int64_t>(batch * per_batch);
    HMA_PARALLEL_FOR(batch * m * k * n)
    for (std::int64_t blk = 0; blk < blocks; ++blk) {
        const std::size_t bi = static_cast<std::size_t>(blk) / per_batch;
        const std::size_t i0 = static_cast<std::size_t>(blk) % per_batch * kTileRows;
        const std::size_t r0 = bi * m + i0;
        rows_times_matrix(a.data() + r0 * k, k, 1, b.data() + bi * k * n, c.data() + r0 * n,
                          std::min(kTileRows, m - i0), k, n);
    }
}

void matmul_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n) {
    // Transposed copy of b so the inner loop runs over contiguous memory.
    std::vector<float> bt(batch * k * n);
    for (std::size_t bi = 0; bi < batch; ++bi) {
        const float* src = b.data() + bi * n * k;
        float* dst = bt.data() + bi * k * n;
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t p = 0; p < k; ++p) dst[p * n + j] = src[j * k + p];
        }
    }
    matmul_nn(a, bt, c, batch, m, k, n);
}

void matmul_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t per_batch = (m + kTileRows - 1) / kTileRows;
    const auto blocks = static_cast<std::int64_t>(batch * per_batch);
    HMA_PARALLEL_FOR(batch * m * k * n)
    for (std::int64_t blk = 0; blk < blocks; ++blk) {
        const std::size_t bi = static_cast<std::size_t>(blk) / per_batch;
        const std::size_t i0 = static_cast<std::size_t>(blk) % per_batch * kTileRows;
        rows_times_matrix(a.data() + bi * k * m + i0, 1, m, b.data() + bi * k * n,
                          c.data() + (bi * m + i0) * n, std::min(kTileRows, m - i0), k, n);
    }
}

void softmax_rows(std::span<const float> x, std::span<float> y, std::size_t rows,
                  std::size_t cols) {
    HMA_PARALLEL_FOR(rows * cols * 8)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
        softmax_row(x.data() + r * cols, y.data() + r * cols, cols);
    }
}

void softmax_rows_backward(std::span<const float> y, std::span<const float> dy,
                           std::span<float> dx, std::size_t rows, std::size_t cols) {
    HMA_PARALLEL_FOR(rows * cols)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
        softmax_backward_row(y.data() + r * cols, dy.data() + r * cols, dx.data() + r * cols, cols);
    }
}

void layer_norm_rows(std::span<const float> x, std::span<const float> gain,
                     std::span<const float> bias, std::span<float> y, std::span<float> xhat,
                     std::span<float> rstd, std::size_t rows, std::size_t cols, float eps) {
    HMA_PARALLEL_FOR(rows * cols * 4)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
        layer_norm_row(x.data() + r * cols, gain.data(), bias.data(), y.data() + r * cols,
                       xhat.data() + r * cols, rstd.data() + r, cols, eps);
    }
}

void layer_norm_rows_backward(std::span<const float> xhat, std::span<const float> rstd,
                              std::span<const float> gain, std::span<const float> dy,
                              std::span<float> dx, std::size_t rows, std::size_t cols) {
    HMA_PARALLEL_FOR(rows * cols * 4)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
        layer_norm_backward_row(xhat.data() + r * cols, rstd[r], gain.data(), dy.data() + r * cols,
                                dx.data() + r * cols, cols);
    }
}

int max_threads() {
#ifdef HMA_WITH_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace serial {

void matmul_nn(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    acc += static_cast<double>(a[(bi * m + i) * k + p]) * b[(bi * k + p) * n + j];
                }
                c[(bi * m + i) * n + j] = static_cast<float>(acc);
            }
        }
    }
}

void matmul_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    acc += static_cast<double>(a[(bi * m + i) * k + p]) * b[(bi * n + j) * k + p];
                }
                c[(bi * m + i) * n + j] = static_cast<float>(acc);
            }
        }
    }
}

void matmul_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t batch, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    acc += static_cast<double>(a[(bi * k + p) * m + i]) * b[(bi * k + p) * n + j];
                }
                c[(bi * m + i) * n + j] = static_cast<float>(acc);
            }
        }
    }
}

void softmax_rows(std::span<const float> x, std::span<float> y, std::size_t rows,
                  std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) softmax_row(&x[r * cols], &y[r * cols], cols);
}

void softmax_rows_backward(std::span<const float> y, std::span<const float> dy,
                           std::span<float> dx, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        softmax_backward_row(&y[r * cols], &dy[r * cols], &dx[r * cols], cols);
    }
}

void layer_norm_rows(std::span<const float> x, std::span<const float> gain,
                     std::span<const float> bias, std::span<float> y, std::span<float> xhat,
                     std::span<float> rstd, std::size_t rows, std::size_t cols, float eps) {
    for (std::size_t r = 0; r < rows; ++r) {
        layer_norm_row(&x[r * cols], gain.data(), bias.data(), &y[r * cols], &xhat[r * cols],
                       &rstd[r], cols, eps);
    }
}

void layer_norm_rows_backward(std::span<const float> xhat, std::span<const float> rstd,
                              std::span<const float> gain, std::span<const float> dy,
                              std::span<float> dx, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        layer_norm_backward_row(&xhat[r * cols], rstd[r], gain.data(), &dy[r * cols],
                                &dx[r * cols], cols);
    }
}

}  // namespace serial

}  // namespace hma::kernels
