#include "repq/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#ifdef _OPENMP
#define REPQ_OMP_FOR _Pragma("omp parallel for schedule(static)")
#else
#define REPQ_OMP_FOR
#endif

namespace repq::kernels {

namespace {

#ifdef _OPENMP
bool g_parallel = true;
#else
bool g_parallel = false;
#endif

// Index helpers shared by both matmul flavours. The transpose flags describe
// how the operand is stored; `m`/`n`/`k` are always the dimensions of the
// product C[m,n] with inner dimension k.
inline double a_at(const double* a, std::size_t i, std::size_t kk,
                   std::size_t m, std::size_t k, bool trans_a) {
  return trans_a ? a[kk * m + i] : a[i * k + kk];
}

inline double b_at(const double* b, std::size_t kk, std::size_t j,
                   std::size_t n, std::size_t k, bool trans_b) {
  return trans_b ? b[j * k + kk] : b[kk * n + j];
}

// Computes rows [r0, r1) of C with cache-aware loop orders. Every output
// element starts from its prior value (or 0) and accumulates in k-ascending
// order, matching the serial reference bit for bit.
void matmul_rows(const double* a, const double* b, double* c,
                 std::size_t r0, std::size_t r1, std::size_t m, std::size_t n,
                 std::size_t k, bool trans_a, bool trans_b, bool accumulate) {
  for (std::size_t i = r0; i < r1; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    if (!trans_b) {
      // C[i,:] += sum_k op(A)[i,k] * B[k,:] — both inner accesses contiguous.
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = a_at(a, i, kk, m, k, trans_a);
        const double* brow = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    } else {
      // B transposed: row j of the stored B is contiguous, use dot products.
      for (std::size_t j = 0; j < n; ++j) {
        double acc = crow[j];
        const double* brow = b + j * k;
        for (std::size_t kk = 0; kk < k; ++kk)
          acc += a_at(a, i, kk, m, k, trans_a) * brow[kk];
        crow[j] = acc;
      }
    }
  }
}

// Grain sizes below which spawning threads costs more than it saves.
constexpr std::size_t kRowGrain = 4;
constexpr std::size_t kElemGrain = 4096;

inline bool go_parallel(std::size_t work, std::size_t grain) {
#ifdef _OPENMP
  return g_parallel && work >= grain && omp_get_max_threads() > 1;
#else
  (void)work;
  (void)grain;
  return false;
#endif
}

}  // namespace

bool parallel_enabled() { return g_parallel; }

void set_parallel_enabled(bool on) {
#ifdef _OPENMP
  g_parallel = on;
#else
  (void)on;
  g_parallel = false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t n, std::size_t k,
                   bool trans_a, bool trans_b, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t kk = 0; kk < k; ++kk)
        acc += a_at(a, i, kk, m, k, trans_a) * b_at(b, kk, j, n, k, trans_b);
      c[i * n + j] = acc;
    }
  }
}

void matmul_omp(const double* a, const double* b, double* c,
                std::size_t m, std::size_t n, std::size_t k,
                bool trans_a, bool trans_b, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i) {
    const std::size_t row = static_cast<std::size_t>(i);
    matmul_rows(a, b, c, row, row + 1, m, n, k, trans_a, trans_b, accumulate);
  }
#else
  matmul_rows(a, b, c, 0, m, m, n, k, trans_a, trans_b, accumulate);
#endif
}

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t n, std::size_t k,
            bool trans_a, bool trans_b, bool accumulate) {
  if (go_parallel(m, kRowGrain))
    matmul_omp(a, b, c, m, n, k, trans_a, trans_b, accumulate);
  else
    matmul_rows(a, b, c, 0, m, m, n, k, trans_a, trans_b, accumulate);
}

void bmm_serial(const double* a, const double* b, double* c,
                std::size_t batch, std::size_t m, std::size_t n, std::size_t k,
                bool trans_a, bool trans_b, bool accumulate) {
  const std::size_t a_rows = trans_a ? k : m;
  const std::size_t a_cols = trans_a ? m : k;
  const std::size_t b_rows = trans_b ? n : k;
  const std::size_t b_cols = trans_b ? k : n;
  for (std::size_t bi = 0; bi < batch; ++bi) {
    matmul_serial(a + bi * a_rows * a_cols, b + bi * b_rows * b_cols,
                  c + bi * m * n, m, n, k, trans_a, trans_b, accumulate);
  }
}

void bmm_omp(const double* a, const double* b, double* c,
             std::size_t batch, std::size_t m, std::size_t n, std::size_t k,
             bool trans_a, bool trans_b, bool accumulate) {
  const std::size_t a_rows = trans_a ? k : m;
  const std::size_t a_cols = trans_a ? m : k;
  const std::size_t b_rows = trans_b ? n : k;
  const std::size_t b_cols = trans_b ? k : n;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long bi = 0; bi < static_cast<long long>(batch); ++bi) {
    const std::size_t bb = static_cast<std::size_t>(bi);
    matmul_rows(a + bb * a_rows * a_cols, b + bb * b_rows * b_cols,
                c + bb * m * n, 0, m, m, n, k, trans_a, trans_b, accumulate);
  }
}

void bmm(const double* a, const double* b, double* c,
         std::size_t batch, std::size_t m, std::size_t n, std::size_t k,
         bool trans_a, bool trans_b, bool accumulate) {
  if (go_parallel(batch, 2))
    bmm_omp(a, b, c, batch, m, n, k, trans_a, trans_b, accumulate);
  else
    bmm_serial(a, b, c, batch, m, n, k, trans_a, trans_b, accumulate);
}

#define REPQ_ELEMENTWISE(NAME, EXPR)                                         \
  void NAME##_serial(const double* a, const double* b, double* y,            \
                     std::size_t n) {                                        \
    for (std::size_t i = 0; i < n; ++i) y[i] = (EXPR);                      \
  }                                                                          \
  void NAME##_omp(const double* a, const double* b, double* y,              \
                  std::size_t n) {                                           \
    REPQ_OMP_FOR                                                             \
    for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {           \
      const std::size_t i = static_cast<std::size_t>(ii);                    \
      y[i] = (EXPR);                                                         \
    }                                                                        \
  }                                                                          \
  void NAME(const double* a, const double* b, double* y, std::size_t n) {    \
    if (go_parallel(n, kElemGrain))                                          \
      NAME##_omp(a, b, y, n);                                                \
    else                                                                     \
      NAME##_serial(a, b, y, n);                                             \
  }

REPQ_ELEMENTWISE(add, a[i] + b[i])
REPQ_ELEMENTWISE(hadamard, a[i] * b[i])

#undef REPQ_ELEMENTWISE

void axpy_serial(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_omp(double alpha, const double* x, double* y, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    y[i] += alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  if (go_parallel(n, kElemGrain))
    axpy_omp(alpha, x, y, n);
  else
    axpy_serial(alpha, x, y, n);
}

void scale_serial(const double* x, double alpha, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void scale_omp(const double* x, double alpha, double* y, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    y[i] = alpha * x[i];
}

void scale(const double* x, double alpha, double* y, std::size_t n) {
  if (go_parallel(n, kElemGrain))
    scale_omp(x, alpha, y, n);
  else
    scale_serial(x, alpha, y, n);
}

void add_bias_rows_serial(const double* x, const double* bias, double* y,
                          std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j)
      y[r * cols + j] = x[r * cols + j] + bias[j];
}

void add_bias_rows_omp(const double* x, const double* bias, double* y,
                       std::size_t rows, std::size_t cols) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long r = 0; r < static_cast<long long>(rows); ++r)
    for (std::size_t j = 0; j < cols; ++j)
      y[r * cols + j] = x[r * cols + j] + bias[j];
}

void add_bias_rows(const double* x, const double* bias, double* y,
                   std::size_t rows, std::size_t cols) {
  if (go_parallel(rows, kRowGrain))
    add_bias_rows_omp(x, bias, y, rows, cols);
  else
    add_bias_rows_serial(x, bias, y, rows, cols);
}

#define REPQ_ACTIVATION(NAME, EXPR)                                          \
  void NAME##_serial(const double* x, double* y, std::size_t n) {            \
    for (std::size_t i = 0; i < n; ++i) {                                    \
      const double v = x[i];                                                 \
      y[i] = (EXPR);                                                         \
    }                                                                        \
  }                                                                          \
  void NAME##_omp(const double* x, double* y, std::size_t n) {               \
    REPQ_OMP_FOR                                                             \
    for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {           \
      const double v = x[static_cast<std::size_t>(ii)];                      \
      y[static_cast<std::size_t>(ii)] = (EXPR);                              \
    }                                                                        \
  }                                                                          \
  void NAME(const double* x, double* y, std::size_t n) {                     \
    if (go_parallel(n, kElemGrain))                                          \
      NAME##_omp(x, y, n);                                                   \
    else                                                                     \
      NAME##_serial(x, y, n);                                                \
  }

REPQ_ACTIVATION(sigmoid, 1.0 / (1.0 + std::exp(-v)))
REPQ_ACTIVATION(tanh, std::tanh(v))
REPQ_ACTIVATION(relu, v > 0.0 ? v : 0.0)

#undef REPQ_ACTIVATION

namespace {

inline void softmax_row(const double* x, double* y, std::size_t cols) {
  double mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

}  // namespace

void softmax_rows_serial(const double* x, double* y, std::size_t rows,
                         std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    softmax_row(x + r * cols, y + r * cols, cols);
}

void softmax_rows_omp(const double* x, double* y, std::size_t rows,
                      std::size_t cols) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long r = 0; r < static_cast<long long>(rows); ++r)
    softmax_row(x + r * cols, y + r * cols, cols);
}

void softmax_rows(const double* x, double* y, std::size_t rows,
                  std::size_t cols) {
  if (go_parallel(rows, kRowGrain))
    softmax_rows_omp(x, y, rows, cols);
  else
    softmax_rows_serial(x, y, rows, cols);
}

void im2col1d_serial(const double* x, double* out, std::size_t windows,
                     std::size_t len, std::size_t channels,
                     std::size_t kernel) {
  const std::size_t half = kernel / 2;
  for (std::size_t w = 0; w < windows; ++w) {
    for (std::size_t t = 0; t < len; ++t) {
      double* orow = out + (w * len + t) * kernel * channels;
      for (std::size_t tap = 0; tap < kernel; ++tap) {
        const long long src = static_cast<long long>(t) +
                              static_cast<long long>(tap) -
                              static_cast<long long>(half);
        double* dst = orow + tap * channels;
        if (src < 0 || src >= static_cast<long long>(len)) {
          std::fill(dst, dst + channels, 0.0);
        } else {
          const double* srow = x + (w * len + static_cast<std::size_t>(src)) *
                                       channels;
          std::copy(srow, srow + channels, dst);
        }
      }
    }
  }
}

void im2col1d_omp(const double* x, double* out, std::size_t windows,
                  std::size_t len, std::size_t channels, std::size_t kernel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long w = 0; w < static_cast<long long>(windows); ++w)
    im2col1d_serial(x + static_cast<std::size_t>(w) * len * channels,
                    out + static_cast<std::size_t>(w) * len * kernel * channels,
                    1, len, channels, kernel);
}

void im2col1d(const double* x, double* out, std::size_t windows,
              std::size_t len, std::size_t channels, std::size_t kernel) {
  if (go_parallel(windows, 2))
    im2col1d_omp(x, out, windows, len, channels, kernel);
  else
    im2col1d_serial(x, out, windows, len, channels, kernel);
}

namespace {

// Gathers every patch-gradient contribution for one destination sample
// (window w, time t). Tap-ascending order keeps serial and parallel
// accumulation bit-identical.
inline void col2im_row(const double* dout, double* dx, std::size_t w,
                       std::size_t t, std::size_t len, std::size_t channels,
                       std::size_t kernel) {
  const std::size_t half = kernel / 2;
  double* drow = dx + (w * len + t) * channels;
  for (std::size_t tap = 0; tap < kernel; ++tap) {
    // Patch row `pt` copied this sample at tap index `tap` iff
    // pt + tap - half == t.
    const long long pt = static_cast<long long>(t) +
                         static_cast<long long>(half) -
                         static_cast<long long>(tap);
    if (pt < 0 || pt >= static_cast<long long>(len)) continue;
    const double* srow = dout + (w * len + static_cast<std::size_t>(pt)) *
                                    kernel * channels +
                         tap * channels;
    for (std::size_t c = 0; c < channels; ++c) drow[c] += srow[c];
  }
}

}  // namespace

void col2im1d_serial(const double* dout, double* dx, std::size_t windows,
                     std::size_t len, std::size_t channels,
                     std::size_t kernel) {
  for (std::size_t w = 0; w < windows; ++w)
    for (std::size_t t = 0; t < len; ++t)
      col2im_row(dout, dx, w, t, len, channels, kernel);
}

void col2im1d_omp(const double* dout, double* dx, std::size_t windows,
                  std::size_t len, std::size_t channels, std::size_t kernel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long r = 0; r < static_cast<long long>(windows * len); ++r) {
    const std::size_t row = static_cast<std::size_t>(r);
    col2im_row(dout, dx, row / len, row % len, len, channels, kernel);
  }
}

void col2im1d(const double* dout, double* dx, std::size_t windows,
              std::size_t len, std::size_t channels, std::size_t kernel) {
  if (go_parallel(windows * len, kRowGrain))
    col2im1d_omp(dout, dx, windows, len, channels, kernel);
  else
    col2im1d_serial(dout, dx, windows, len, channels, kernel);
}

namespace {

inline void maxpool_window(const double* x, double* y, std::int32_t* argmax,
                           std::size_t w, std::size_t len,
                           std::size_t channels) {
  const std::size_t out_len = len / 2;
  for (std::size_t t = 0; t < out_len; ++t) {
    const std::size_t i0 = w * len + 2 * t;
    const double* r0 = x + i0 * channels;
    const double* r1 = x + (i0 + 1) * channels;
    double* yrow = y + (w * out_len + t) * channels;
    std::int32_t* arow = argmax + (w * out_len + t) * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      if (r1[c] > r0[c]) {
        yrow[c] = r1[c];
        arow[c] = static_cast<std::int32_t>(i0 + 1);
      } else {
        yrow[c] = r0[c];
        arow[c] = static_cast<std::int32_t>(i0);
      }
    }
  }
}

}  // namespace

void maxpool1d_serial(const double* x, double* y, std::int32_t* argmax,
                      std::size_t windows, std::size_t len,
                      std::size_t channels) {
  for (std::size_t w = 0; w < windows; ++w)
    maxpool_window(x, y, argmax, w, len, channels);
}

void maxpool1d_omp(const double* x, double* y, std::int32_t* argmax,
                   std::size_t windows, std::size_t len,
                   std::size_t channels) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long w = 0; w < static_cast<long long>(windows); ++w)
    maxpool_window(x, y, argmax, static_cast<std::size_t>(w), len, channels);
}

void maxpool1d(const double* x, double* y, std::int32_t* argmax,
               std::size_t windows, std::size_t len, std::size_t channels) {
  if (go_parallel(windows, 2))
    maxpool1d_omp(x, y, argmax, windows, len, channels);
  else
    maxpool1d_serial(x, y, argmax, windows, len, channels);
}

}  // namespace repq::kernels
