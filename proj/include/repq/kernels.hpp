#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

// Dense numeric kernels behind the tensor layer. Every kernel comes in two
// flavours: a deliberately naive serial reference (`*_serial`) that states the
// arithmetic as plainly as possible, and an OpenMP variant (`*_omp`) that
// parallelises over output rows. Each output element is owned by exactly one
// thread and accumulated in the same (k-ascending) order as the reference, so
// the two flavours produce bit-identical results for any thread count. The
// unsuffixed entry points dispatch on `parallel_enabled()`.
//
// All matrices are dense row-major doubles.

namespace repq::kernels {

// Process-wide toggle for the OpenMP paths. Defaults to true when compiled
// with OpenMP support, false otherwise. Flipping it never changes results,
// only which implementation computes them.
bool parallel_enabled();
void set_parallel_enabled(bool on);

// Number of threads the OpenMP paths would use (1 without OpenMP).
int max_threads();

// C[M,N] = op(A) * op(B) (+ C when `accumulate`), where op transposes when
// the corresponding flag is set. A is [M,K] (or [K,M] when trans_a), B is
// [K,N] (or [N,K] when trans_b).
void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t n, std::size_t k,
                   bool trans_a, bool trans_b, bool accumulate);
void matmul_omp(const double* a, const double* b, double* c,
                std::size_t m, std::size_t n, std::size_t k,
                bool trans_a, bool trans_b, bool accumulate);
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t n, std::size_t k,
            bool trans_a, bool trans_b, bool accumulate);

// Batched matmul: `batch` independent [M,K]x[K,N] products stored back to
// back, i.e. A is [batch*M, K], B is [batch*K, N], C is [batch*M, N]
// (dimensions swap per the transpose flags exactly as in matmul).
void bmm_serial(const double* a, const double* b, double* c,
                std::size_t batch, std::size_t m, std::size_t n, std::size_t k,
                bool trans_a, bool trans_b, bool accumulate);
void bmm_omp(const double* a, const double* b, double* c,
             std::size_t batch, std::size_t m, std::size_t n, std::size_t k,
             bool trans_a, bool trans_b, bool accumulate);
void bmm(const double* a, const double* b, double* c,
         std::size_t batch, std::size_t m, std::size_t n, std::size_t k,
         bool trans_a, bool trans_b, bool accumulate);

// Elementwise y = a + b.
void add_serial(const double* a, const double* b, double* y, std::size_t n);
void add_omp(const double* a, const double* b, double* y, std::size_t n);
void add(const double* a, const double* b, double* y, std::size_t n);

// y += alpha * x (gradient accumulation workhorse).
void axpy_serial(double alpha, const double* x, double* y, std::size_t n);
void axpy_omp(double alpha, const double* x, double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

// Elementwise y = a .* b.
void hadamard_serial(const double* a, const double* b, double* y, std::size_t n);
void hadamard_omp(const double* a, const double* b, double* y, std::size_t n);
void hadamard(const double* a, const double* b, double* y, std::size_t n);

// y = alpha * x.
void scale_serial(const double* x, double alpha, double* y, std::size_t n);
void scale_omp(const double* x, double alpha, double* y, std::size_t n);
void scale(const double* x, double alpha, double* y, std::size_t n);

// y[r, :] = x[r, :] + bias for every row.
void add_bias_rows_serial(const double* x, const double* bias, double* y,
                          std::size_t rows, std::size_t cols);
void add_bias_rows_omp(const double* x, const double* bias, double* y,
                       std::size_t rows, std::size_t cols);
void add_bias_rows(const double* x, const double* bias, double* y,
                   std::size_t rows, std::size_t cols);

// Activations, elementwise over n values.
void sigmoid_serial(const double* x, double* y, std::size_t n);
void sigmoid_omp(const double* x, double* y, std::size_t n);
void sigmoid(const double* x, double* y, std::size_t n);

void tanh_serial(const double* x, double* y, std::size_t n);
void tanh_omp(const double* x, double* y, std::size_t n);
void tanh(const double* x, double* y, std::size_t n);

void relu_serial(const double* x, double* y, std::size_t n);
void relu_omp(const double* x, double* y, std::size_t n);
void relu(const double* x, double* y, std::size_t n);

// Row-wise softmax with max subtraction for stability.
void softmax_rows_serial(const double* x, double* y, std::size_t rows,
                         std::size_t cols);
void softmax_rows_omp(const double* x, double* y, std::size_t rows,
                      std::size_t cols);
void softmax_rows(const double* x, double* y, std::size_t rows,
                  std::size_t cols);

// Unrolls `windows` independent 1-D sequences of length `len` with `channels`
// channels (input rows ordered window-major: row w*len + t) into convolution
// patches: out[w*len + t, tap*channels + c] = x[w*len + t + tap - kernel/2, c],
// zero when the tap falls outside the window. Same-padding, stride 1, odd
// `kernel`. A full convolution is then a single [rows, kernel*channels] x
// [kernel*channels, out_channels] matmul.
void im2col1d_serial(const double* x, double* out, std::size_t windows,
                     std::size_t len, std::size_t channels, std::size_t kernel);
void im2col1d_omp(const double* x, double* out, std::size_t windows,
                  std::size_t len, std::size_t channels, std::size_t kernel);
void im2col1d(const double* x, double* out, std::size_t windows,
              std::size_t len, std::size_t channels, std::size_t kernel);

// Transpose of im2col1d: scatter-adds patch gradients back onto dx
// (dx must be zero-initialised by the caller; the kernel accumulates).
void col2im1d_serial(const double* dout, double* dx, std::size_t windows,
                     std::size_t len, std::size_t channels, std::size_t kernel);
void col2im1d_omp(const double* dout, double* dx, std::size_t windows,
                  std::size_t len, std::size_t channels, std::size_t kernel);
void col2im1d(const double* dout, double* dx, std::size_t windows,
              std::size_t len, std::size_t channels, std::size_t kernel);

// Max pooling with width 2 and stride 2 along time, per window and channel.
// Input rows are window-major [windows*len, channels]; output has
// floor(len/2) time steps per window. `argmax` (same shape as the output)
// records the winning input row for each output element so the backward pass
// can route gradients; ties resolve to the earlier sample.
void maxpool1d_serial(const double* x, double* y, std::int32_t* argmax,
                      std::size_t windows, std::size_t len,
                      std::size_t channels);
void maxpool1d_omp(const double* x, double* y, std::int32_t* argmax,
                   std::size_t windows, std::size_t len, std::size_t channels);
void maxpool1d(const double* x, double* y, std::int32_t* argmax,
               std::size_t windows, std::size_t len, std::size_t channels);

}  // namespace repq::kernels
