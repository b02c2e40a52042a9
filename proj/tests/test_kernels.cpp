#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "repq/kernels.hpp"

using namespace repq;

namespace {

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * u01(rng) - 1.0;
  return v;
}

// Independent dense product: materialise the transposed operands, then run a
// plain ijk loop. Deliberately structured differently from the library.
std::vector<double> reference_product(const std::vector<double>& a,
                                      const std::vector<double>& b,
                                      std::size_t m, std::size_t n,
                                      std::size_t k, bool trans_a,
                                      bool trans_b) {
  std::vector<double> at(m * k), bt(k * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t kk = 0; kk < k; ++kk)
      at[i * k + kk] = trans_a ? a[kk * m + i] : a[i * k + kk];
  for (std::size_t kk = 0; kk < k; ++kk)
    for (std::size_t j = 0; j < n; ++j)
      bt[kk * n + j] = trans_b ? b[j * k + kk] : b[kk * n + j];
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t kk = 0; kk < k; ++kk)
        c[i * n + j] += at[i * k + kk] * bt[kk * n + j];
  return c;
}

}  // namespace

TEST_CASE("matmul matches an independent reference for all transpose modes") {
  std::mt19937_64 rng(11);
  const std::size_t m = 7, n = 5, k = 9;
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      CAPTURE(ta);
      CAPTURE(tb);
      auto a = random_vec(m * k, rng);
      auto b = random_vec(k * n, rng);
      auto want = reference_product(a, b, m, n, k, ta, tb);
      std::vector<double> got(m * n, -99.0);
      kernels::matmul(a.data(), b.data(), got.data(), m, n, k, ta, tb, false);
      for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(std::abs(got[i] - want[i]) <= 1e-12);
    }
  }
}

TEST_CASE("matmul hand example") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  std::vector<double> c(4, 0.0);
  kernels::matmul(a.data(), b.data(), c.data(), 2, 2, 2, false, false, false);
  CHECK(c == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul accumulate adds onto the existing output") {
  const std::vector<double> a{1, 0, 0, 1}, b{2, 3, 4, 5};
  std::vector<double> c{10, 10, 10, 10};
  kernels::matmul(a.data(), b.data(), c.data(), 2, 2, 2, false, false, true);
  CHECK(c == std::vector<double>{12, 13, 14, 15});
}

TEST_CASE("serial and parallel matmul are bit-identical") {
  std::mt19937_64 rng(23);
  const std::size_t m = 33, n = 17, k = 29;
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      auto a = random_vec(m * k, rng);
      auto b = random_vec(k * n, rng);
      std::vector<double> cs(m * n), cp(m * n);
      kernels::matmul_serial(a.data(), b.data(), cs.data(), m, n, k, ta, tb,
                             false);
      kernels::matmul_omp(a.data(), b.data(), cp.data(), m, n, k, ta, tb,
                          false);
      CHECK(std::memcmp(cs.data(), cp.data(), m * n * sizeof(double)) == 0);

      // Accumulating variant, starting from the same non-trivial state.
      auto seed = random_vec(m * n, rng);
      auto cs2 = seed;
      auto cp2 = seed;
      kernels::matmul_serial(a.data(), b.data(), cs2.data(), m, n, k, ta, tb,
                             true);
      kernels::matmul_omp(a.data(), b.data(), cp2.data(), m, n, k, ta, tb,
                          true);
      CHECK(std::memcmp(cs2.data(), cp2.data(), m * n * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("dispatch toggle changes nothing bit-wise") {
  std::mt19937_64 rng(31);
  const std::size_t m = 40, n = 24, k = 56;
  auto a = random_vec(m * k, rng);
  auto b = random_vec(k * n, rng);
  const bool saved = kernels::parallel_enabled();
  std::vector<double> on(m * n), off(m * n);
  kernels::set_parallel_enabled(true);
  kernels::matmul(a.data(), b.data(), on.data(), m, n, k, false, false, false);
  kernels::set_parallel_enabled(false);
  kernels::matmul(a.data(), b.data(), off.data(), m, n, k, false, false,
                  false);
  kernels::set_parallel_enabled(saved);
  CHECK(std::memcmp(on.data(), off.data(), m * n * sizeof(double)) == 0);
}

TEST_CASE("bmm equals a loop of matmuls and its omp flavour bit-matches") {
  std::mt19937_64 rng(37);
  const std::size_t batch = 5, m = 4, n = 6, k = 3;
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      auto a = random_vec(batch * m * k, rng);
      auto b = random_vec(batch * k * n, rng);
      std::vector<double> got(batch * m * n);
      kernels::bmm(a.data(), b.data(), got.data(), batch, m, n, k, ta, tb,
                   false);
      for (std::size_t bi = 0; bi < batch; ++bi) {
        std::vector<double> ab(a.begin() + bi * m * k,
                               a.begin() + (bi + 1) * m * k);
        std::vector<double> bb(b.begin() + bi * k * n,
                               b.begin() + (bi + 1) * k * n);
        auto want = reference_product(ab, bb, m, n, k, ta, tb);
        for (std::size_t i = 0; i < want.size(); ++i)
          CHECK(std::abs(got[bi * m * n + i] - want[i]) <= 1e-12);
      }
      std::vector<double> cs(batch * m * n), cp(batch * m * n);
      kernels::bmm_serial(a.data(), b.data(), cs.data(), batch, m, n, k, ta,
                          tb, false);
      kernels::bmm_omp(a.data(), b.data(), cp.data(), batch, m, n, k, ta, tb,
                       false);
      CHECK(std::memcmp(cs.data(), cp.data(), cs.size() * sizeof(double)) ==
            0);
    }
  }
}

TEST_CASE("elementwise kernels match std reference and their omp flavours") {
  std::mt19937_64 rng(41);
  const std::size_t n = 1001;
  auto a = random_vec(n, rng);
  auto b = random_vec(n, rng);
  std::vector<double> y(n), y2(n);

  kernels::add(a.data(), b.data(), y.data(), n);
  kernels::add_omp(a.data(), b.data(), y2.data(), n);
  for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == a[i] + b[i]);
  CHECK(std::memcmp(y.data(), y2.data(), n * sizeof(double)) == 0);

  kernels::hadamard(a.data(), b.data(), y.data(), n);
  for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == a[i] * b[i]);

  kernels::scale(a.data(), -2.5, y.data(), n);
  for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == -2.5 * a[i]);

  auto acc = b;
  kernels::axpy(0.5, a.data(), acc.data(), n);
  for (std::size_t i = 0; i < n; ++i) CHECK(acc[i] == b[i] + 0.5 * a[i]);

  kernels::sigmoid(a.data(), y.data(), n);
  kernels::sigmoid_omp(a.data(), y2.data(), n);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(std::abs(y[i] - 1.0 / (1.0 + std::exp(-a[i]))) <= 1e-15);
  CHECK(std::memcmp(y.data(), y2.data(), n * sizeof(double)) == 0);

  kernels::tanh(a.data(), y.data(), n);
  for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == std::tanh(a[i]));

  kernels::relu(a.data(), y.data(), n);
  for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == (a[i] > 0 ? a[i] : 0.0));
}

TEST_CASE("add_bias_rows broadcasts over rows") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};  // 2 x 3
  const std::vector<double> bias{10, 20, 30};
  std::vector<double> y(6);
  kernels::add_bias_rows(x.data(), bias.data(), y.data(), 2, 3);
  CHECK(y == std::vector<double>{11, 22, 33, 14, 25, 36});
}

TEST_CASE("softmax rows: normalisation, shift invariance, large inputs") {
  std::mt19937_64 rng(43);
  const std::size_t rows = 9, cols = 13;
  auto x = random_vec(rows * cols, rng);
  for (double& v : x) v *= 10.0;
  std::vector<double> y(rows * cols), ys(rows * cols);
  kernels::softmax_rows(x.data(), y.data(), rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      CHECK(y[r * cols + j] >= 0.0);
      sum += y[r * cols + j];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }

  // Adding a per-row constant leaves the distribution unchanged.
  auto shifted = x;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) shifted[r * cols + j] += 123.0;
  kernels::softmax_rows(shifted.data(), ys.data(), rows, cols);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(std::abs(y[i] - ys[i]) <= 1e-12);

  // Max subtraction keeps huge logits finite.
  std::vector<double> big{1000.0, 999.0, 0.0};
  std::vector<double> by(3);
  kernels::softmax_rows(big.data(), by.data(), 1, 3);
  CHECK(std::isfinite(by[0]));
  CHECK(std::abs(by[0] + by[1] + by[2] - 1.0) <= 1e-12);
  CHECK(by[0] > by[1]);
  CHECK(by[2] <= 1e-300);

  kernels::softmax_rows_serial(x.data(), y.data(), rows, cols);
  kernels::softmax_rows_omp(x.data(), ys.data(), rows, cols);
  CHECK(std::memcmp(y.data(), ys.data(), y.size() * sizeof(double)) == 0);
}

TEST_CASE("im2col unrolls same-padded patches per window") {
  // One window, length 4, one channel, kernel 3: row t holds
  // [x[t-1], x[t], x[t+1]] with zeros beyond the edges.
  const std::vector<double> x{1, 2, 3, 4};
  std::vector<double> out(4 * 3);
  kernels::im2col1d(x.data(), out.data(), 1, 4, 1, 3);
  CHECK(out == std::vector<double>{0, 1, 2, 1, 2, 3, 2, 3, 4, 3, 4, 0});

  // Two windows must not bleed into each other.
  const std::vector<double> x2{1, 2, 3, 10, 20, 30};
  std::vector<double> out2(6 * 3);
  kernels::im2col1d(x2.data(), out2.data(), 2, 3, 1, 3);
  CHECK(out2 == std::vector<double>{0, 1, 2, 1, 2, 3, 2, 3, 0,
                                    0, 10, 20, 10, 20, 30, 20, 30, 0});
}

TEST_CASE("im2col with channels interleaves taps channel-major") {
  // Length 2, two channels; patch layout is [tap0 ch0, tap0 ch1, tap1 ch0, ...]
  const std::vector<double> x{1, 10, 2, 20};
  std::vector<double> out(2 * 3 * 2);
  kernels::im2col1d(x.data(), out.data(), 1, 2, 2, 3);
  CHECK(out == std::vector<double>{0, 0, 1, 10, 2, 20,
                                   1, 10, 2, 20, 0, 0});
}

TEST_CASE("col2im is the adjoint of im2col") {
  std::mt19937_64 rng(47);
  const std::size_t windows = 3, len = 8, channels = 4, kernel = 5;
  auto x = random_vec(windows * len * channels, rng);
  auto g = random_vec(windows * len * kernel * channels, rng);
  std::vector<double> xe(g.size());
  kernels::im2col1d(x.data(), xe.data(), windows, len, channels, kernel);
  std::vector<double> xg(x.size(), 0.0);
  kernels::col2im1d(g.data(), xg.data(), windows, len, channels, kernel);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) lhs += xe[i] * g[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * xg[i];
  CHECK(std::abs(lhs - rhs) <= 1e-10);

  std::vector<double> xg2(x.size(), 0.0);
  kernels::col2im1d_serial(g.data(), xg2.data(), windows, len, channels,
                           kernel);
  std::vector<double> xg3(x.size(), 0.0);
  kernels::col2im1d_omp(g.data(), xg3.data(), windows, len, channels, kernel);
  CHECK(std::memcmp(xg2.data(), xg3.data(), xg2.size() * sizeof(double)) == 0);
}

TEST_CASE("maxpool keeps pair maxima, records sources, drops odd tails") {
  // One window, length 5, one channel: pairs (3,1), (4,4) -> tie keeps the
  // earlier sample; the dangling 9 is dropped.
  const std::vector<double> x{3, 1, 4, 4, 9};
  std::vector<double> y(2);
  std::vector<std::int32_t> arg(2);
  kernels::maxpool1d(x.data(), y.data(), arg.data(), 1, 5, 1);
  CHECK(y == std::vector<double>{3, 4});
  CHECK(arg == std::vector<std::int32_t>{0, 2});

  // Channels pool independently.
  const std::vector<double> x2{1, 8, 5, 2};  // rows: [1,8], [5,2]
  std::vector<double> y2(2);
  std::vector<std::int32_t> arg2(2);
  kernels::maxpool1d(x2.data(), y2.data(), arg2.data(), 1, 2, 2);
  CHECK(y2 == std::vector<double>{5, 8});
  CHECK(arg2 == std::vector<std::int32_t>{1, 0});
}

TEST_CASE("maxpool serial and omp agree bit-wise") {
  std::mt19937_64 rng(53);
  const std::size_t windows = 4, len = 10, channels = 3;
  auto x = random_vec(windows * len * channels, rng);
  const std::size_t out = windows * (len / 2) * channels;
  std::vector<double> ys(out), yp(out);
  std::vector<std::int32_t> as(out), ap(out);
  kernels::maxpool1d_serial(x.data(), ys.data(), as.data(), windows, len,
                            channels);
  kernels::maxpool1d_omp(x.data(), yp.data(), ap.data(), windows, len,
                         channels);
  CHECK(std::memcmp(ys.data(), yp.data(), out * sizeof(double)) == 0);
  CHECK(as == ap);
}
