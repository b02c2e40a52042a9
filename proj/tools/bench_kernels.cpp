// Benchmarks the OpenMP kernel flavours against their serial references.
//
// Every kernel pair is required to be bit-identical (the OpenMP variants own
// whole output rows and accumulate in the reference order), so the benchmark
// doubles as a cheap correctness sweep: any byte difference aborts the run.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#include "CLI11.hpp"
#include "repq/kernels.hpp"

namespace k = repq::kernels;

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <typename F>
double time_best_of(int iters, F&& fn) {
  double best = 1e300;
  for (int i = 0; i < iters; ++i) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double omp_ms, bool identical) {
  std::printf("%-22s %10.3f ms %10.3f ms %8.2fx   %s\n", name, serial_ms,
              omp_ms, serial_ms / omp_ms, identical ? "bit-identical" : "MISMATCH");
  if (!identical) {
    std::fprintf(stderr, "%s: serial and OpenMP outputs differ\n", name);
    std::exit(1);
  }
}

bool same_bytes(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial vs OpenMP kernel benchmark"};
  std::size_t dim = 384;
  int iters = 5;
  std::uint64_t seed = 1;
  app.add_option("--dim", dim, "Square matrix dimension")->check(CLI::PositiveNumber);
  app.add_option("--iters", iters, "Timing repetitions (best is reported)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Input RNG seed");
  CLI11_PARSE(app, argc, argv);

  std::mt19937_64 rng(seed);
  std::printf("threads available: %d\n\n", k::max_threads());
  std::printf("%-22s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  // matmul: dim x dim square product.
  {
    const auto a = random_vec(dim * dim, rng), b = random_vec(dim * dim, rng);
    std::vector<double> cs(dim * dim), cp(dim * dim);
    const double ts = time_best_of(iters, [&] {
      k::matmul_serial(a.data(), b.data(), cs.data(), dim, dim, dim, false,
                       false, false);
    });
    const double tp = time_best_of(iters, [&] {
      k::matmul_omp(a.data(), b.data(), cp.data(), dim, dim, dim, false, false,
                    false);
    });
    report("matmul", ts, tp, same_bytes(cs, cp));
  }

  // bmm: 16 batched square products at dim/4.
  {
    const std::size_t batch = 16, d = std::max<std::size_t>(dim / 4, 8);
    const auto a = random_vec(batch * d * d, rng),
               b = random_vec(batch * d * d, rng);
    std::vector<double> cs(batch * d * d), cp(batch * d * d);
    const double ts = time_best_of(iters, [&] {
      k::bmm_serial(a.data(), b.data(), cs.data(), batch, d, d, d, false,
                    false, false);
    });
    const double tp = time_best_of(iters, [&] {
      k::bmm_omp(a.data(), b.data(), cp.data(), batch, d, d, d, false, false,
                 false);
    });
    report("bmm (batch 16)", ts, tp, same_bytes(cs, cp));
  }

  // softmax over rows.
  {
    const auto x = random_vec(dim * dim, rng);
    std::vector<double> ys(dim * dim), yp(dim * dim);
    const double ts = time_best_of(
        iters, [&] { k::softmax_rows_serial(x.data(), ys.data(), dim, dim); });
    const double tp = time_best_of(
        iters, [&] { k::softmax_rows_omp(x.data(), yp.data(), dim, dim); });
    report("softmax_rows", ts, tp, same_bytes(ys, yp));
  }

  // im2col over a long 6-channel signal.
  {
    const std::size_t windows = dim, len = 128, channels = 6, kernel = 5;
    const auto x = random_vec(windows * len * channels, rng);
    // Same-padding: one patch row per input sample.
    std::vector<double> os(windows * len * channels * kernel),
        op(windows * len * channels * kernel);
    const double ts = time_best_of(iters, [&] {
      k::im2col1d_serial(x.data(), os.data(), windows, len, channels, kernel);
    });
    const double tp = time_best_of(iters, [&] {
      k::im2col1d_omp(x.data(), op.data(), windows, len, channels, kernel);
    });
    report("im2col1d", ts, tp, same_bytes(os, op));
  }

  // Elementwise tanh, the heaviest pointwise op in the LSTM.
  {
    const std::size_t n = dim * dim * 4;
    const auto x = random_vec(n, rng);
    std::vector<double> ys(n), yp(n);
    const double ts =
        time_best_of(iters, [&] { k::tanh_serial(x.data(), ys.data(), n); });
    const double tp =
        time_best_of(iters, [&] { k::tanh_omp(x.data(), yp.data(), n); });
    report("tanh", ts, tp, same_bytes(ys, yp));
  }

  return 0;
}
