#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "repq/errors.hpp"
#include "repq/filter.hpp"

using namespace repq;

namespace {

// Single-bin DFT projection; exact amplitude recovery when the tone
// frequency is bin-aligned (f * n / fs integral over the window).
double amplitude_at(const std::vector<double>& x, double f_hz, double fs_hz) {
  double re = 0.0, im = 0.0;
  const double w = 2.0 * std::numbers::pi * f_hz / fs_hz;
  for (std::size_t n = 0; n < x.size(); ++n) {
    re += x[n] * std::cos(w * static_cast<double>(n));
    im -= x[n] * std::sin(w * static_cast<double>(n));
  }
  const double scale = 2.0 / static_cast<double>(x.size());
  return scale * std::hypot(re, im);
}

std::vector<double> tone(double f_hz, double fs_hz, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::sin(2.0 * std::numbers::pi * f_hz * static_cast<double>(i) / fs_hz);
  }
  return x;
}

}  // namespace

TEST_CASE("constant signal passes the low-pass untouched") {
  std::vector<double> x(100, 3.25);
  const auto y = lowpass(x, 20.0, 50.0);
  REQUIRE(y.size() == x.size());
  for (double v : y) CHECK(std::abs(v - 3.25) <= 1e-9);
}

TEST_CASE("5 Hz tone at fs=50, cutoff=20 keeps its amplitude") {
  const auto x = tone(5.0, 50.0, 500);
  const auto y = lowpass(x, 20.0, 50.0);
  const double amp = amplitude_at(y, 5.0, 50.0);
  CHECK(amp >= 0.97);
  CHECK(amp <= 1.03);
}

TEST_CASE("24 Hz tone at fs=50, cutoff=20 is strongly attenuated") {
  const auto x = tone(24.0, 50.0, 500);
  const auto y = lowpass(x, 20.0, 50.0);
  CHECK(amplitude_at(y, 24.0, 50.0) < 0.5);
}

TEST_CASE("filtering twice changes passband tones by < 5%") {
  for (double f : {2.0, 5.0, 10.0}) {
    const auto x = tone(f, 50.0, 500);
    const auto once = lowpass(x, 20.0, 50.0);
    const auto twice = lowpass(once, 20.0, 50.0);
    const double a1 = amplitude_at(once, f, 50.0);
    const double a2 = amplitude_at(twice, f, 50.0);
    CHECK(std::abs(a2 - a1) / a1 < 0.05);
  }
}

TEST_CASE("low-pass is linear") {
  std::mt19937_64 rng(42);
  const auto draw = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5; };
  std::vector<double> x1(300), x2(300);
  for (auto& v : x1) v = draw();
  for (auto& v : x2) v = draw();
  const double a = 1.7, b = -0.6;
  std::vector<double> mix(300);
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x1[i] + b * x2[i];

  const auto y_mix = lowpass(mix, 20.0, 50.0);
  const auto y1 = lowpass(x1, 20.0, 50.0);
  const auto y2 = lowpass(x2, 20.0, 50.0);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    CHECK(std::abs(y_mix[i] - (a * y1[i] + b * y2[i])) <= 1e-9);
  }
}

TEST_CASE("signal-matrix overload filters every channel") {
  SignalMatrix s = SignalMatrix::zeros(120);
  for (int c = 0; c < 6; ++c) {
    for (std::size_t i = 0; i < 120; ++i) s.ch[c][i] = static_cast<double>(c) + 1.0;
  }
  const SignalMatrix y = lowpass(s, 20.0, 50.0);
  for (int c = 0; c < 6; ++c) {
    for (double v : y.ch[c]) {
      CHECK(std::abs(v - (static_cast<double>(c) + 1.0)) <= 1e-9);
    }
  }
}

TEST_CASE("higher even orders cascade correctly") {
  std::vector<double> x(200, -1.5);
  const auto y = lowpass(x, 20.0, 50.0, 4);
  for (double v : y) CHECK(std::abs(v - (-1.5)) <= 1e-9);
  // A 4th-order filter rolls off faster than a 2nd-order one.
  const auto t = tone(24.0, 50.0, 500);
  CHECK(amplitude_at(lowpass(t, 20.0, 50.0, 4), 24.0, 50.0) <
        amplitude_at(lowpass(t, 20.0, 50.0, 2), 24.0, 50.0));
}

TEST_CASE("filter parameter validation") {
  std::vector<double> x(100, 1.0);
  CHECK_THROWS_AS(lowpass(x, 25.0, 50.0), ParamError);   // at Nyquist
  CHECK_THROWS_AS(lowpass(x, 30.0, 50.0), ParamError);   // beyond Nyquist
  CHECK_THROWS_AS(lowpass(x, 0.0, 50.0), ParamError);
  CHECK_THROWS_AS(lowpass(x, -5.0, 50.0), ParamError);
  CHECK_THROWS_AS(lowpass(x, 20.0, 50.0, 3), ParamError);  // odd order
  CHECK_THROWS_AS(lowpass(x, 20.0, 50.0, 0), ParamError);
  std::vector<double> too_short(15, 1.0);
  CHECK_THROWS_AS(lowpass(too_short, 20.0, 50.0), ParamError);
  std::vector<double> just_enough(16, 1.0);
  CHECK_NOTHROW(lowpass(just_enough, 20.0, 50.0));
}
