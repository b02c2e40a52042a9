#include "repq/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "repq/errors.hpp"

namespace repq {
namespace {

// Run one section over x in place, starting from the steady-state response
// to a step of amplitude x[0] so constant inputs pass through unchanged.
void run_section(const Biquad& s, std::vector<double>& x) {
  // Transposed direct form II steady state for x == y == 1:
  //   z1 = b1 + b2 - a1 - a2,  z2 = b2 - a2
  double z1 = (s.b1 + s.b2 - s.a1 - s.a2) * x[0];
  double z2 = (s.b2 - s.a2) * x[0];
  for (double& v : x) {
    const double in = v;
    const double out = s.b0 * in + z1;
    z1 = s.b1 * in - s.a1 * out + z2;
    z2 = s.b2 * in - s.a2 * out;
    v = out;
  }
}

}  // namespace

std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double fs_hz) {
  if (order <= 0 || order % 2 != 0) {
    throw ParamError("filter order must be a positive even number, got " +
                     std::to_string(order));
  }
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs_hz / 2.0)) {
    throw ParamError("cutoff " + std::to_string(cutoff_hz) +
                     " Hz must lie in (0, fs/2) for fs = " + std::to_string(fs_hz));
  }
  // Prewarp so the analog prototype's corner lands exactly at cutoff_hz
  // after the bilinear transform.
  const double k = std::tan(std::numbers::pi * cutoff_hz / fs_hz);
  std::vector<Biquad> sections;
  sections.reserve(static_cast<std::size_t>(order / 2));
  for (int pair = 0; pair < order / 2; ++pair) {
    // Conjugate pole pair `pair` of the analog prototype contributes the
    // quadratic s^2 + q*wc*s + wc^2 with q = 2 sin((2*pair+1)*pi/(2*order)).
    const double q = 2.0 * std::sin((2 * pair + 1) * std::numbers::pi / (2 * order));
    const double d = 1.0 + q * k + k * k;
    Biquad s{};
    s.b0 = k * k / d;
    s.b1 = 2.0 * s.b0;
    s.b2 = s.b0;
    s.a1 = 2.0 * (k * k - 1.0) / d;
    s.a2 = (1.0 - q * k + k * k) / d;
    sections.push_back(s);
  }
  return sections;
}

std::vector<double> filtfilt(const std::vector<Biquad>& sections,
                             const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n <= kFiltfiltPadLen) {
    throw ParamError("filtfilt needs more than " + std::to_string(kFiltfiltPadLen) +
                     " samples, got " + std::to_string(n));
  }
  // Odd reflection about both end points: 2*x[0] - x[pad..1] in front,
  // 2*x[n-1] - x[n-2..n-1-pad] behind.
  std::vector<double> ext;
  ext.reserve(n + 2 * kFiltfiltPadLen);
  for (std::size_t i = kFiltfiltPadLen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 2; i <= kFiltfiltPadLen + 1; ++i) {
    ext.push_back(2.0 * x[n - 1] - x[n - i]);
  }

  for (const Biquad& s : sections) run_section(s, ext);
  std::reverse(ext.begin(), ext.end());
  for (const Biquad& s : sections) run_section(s, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + kFiltfiltPadLen,
                             ext.begin() + kFiltfiltPadLen + n);
}

std::vector<double> lowpass(const std::vector<double>& x, double cutoff_hz,
                            double fs_hz, int order) {
  return filtfilt(butterworth_lowpass(order, cutoff_hz, fs_hz), x);
}

SignalMatrix lowpass(const SignalMatrix& s, double cutoff_hz, double fs_hz,
                     int order) {
  const auto sections = butterworth_lowpass(order, cutoff_hz, fs_hz);
  SignalMatrix out;
  for (int c = 0; c < 6; ++c) out.ch[c] = filtfilt(sections, s.ch[c]);
  return out;
}

}  // namespace repq
