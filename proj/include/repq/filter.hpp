#pragma once

#include <vector>

#include "repq/imu.hpp"

namespace repq {

// One second-order IIR section, normalised so a0 = 1:
//   y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct Biquad {
  double b0, b1, b2;
  double a1, a2;
};

// Butterworth low-pass prototype mapped to the digital domain with a
// prewarped bilinear transform. `order` must be a positive even number
// (each section absorbs one conjugate pole pair); default is the 2nd-order
// section used throughout the stability pipeline.
std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double fs_hz);

// Zero-phase filtering: run the cascade forward, then backward, over a
// signal extended by odd reflection at both ends so the filter is warmed up
// before it reaches real data. Requires x.size() > kFiltfiltPadLen.
inline constexpr std::size_t kFiltfiltPadLen = 15;

std::vector<double> filtfilt(const std::vector<Biquad>& sections,
                             const std::vector<double>& x);

// Convenience wrappers used by the metrics layer.
std::vector<double> lowpass(const std::vector<double>& x, double cutoff_hz,
                            double fs_hz, int order = 2);
SignalMatrix lowpass(const SignalMatrix& s, double cutoff_hz, double fs_hz,
                     int order = 2);

}  // namespace repq
