#include "repq/scaler.hpp"

#include <cmath>

#include "repq/errors.hpp"

namespace repq {
namespace {

constexpr double kSigmaFloor = 1e-8;

AxisScaler fit_from_sums(const std::array<double, 6>& sum,
                         const std::array<double, 6>& sumsq, std::size_t count,
                         const std::string& fit_source) {
  if (count < 2) {
    throw ParamError("scaler fit needs at least 2 samples per axis, got " +
                     std::to_string(count));
  }
  AxisScaler scaler;
  scaler.fit_source = fit_source;
  scaler.fitted = true;
  const double n = static_cast<double>(count);
  for (int a = 0; a < 6; ++a) {
    scaler.mean[a] = sum[a] / n;
    const double var = sumsq[a] / n - scaler.mean[a] * scaler.mean[a];
    scaler.stddev[a] = std::sqrt(std::max(var, 0.0));
    if (scaler.stddev[a] < kSigmaFloor) scaler.stddev[a] = kSigmaFloor;
  }
  return scaler;
}

}  // namespace

AxisScaler fit_scaler(const std::vector<ImuRecording>& recordings,
                      const std::string& fit_source) {
  if (recordings.empty()) throw ParamError("scaler fit over empty recording list");
  std::array<double, 6> sum{};
  std::array<double, 6> sumsq{};
  std::size_t count = 0;
  for (const ImuRecording& rec : recordings) {
    for (const ImuSample& s : rec.samples) {
      const std::array<double, 6> v = {s.accel[0], s.accel[1], s.accel[2],
                                       s.gyro[0],  s.gyro[1],  s.gyro[2]};
      for (int a = 0; a < 6; ++a) {
        sum[a] += v[a];
        sumsq[a] += v[a] * v[a];
      }
      ++count;
    }
  }
  return fit_from_sums(sum, sumsq, count, fit_source);
}

AxisScaler fit_scaler_segments(const std::vector<const SignalMatrix*>& segments,
                               const std::string& fit_source) {
  if (segments.empty()) throw ParamError("scaler fit over empty segment list");
  std::array<double, 6> sum{};
  std::array<double, 6> sumsq{};
  std::size_t count = 0;
  for (const SignalMatrix* seg : segments) {
    for (std::size_t i = 0; i < seg->length(); ++i) {
      for (int a = 0; a < 6; ++a) {
        const double v = seg->ch[a][i];
        sum[a] += v;
        sumsq[a] += v * v;
      }
    }
    count += seg->length();
  }
  return fit_from_sums(sum, sumsq, count, fit_source);
}

SignalMatrix apply_scaler(const AxisScaler& scaler, const SignalMatrix& s) {
  if (!scaler.fitted) throw ParamError("scaler applied before fitting");
  SignalMatrix out = s;
  for (int a = 0; a < 6; ++a) {
    for (double& v : out.ch[a]) v = (v - scaler.mean[a]) / scaler.stddev[a];
  }
  return out;
}

SignalMatrix invert_scaler(const AxisScaler& scaler, const SignalMatrix& s) {
  if (!scaler.fitted) throw ParamError("scaler inverted before fitting");
  SignalMatrix out = s;
  for (int a = 0; a < 6; ++a) {
    for (double& v : out.ch[a]) v = v * scaler.stddev[a] + scaler.mean[a];
  }
  return out;
}

}  // namespace repq
