#pragma once

#include <array>
#include <string>
#include <vector>

#include "repq/imu.hpp"

namespace repq {

// Per-axis standardization statistics, fit over the concatenation of the
// training recordings and then applied unchanged to validation/test data.
struct AxisScaler {
  std::array<double, 6> mean{};
  std::array<double, 6> stddev{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  std::string fit_source;  // split id the statistics came from
  bool fitted = false;
};

// Population (1/N) statistics per axis; sigma is floored at 1e-8 so a
// constant axis still yields an invertible transform.
AxisScaler fit_scaler(const std::vector<ImuRecording>& recordings,
                      const std::string& fit_source);
AxisScaler fit_scaler_segments(const std::vector<const SignalMatrix*>& segments,
                               const std::string& fit_source);

SignalMatrix apply_scaler(const AxisScaler& scaler, const SignalMatrix& s);
SignalMatrix invert_scaler(const AxisScaler& scaler, const SignalMatrix& s);

}  // namespace repq
