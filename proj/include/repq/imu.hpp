#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace repq {

enum class Exercise { ShoulderAbduction, ExternalRotation, ForwardFlexion };

std::string to_string(Exercise e);
Exercise exercise_from_string(const std::string& s);

// Whole-arm exercises (shoulder abduction, forward flexion) use the 5-class
// taxonomy; forearm-only external rotation uses 3 classes.
const std::vector<int>& rom_classes(Exercise e);
int num_rom_classes(Exercise e);

constexpr double kSampleRateHz = 50.0;

// One 6-axis sample: accelerometer in m/s^2, gyroscope in rad/s.
struct ImuSample {
  double t = 0.0;
  std::array<double, 3> accel{};
  std::array<double, 3> gyro{};
};

struct ImuRecording {
  std::string id;
  std::string subject_id;
  Exercise exercise = Exercise::ShoulderAbduction;
  double fs = kSampleRateHz;
  std::vector<ImuSample> samples;

  std::size_t length() const { return samples.size(); }
};

// Channel-major 6 x L view of a recording slice. Row order is fixed:
// [ax, ay, az, gx, gy, gz].
struct SignalMatrix {
  std::array<std::vector<double>, 6> ch;

  std::size_t length() const { return ch[0].size(); }
  static SignalMatrix zeros(std::size_t len);
};

SignalMatrix to_signal(const ImuRecording& rec, std::size_t begin, std::size_t end);
SignalMatrix to_signal(const ImuRecording& rec);

// Validates the type invariants (finite channels, non-decreasing t, fs = 50,
// spacing within 10% of 1/fs). Throws DataError on violation.
void validate(const ImuRecording& rec);

// ---------------------------------------------------------------------------
// Disk format: `<name>.csv` with header `t,ax,ay,az,gx,gy,gz`, one row per
// sample, plus a sidecar `<name>.json` holding {subject_id, exercise, fs} and
// an optional "unit" field ("m/s^2" or "g") normalised to m/s^2 on load.
// ---------------------------------------------------------------------------

void save_recording(const ImuRecording& rec, const std::filesystem::path& csv_path);
ImuRecording load_recording(const std::filesystem::path& csv_path);

}  // namespace repq
