#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "repq/imu.hpp"

namespace repq {

struct SegmentationConfig {
  double wx = 1.0, wy = 1.0, wz = 1.0;  // per-axis accelerometer weights
  double lambda = 1.0;                  // smoothing factor feeding the half-window
  int expected_reps = 0;                // 0 = no hint; k > 0 selects the k-1 best cuts
  std::size_t min_gap = 50;             // minimum cut spacing in samples (1 s at 50 Hz)

  void check() const;
};

struct EnergySeries {
  std::vector<double> values;  // E(i), one per sample
  std::size_t half_window = 0; // T actually used
};

enum class CutProvenance { Auto, Manual };

struct CutSet {
  std::string recording_id;
  std::vector<std::size_t> cuts;            // strictly increasing interior boundaries
  std::vector<CutProvenance> provenance;    // one entry per cut
};

// One repetition carved out of a recording; keeps enough metadata to build
// labels and training pairs without going back to the parent file.
struct Segment {
  std::string recording_id;
  std::string subject_id;
  Exercise exercise = Exercise::ShoulderAbduction;
  std::size_t begin = 0;  // inclusive sample index in the parent recording
  std::size_t end = 0;    // exclusive
  SignalMatrix signal;

  std::size_t length() const { return end - begin; }
};

// Weighted absolute accelerometer magnitude h(i); gyro channels do not
// participate in segmentation.
double pointwise_energy(const SignalMatrix& s, const SegmentationConfig& cfg,
                        std::size_t i);

// Smoothed energy E(i) = (h(i) + sum_{n=-T..T} sqrt(h(n+i))) / (fs + 1) with
// T = round(fs * lambda * N / 2000); indices outside [0, N) contribute zero.
EnergySeries energy(const SignalMatrix& s, const SegmentationConfig& cfg);

// Peak-picks the energy series: local maxima of a lightly smoothed E above
// median(E) + 0.5*(max(E) - median(E)), thinned to min_gap spacing (larger
// peak wins, ties break toward the earlier index). With expected_reps = k the
// k-1 highest survivors are returned; fewer qualifying peaks is an error.
CutSet propose_cuts(const EnergySeries& e, const SegmentationConfig& cfg,
                    const std::string& recording_id = "");

// k-1 cuts yield k contiguous segments covering the recording exactly.
std::vector<Segment> split(const ImuRecording& rec, const CutSet& cuts);

// ---------------------------------------------------------------------------
// Disk formats: CutSet JSON {recording_id, cuts: [int], provenance: [...]}
// (hand-editable for manual overrides) and energy CSV `i,E`.
// ---------------------------------------------------------------------------

void save_cutset(const CutSet& cuts, const std::filesystem::path& path);
CutSet load_cutset(const std::filesystem::path& path);

void save_energy_csv(const EnergySeries& e, const std::filesystem::path& path);

}  // namespace repq
