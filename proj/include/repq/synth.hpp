#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "repq/imu.hpp"
#include "repq/metrics.hpp"
#include "repq/segmentation.hpp"

namespace repq {

// Per-subject motion signature. All randomness is derived from rng_seed, so
// the same profile always produces the same recordings.
struct SubjectProfile {
  std::string subject_id;
  double arm_length_scale = 1.0;   // dimensionless, 0.8 .. 1.2
  double tempo_s = 2.0;            // seconds per repetition, 1.5 .. 4.0
  double amplitude_jitter = 0.0;   // per-rep ROM jitter fraction, 0 .. 0.1
  std::uint64_t rng_seed = 0;

  void check() const;
};

// Samples a plausible profile for the given subject. Tempo is drawn from
// [1.7, 2.6] s so a one-repetition segment always fits the padded model
// input length, and arm scale from the full [0.8, 1.2] range.
SubjectProfile make_subject_profile(const std::string& subject_id,
                                    std::uint64_t seed);

struct SynthSpec {
  Exercise exercise = Exercise::ShoulderAbduction;
  double rom_degrees = 90.0;   // must be a legal class value for the exercise
  double tremor_level = 0.0;   // 0 = clean .. 1 = maximal simulated tremor
  int reps = 1;
  SubjectProfile profile;

  void check() const;
};

struct GeneratedRecording {
  ImuRecording rec;
  CutSet cuts;         // ground-truth repetition boundaries
  QualityLabel label;  // rom class, measured instability, repetition count
};

// Simulates one recording: the elevation angle follows a raised-cosine
// 0 -> rom -> 0 profile per repetition at the subject's tempo; the
// accelerometer sees gravity projected through the (mount-offset) arm angle
// plus tangential/centripetal terms, the gyro sees the angular rate on the
// exercise's rotation axis, and tremor enters as three 8-12 Hz sinusoids per
// channel with amplitude proportional to tremor_level.
GeneratedRecording generate(const SynthSpec& spec,
                            const MetricConfig& metric_cfg = MetricConfig{});

struct CorpusSpec {
  Exercise exercise = Exercise::ShoulderAbduction;
  int n_subjects = 10;
  std::vector<double> rom_values;      // empty = the exercise's full class set
  std::vector<double> tremor_levels = {0.0};
  int per_cell = 1;                    // recordings per (subject, rom, tremor)
  int reps = 1;                        // repetitions per recording
  std::uint64_t seed = 1;
  double amplitude_jitter_max = 0.08;  // cap on sampled per-subject jitter

  void check() const;
};

// One recording per (subject, rom, tremor, copy) cell, in deterministic
// order; the same spec always yields a byte-identical corpus on disk.
std::vector<GeneratedRecording> generate_corpus(
    const CorpusSpec& spec, const MetricConfig& metric_cfg = MetricConfig{});

// Writes recordings (CSV + sidecar), ground-truth cut sets, a labels array,
// and a manifest.json tying them together.
void write_corpus(const std::vector<GeneratedRecording>& corpus,
                  const std::filesystem::path& dir);

// Seed utilities shared by the generator and the training loop; splitmix64
// is used to derive independent streams from one user-facing seed.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

}  // namespace repq
