#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "repq/imu.hpp"
#include "repq/segmentation.hpp"

namespace repq {

// Discrete range-of-motion label. Whole-arm exercises use
// {30,60,90,120,150} degrees, external rotation {45,90,150}; anything at or
// above 150 collapses into the 150 class.
struct RomClass {
  Exercise exercise = Exercise::ShoulderAbduction;
  int degrees = 0;
  int index = 0;  // 0-based position within the exercise's class set
};

RomClass make_rom_class(Exercise exercise, double degrees);

enum class CvMode {
  Standard,  // sigma / mu: conventional coefficient of variation
  Paper      // mu / sigma: inverted variant kept for fidelity experiments
};

struct MetricConfig {
  double rom_max = 150.0;     // R: normalizer for ROM similarity
  int max_reps = 3;           // M: normalizer for repetition similarity
  double cutoff_hz = 20.0;    // stability low-pass cutoff
  CvMode cv_mode = CvMode::Standard;
  double eps_sigma = 25.0;    // denominator floor for per-axis CV

  void check() const;
};

struct QualityLabel {
  RomClass rom;
  double instability = 0.0;  // in [0,1)
  int reps = 1;
};

enum class SimilarityMetric { Rom, Stability, Repetition };

std::string to_string(SimilarityMetric m);
SimilarityMetric similarity_metric_from_string(const std::string& s);

struct LabeledSegment {
  std::string id;
  Segment segment;
  QualityLabel label;
};

// Ground-truth similarity pair; indices refer into the labeled-segment list
// the pair was built from. `signal` is the input under assessment, `anchor`
// the reference exemplar it is compared against.
struct SimilarityPair {
  std::size_t signal_idx = 0;
  std::size_t anchor_idx = 0;
  SimilarityMetric metric = SimilarityMetric::Rom;
  double s = 0.0;  // ground-truth similarity in [0,1]
};

// Mean over the six axes of |CV_axis| where CV is computed per channel with
// population statistics; the denominator (mu in standard mode, sigma in
// paper mode) is floored at cfg.eps_sigma.
double coefficient_of_variation(const SignalMatrix& s, const MetricConfig& cfg);

// tanh of the aggregated CV of the low-passed segment; 0 = steady motion,
// values approach 1 for tremulous input.
double instability(const SignalMatrix& s, const MetricConfig& cfg,
                   double fs_hz = kSampleRateHz);

double sim_rom(double m_a, double m_b, const MetricConfig& cfg);
double sim_stability(double instability_a, double instability_b);
double sim_stability(const SignalMatrix& s_a, const SignalMatrix& s_b,
                     const MetricConfig& cfg);
double sim_repetition(int r_a, int r_b, const MetricConfig& cfg);

// All ordered within-subject pairs, self-pairs included, with ground truth
// from the labels; cross-subject pairs are never produced.
std::vector<SimilarityPair> build_pairs(const std::vector<LabeledSegment>& segments,
                                        SimilarityMetric metric,
                                        const MetricConfig& cfg);

// Slides a window of n adjacent one-repetition segments over each recording
// and concatenates every group; runs shorter than n contribute nothing.
std::vector<Segment> merge_repetitions(const std::vector<Segment>& segments,
                                       int n);

// ---------------------------------------------------------------------------
// Disk formats: label JSON (array of {segment_id, subject_id, exercise,
// rom_degrees, instability, reps}) and a pair manifest with one JSON object
// per line.  load_labels restores metadata and labels only; the `signal`
// member of each returned segment is left empty.
// ---------------------------------------------------------------------------

void save_labels(const std::vector<LabeledSegment>& segments,
                 const std::filesystem::path& path);

std::vector<LabeledSegment> load_labels(const std::filesystem::path& path);

void save_pairs(const std::vector<SimilarityPair>& pairs,
                const std::vector<LabeledSegment>& segments,
                const std::filesystem::path& path);

}  // namespace repq
