#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "repq/metrics.hpp"
#include "repq/model.hpp"

// Dataset splitting, the multi-task training loop, and the evaluation
// metrics/reports. Two protocols are supported: leave-one-subject-out
// cross-validation (one fold per subject, that subject entirely held out)
// and a per-subject 70/10/20 train/val/test split.

namespace repq {

enum class SplitMode { Loocv, Standard };

std::string to_string(SplitMode m);
SplitMode split_mode_from_string(const std::string& s);

struct SplitPlan {
  struct Fold {
    std::string held_out_subject;  // loocv only; empty in standard mode
    // Sorted indices into the labeled-segment list the plan was built from.
    std::vector<std::size_t> train, val, test;
    bool operator==(const Fold&) const = default;
  };

  SplitMode mode = SplitMode::Loocv;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
  bool operator==(const SplitPlan&) const = default;
};

// Builds the fold assignments. Loocv requires >= 2 distinct subjects and
// yields one fold per subject (sorted by subject id); a tenth of every
// remaining subject's segments is carved out as that fold's validation set.
// Standard mode yields a single fold with a seeded 70/10/20 partition inside
// each subject. Deterministic in (segments, mode, seed).
SplitPlan split(const std::vector<LabeledSegment>& segments, SplitMode mode,
                std::uint64_t seed);

struct TrainConfig {
  std::size_t batch_pairs = 1024;  // similarity pairs per optimizer step
  double lr = 1e-3;                // Adam step size
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 50;
  double alpha = 1.0;       // weight of the classification term
  std::uint64_t seed = 1;   // drives init, shuffles, dropout
  std::size_t patience = 10;  // early stop on validation similarity MSE
  // Epochs to run before best-checkpoint/patience tracking engages; guards
  // against freak validation minima in the first few epochs (the final epoch
  // is always eligible).
  std::size_t min_epochs = 0;
  double pair_fraction = 0.1;  // pairs sampled per epoch (seeded)
  SimilarityMetric metric = SimilarityMetric::Rom;

  void check() const;
};

// The global pair manifest split along a fold: train pairs touch only train
// segments; val pairs live in train+val with at least one val endpoint; test
// pairs touch only test segments. All sets stay within-subject.
struct PairSets {
  std::vector<SimilarityPair> train, val, test;
};

PairSets partition_pairs(const std::vector<SimilarityPair>& pairs,
                         const SplitPlan::Fold& fold);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // similarity MSE + alpha * cross-entropy
  double val_mse = 0.0;     // similarity MSE on val pairs
};

struct TrainResult {
  Model model;  // parameters from the best-validation epoch
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
  double best_val_mse = std::numeric_limits<double>::infinity();
};

// Fits the scaler on the fold's train split, trains with seed-deterministic
// mini-batch Adam, early-stops on validation MSE, and returns the model at
// its best validation epoch. Throws NumericError (with the parameter name
// where applicable) if a loss or gradient goes non-finite.
TrainResult train_fold(const std::vector<LabeledSegment>& segments,
                       const SplitPlan::Fold& fold, const ModelConfig& mcfg,
                       const TrainConfig& tcfg,
                       const MetricConfig& metric_cfg = {});

void save_history_csv(const std::vector<EpochLog>& history,
                      const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Evaluation metrics
// ---------------------------------------------------------------------------

// 1 - sum((y - y_hat)^2) / sum((y - mean(y))^2). Lengths must match and be
// >= 2; constant y leaves the ratio undefined and raises DataError.
double r_squared(const std::vector<double>& y,
                 const std::vector<double>& y_hat);
double mse(const std::vector<double>& y, const std::vector<double>& y_hat);
double mae(const std::vector<double>& y, const std::vector<double>& y_hat);

// counts[i][j] = #(true class i, predicted class j).
std::vector<std::vector<std::size_t>> confusion(
    const std::vector<int>& y_true, const std::vector<int>& y_pred,
    std::size_t num_classes);

double accuracy(const std::vector<std::vector<std::size_t>>& counts);

struct MetricSummary {
  double mse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  std::size_t pairs = 0;
};

// Encodes every segment the pairs touch once (eval mode, stored scaler) and
// scores predicted cosine similarity against the pair ground truth.
MetricSummary score_pairs(const Model& model,
                          const std::vector<LabeledSegment>& segments,
                          const std::vector<SimilarityPair>& pairs);

struct FoldReport {
  std::string held_out_subject;
  MetricSummary similarity;
  std::vector<std::vector<std::size_t>> confusion;  // empty without classifier
  double accuracy = 0.0;
  std::size_t best_epoch = 0;
  double runtime_seconds = 0.0;
  // Raw per-pair and per-segment outcomes, kept for pooled analyses.
  std::vector<double> sim_true, sim_pred;
  std::vector<int> class_true, class_pred;
};

struct EvalReport {
  SimilarityMetric metric = SimilarityMetric::Rom;
  SplitMode mode = SplitMode::Loocv;
  std::vector<FoldReport> folds;
  MetricSummary mean;  // fold-averaged mse/mae/r2; pairs = total
  std::vector<std::vector<std::size_t>> confusion_total;
  double accuracy_total = 0.0;
  double runtime_seconds = 0.0;
};

// Scores a trained model on the fold's test pairs; with_classifier also
// predicts a ROM class per test segment and fills the confusion matrix.
FoldReport evaluate_fold(const Model& model,
                         const std::vector<LabeledSegment>& segments,
                         const SplitPlan::Fold& fold,
                         const std::vector<SimilarityPair>& pairs,
                         bool with_classifier, std::size_t num_classes);

// Full protocol: trains and evaluates every fold of the plan. `jobs` > 1
// runs folds concurrently (each fold is independently seeded, so results do
// not depend on scheduling).
EvalReport run_eval(const std::vector<LabeledSegment>& segments,
                    const SplitPlan& plan, const ModelConfig& mcfg,
                    const TrainConfig& tcfg,
                    const MetricConfig& metric_cfg = {}, int jobs = 1);

void save_report_json(const EvalReport& report,
                      const std::filesystem::path& path);
void save_report_csv(const EvalReport& report,
                     const std::filesystem::path& path);
void save_confusion_csv(const std::vector<std::vector<std::size_t>>& counts,
                        const std::filesystem::path& path);

}  // namespace repq
