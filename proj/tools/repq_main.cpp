// repq: command-line front end for the repetition-quality pipeline.
//
// Subcommands: synth, segment, label, pairs, train, eval, score, plot.
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
// Option precedence: built-in defaults < --config file (TOML or JSON) <
// explicit flags.  All outputs are deterministic for identical inputs and
// seeds.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "repq/errors.hpp"
#include "repq/imu.hpp"
#include "repq/metrics.hpp"
#include "repq/model.hpp"
#include "repq/segmentation.hpp"
#include "repq/svg.hpp"
#include "repq/synth.hpp"
#include "repq/train.hpp"

namespace fs = std::filesystem;
using namespace repq;

namespace {

// ---------------------------------------------------------------------------
// Config file support: CLI11 reads TOML natively; accept JSON as well by
// flattening {"key": v, "subcommand": {"key": v}} into config items.
// ---------------------------------------------------------------------------
class TomlOrJsonConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    const auto start = input.tellg();
    char first = 0;
    while (input.get(first) && std::isspace(static_cast<unsigned char>(first))) {
    }
    input.clear();
    input.seekg(start);
    if (first != '{') return CLI::ConfigTOML::from_config(input);

    nlohmann::json doc;
    try {
      input >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::FileError(std::string("config JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    auto add = [&items](std::vector<std::string> parents, const std::string& key,
                        const nlohmann::json& value) {
      CLI::ConfigItem item;
      item.parents = std::move(parents);
      item.name = key;
      if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      items.push_back(std::move(item));
    };
    if (!doc.is_object()) throw CLI::FileError("config JSON: expected an object");
    for (const auto& [key, value] : doc.items()) {
      if (value.is_object())
        for (const auto& [sub_key, sub_value] : value.items())
          add({key}, sub_key, sub_value);
      else
        add({}, key, value);
    }
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number() || v.is_null()) return v.dump();
    throw CLI::FileError("config JSON: values must be scalars or flat arrays");
  }
};

// ---------------------------------------------------------------------------
// Shared option bundles.
// ---------------------------------------------------------------------------
struct GlobalFlags {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

struct SegmentFlags {
  double wx = 1.0, wy = 1.0, wz = 1.0;
  double lambda = 1.0;
  int expected_reps = 0;
  std::size_t min_gap = 50;

  SegmentationConfig to_config() const {
    SegmentationConfig cfg;
    cfg.wx = wx;
    cfg.wy = wy;
    cfg.wz = wz;
    cfg.lambda = lambda;
    cfg.expected_reps = expected_reps;
    cfg.min_gap = min_gap;
    cfg.check();
    return cfg;
  }
};

void add_segment_flags(CLI::App* cmd, SegmentFlags& f) {
  cmd->add_option("--wx", f.wx, "Accelerometer x-axis weight");
  cmd->add_option("--wy", f.wy, "Accelerometer y-axis weight");
  cmd->add_option("--wz", f.wz, "Accelerometer z-axis weight");
  cmd->add_option("--lambda", f.lambda, "Energy smoothing factor");
  cmd->add_option("--expected-reps", f.expected_reps,
                  "Repetition count hint (0 = adaptive threshold only)");
  cmd->add_option("--min-gap", f.min_gap, "Minimum cut spacing in samples");
}

struct MetricFlags {
  std::string cv_mode = "standard";
  double eps_sigma = 25.0;
  double cutoff_hz = 20.0;

  MetricConfig to_config() const {
    MetricConfig cfg;
    if (cv_mode == "standard")
      cfg.cv_mode = CvMode::Standard;
    else if (cv_mode == "paper")
      cfg.cv_mode = CvMode::Paper;
    else
      throw ParamError("unknown --cv-mode '" + cv_mode + "'");
    cfg.eps_sigma = eps_sigma;
    cfg.cutoff_hz = cutoff_hz;
    cfg.check();
    return cfg;
  }
};

void add_metric_flags(CLI::App* cmd, MetricFlags& f) {
  cmd->add_option("--cv-mode", f.cv_mode,
                  "Coefficient-of-variation form: standard (sigma/mu) or "
                  "paper (mu/sigma)")
      ->check(CLI::IsMember({"standard", "paper"}));
  cmd->add_option("--eps-sigma", f.eps_sigma,
                  "Denominator floor for the CV (m/s^2)");
  cmd->add_option("--cutoff", f.cutoff_hz,
                  "Low-pass cutoff before instability (Hz)");
}

struct ModelFlags {
  std::size_t window = 50, step = 15, max_len = 500;
  std::size_t d_model = 256, heads = 16, lstm_layers = 2;
  double dropout = 0.2;
  std::string conv = "32x5,64x5";
  std::size_t mlp_hidden = 256;
  std::size_t num_classes = 0;  // 0 = derive from the corpus exercise
  bool no_spatial = false, no_temporal = false, no_attention = false;

  ModelConfig to_config(std::size_t auto_classes) const {
    ModelConfig cfg;
    cfg.window = window;
    cfg.step = step;
    cfg.max_len = max_len;
    cfg.d_model = d_model;
    cfg.heads = heads;
    cfg.lstm_layers = lstm_layers;
    cfg.dropout = dropout;
    cfg.conv.clear();
    for (const auto& part : CLI::detail::split(conv, ',')) {
      const auto x = part.find('x');
      std::size_t channels = 0, kernel = 0;
      try {
        channels = std::stoul(part.substr(0, x));
        kernel = x == std::string::npos ? 5 : std::stoul(part.substr(x + 1));
      } catch (const std::exception&) {
        throw ParamError("bad --conv entry '" + part +
                         "' (expected CHANNELSxKERNEL, e.g. 32x5)");
      }
      cfg.conv.push_back({channels, kernel});
    }
    cfg.mlp_hidden = mlp_hidden;
    cfg.num_classes = num_classes ? num_classes : auto_classes;
    cfg.use_spatial = !no_spatial;
    cfg.use_temporal = !no_temporal;
    cfg.use_attention = !no_attention;
    cfg.check();
    return cfg;
  }
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--window", f.window, "Sliding window length (samples)");
  cmd->add_option("--step", f.step, "Sliding window stride (samples)");
  cmd->add_option("--max-len", f.max_len,
                  "Front-padded segment length (samples)");
  cmd->add_option("--d-model", f.d_model, "Encoder width");
  cmd->add_option("--heads", f.heads, "Attention heads");
  cmd->add_option("--lstm-layers", f.lstm_layers, "Stacked LSTM layers");
  cmd->add_option("--dropout", f.dropout, "Dropout rate during training");
  cmd->add_option("--conv", f.conv,
                  "Spatial encoder layers as CHANNELSxKERNEL[,...]");
  cmd->add_option("--mlp-hidden", f.mlp_hidden, "Classifier hidden width");
  cmd->add_option("--num-classes", f.num_classes,
                  "ROM classes (0 = derive from the corpus exercise)");
  cmd->add_flag("--no-spatial", f.no_spatial, "Ablate the CNN encoder");
  cmd->add_flag("--no-temporal", f.no_temporal, "Ablate the LSTM encoder");
  cmd->add_flag("--no-attention", f.no_attention, "Ablate multi-head attention");
}

struct TrainFlags {
  std::size_t epochs = 50, batch_pairs = 1024, patience = 10, min_epochs = 0;
  double lr = 1e-3, alpha = 1.0, pair_fraction = 0.1;
  std::string metric = "rom";
  std::string mode = "loocv";

  TrainConfig to_config(std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_pairs = batch_pairs;
    cfg.patience = patience;
    cfg.min_epochs = min_epochs;
    cfg.lr = lr;
    cfg.alpha = alpha;
    cfg.pair_fraction = pair_fraction;
    cfg.metric = similarity_metric_from_string(metric);
    cfg.seed = seed;
    cfg.check();
    return cfg;
  }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--epochs", f.epochs, "Training epochs per fold");
  cmd->add_option("--batch-pairs", f.batch_pairs, "Pairs per optimizer step");
  cmd->add_option("--patience", f.patience,
                  "Early-stop patience on validation MSE");
  cmd->add_option("--min-epochs", f.min_epochs,
                  "Epochs before early stopping engages");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--alpha", f.alpha,
                  "Classification loss weight (0 disables the classifier)");
  cmd->add_option("--pair-fraction", f.pair_fraction,
                  "Fraction of training pairs sampled per epoch");
  cmd->add_option("--metric", f.metric, "Similarity target")
      ->check(CLI::IsMember({"rom", "stability", "repetition"}));
  cmd->add_option("--mode", f.mode, "Split protocol")
      ->check(CLI::IsMember({"loocv", "standard"}));
}

// A subcommand that receives values from both a config-file section and the
// command line is counted as parsed twice by CLI11; guard the callbacks so
// each subcommand body runs at most once per process.
template <typename F>
auto run_once(F f) {
  return [f = std::move(f), done = std::make_shared<bool>(false)]() {
    if (*done) return;
    *done = true;
    f();
  };
}

Exercise parse_exercise(const std::string& name) {
  if (name == "sa") return Exercise::ShoulderAbduction;
  if (name == "er") return Exercise::ExternalRotation;
  if (name == "ff") return Exercise::ForwardFlexion;
  return exercise_from_string(name);
}

// ---------------------------------------------------------------------------
// Corpus loading: manifest.json -> labeled single-repetition segments.
// Each recording is split on its cut file; instability is measured per
// segment, ROM comes from the manifest.  Multi-part recordings get "#k"
// appended to the segment id.
// ---------------------------------------------------------------------------
std::vector<LabeledSegment> load_corpus_segments(const fs::path& manifest_path,
                                                 const MetricConfig& mc) {
  std::ifstream in(manifest_path);
  if (!in)
    throw DataError("cannot open manifest '" + manifest_path.string() + "'");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + manifest_path.string() + "': " + e.what());
  }
  if (!manifest.is_array())
    throw DataError("manifest '" + manifest_path.string() +
                    "': expected a JSON array");

  const fs::path dir = manifest_path.parent_path();
  std::vector<LabeledSegment> segments;
  for (const auto& entry : manifest) {
    std::string csv_name, cuts_name;
    double rom_degrees = 0.0;
    int reps = 1;
    try {
      csv_name = entry.at("csv").get<std::string>();
      rom_degrees = entry.at("rom_degrees").get<double>();
      reps = entry.at("reps").get<int>();
      if (entry.contains("cuts")) cuts_name = entry["cuts"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest '" + manifest_path.string() + "': " + e.what());
    }
    const ImuRecording rec = load_recording(dir / csv_name);
    CutSet cuts;
    cuts.recording_id = rec.id;
    if (!cuts_name.empty() && fs::exists(dir / cuts_name))
      cuts = load_cutset(dir / cuts_name);
    const auto parts = split(rec, cuts);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      LabeledSegment ls;
      ls.id = parts.size() > 1 ? rec.id + "#" + std::to_string(k) : rec.id;
      ls.segment = parts[k];
      ls.label.rom = make_rom_class(rec.exercise, rom_degrees);
      ls.label.instability = instability(parts[k].signal, mc);
      ls.label.reps = parts.size() > 1 ? 1 : reps;
      segments.push_back(std::move(ls));
    }
  }
  if (segments.empty())
    throw DataError("manifest '" + manifest_path.string() +
                    "' lists no recordings");
  return segments;
}

std::size_t classes_for(const std::vector<LabeledSegment>& segments) {
  return rom_classes(segments.front().segment.exercise).size();
}

// ---------------------------------------------------------------------------
// Subcommand bodies.  Each returns normally on success and throws
// ParamError/DataError/NumericError otherwise.
// ---------------------------------------------------------------------------
void cmd_synth(const GlobalFlags& g, const std::string& exercise,
               std::size_t subjects, std::size_t per_cell, int reps,
               const std::vector<double>& rom_values,
               const std::vector<double>& tremor_levels,
               double amplitude_jitter) {
  CorpusSpec spec;
  spec.exercise = parse_exercise(exercise);
  spec.n_subjects = subjects;
  spec.per_cell = per_cell;
  spec.reps = reps;
  spec.rom_values = rom_values;
  spec.tremor_levels = tremor_levels;
  spec.amplitude_jitter_max = amplitude_jitter;
  spec.seed = g.seed;
  const auto corpus = generate_corpus(spec);
  write_corpus(corpus, g.out_dir);
  std::printf("wrote %zu recordings (%zu subjects) to %s\n", corpus.size(),
              subjects, g.out_dir.c_str());
}

void cmd_segment(const GlobalFlags& g, const std::string& input,
                 const SegmentFlags& sf, bool energy_csv, bool plot) {
  const SegmentationConfig cfg = sf.to_config();
  const ImuRecording rec = load_recording(input);
  const SignalMatrix sig = to_signal(rec);
  const EnergySeries e = energy(sig, cfg);
  const CutSet cuts = propose_cuts(e, cfg, rec.id);

  fs::create_directories(g.out_dir);
  const fs::path base = fs::path(g.out_dir) / fs::path(input).stem();
  const fs::path cuts_path = base.string() + ".cuts.json";
  save_cutset(cuts, cuts_path);
  if (energy_csv) save_energy_csv(e, base.string() + ".energy.csv");
  if (plot)
    save_svg(render_energy_svg(e, cuts, rec.id),
             base.string() + ".energy.svg");
  std::printf("%zu cuts -> %s\n", cuts.cuts.size(), cuts_path.c_str());
}

void cmd_label(const GlobalFlags& g, const std::string& manifest,
               const std::string& input, const std::string& cuts_file,
               double rom, bool rom_given, int reps, const MetricFlags& mf,
               const std::string& out_name) {
  const MetricConfig mc = mf.to_config();
  std::vector<LabeledSegment> segments;
  if (!manifest.empty()) {
    segments = load_corpus_segments(manifest, mc);
  } else {
    if (input.empty())
      throw ParamError("label: provide --manifest or --input");
    if (!rom_given)
      throw ParamError("label: --rom is required when labeling without a "
                       "manifest");
    const ImuRecording rec = load_recording(input);
    CutSet cuts;
    cuts.recording_id = rec.id;
    if (!cuts_file.empty()) cuts = load_cutset(cuts_file);
    const auto parts = split(rec, cuts);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      LabeledSegment ls;
      ls.id = parts.size() > 1 ? rec.id + "#" + std::to_string(k) : rec.id;
      ls.segment = parts[k];
      ls.label.rom = make_rom_class(rec.exercise, rom);
      ls.label.instability = instability(parts[k].signal, mc);
      ls.label.reps = parts.size() > 1 ? 1 : reps;
      segments.push_back(std::move(ls));
    }
  }
  fs::create_directories(g.out_dir);
  const fs::path out = fs::path(g.out_dir) / out_name;
  save_labels(segments, out);
  std::printf("labeled %zu segments -> %s\n", segments.size(), out.c_str());
}

void cmd_pairs(const GlobalFlags& g, const std::string& labels_file,
               const std::string& metric, const std::string& out_name) {
  const auto segments = load_labels(labels_file);
  const auto pairs =
      build_pairs(segments, similarity_metric_from_string(metric), {});
  fs::create_directories(g.out_dir);
  const fs::path out = fs::path(g.out_dir) / out_name;
  save_pairs(pairs, segments, out);
  std::printf("%zu pairs (%s) -> %s\n", pairs.size(), metric.c_str(),
              out.c_str());
}

void cmd_train(const GlobalFlags& g, const std::string& manifest,
               const TrainFlags& tf, const ModelFlags& mdf,
               const MetricFlags& mf, std::size_t fold_index) {
  const MetricConfig mc = mf.to_config();
  const auto segments = load_corpus_segments(manifest, mc);
  const SplitPlan plan =
      split(segments, split_mode_from_string(tf.mode), g.seed);
  if (fold_index >= plan.folds.size())
    throw ParamError("--fold " + std::to_string(fold_index) +
                     " out of range (" + std::to_string(plan.folds.size()) +
                     " folds)");
  const ModelConfig mcfg = mdf.to_config(classes_for(segments));
  const TrainConfig tcfg = tf.to_config(g.seed);

  const TrainResult res =
      train_fold(segments, plan.folds[fold_index], mcfg, tcfg, mc);
  fs::create_directories(g.out_dir);
  const fs::path ckpt = fs::path(g.out_dir) / "model.ckpt";
  save_checkpoint(res.model, ckpt.string());
  save_history_csv(res.history, fs::path(g.out_dir) / "history.csv");
  std::printf("fold %zu (%s): best epoch %zu, val MSE %.6f -> %s\n",
              fold_index,
              plan.folds[fold_index].held_out_subject.empty()
                  ? "standard"
                  : plan.folds[fold_index].held_out_subject.c_str(),
              res.best_epoch, res.best_val_mse, ckpt.c_str());
}

void cmd_eval(const GlobalFlags& g, const std::string& manifest,
              const TrainFlags& tf, const ModelFlags& mdf,
              const MetricFlags& mf, int jobs) {
  const MetricConfig mc = mf.to_config();
  const auto segments = load_corpus_segments(manifest, mc);
  const SplitPlan plan =
      split(segments, split_mode_from_string(tf.mode), g.seed);
  const ModelConfig mcfg = mdf.to_config(classes_for(segments));
  const TrainConfig tcfg = tf.to_config(g.seed);

  const EvalReport report = run_eval(segments, plan, mcfg, tcfg, mc, jobs);
  fs::create_directories(g.out_dir);
  save_report_json(report, fs::path(g.out_dir) / "report.json");
  save_report_csv(report, fs::path(g.out_dir) / "report.csv");
  if (!report.confusion_total.empty()) {
    save_confusion_csv(report.confusion_total,
                       fs::path(g.out_dir) / "confusion.csv");
    std::vector<std::vector<std::int64_t>> counts;
    for (const auto& row : report.confusion_total)
      counts.emplace_back(row.begin(), row.end());
    std::vector<std::string> names;
    for (int deg : rom_classes(segments.front().segment.exercise))
      names.push_back(std::to_string(deg));
    if (names.size() != counts.size()) names.clear();
    save_svg(render_confusion_svg(counts, names, "ROM confusion (" +
                                                     to_string(report.mode) +
                                                     ")"),
             fs::path(g.out_dir) / "confusion.svg");
  }
  std::printf("%s/%s: %zu folds, mean R2 %.4f (mse %.6f, %zu pairs)",
              tf.metric.c_str(), tf.mode.c_str(), report.folds.size(),
              report.mean.r2, report.mean.mse, report.mean.pairs);
  if (!report.confusion_total.empty())
    std::printf(", accuracy %.4f", report.accuracy_total);
  std::printf(" -> %s\n", (fs::path(g.out_dir) / "report.json").c_str());
}

void cmd_score(const std::string& signal_file, const std::string& anchor_file,
               const std::string& ckpt, bool classify) {
  const Model model = load_checkpoint(ckpt);
  const ImuRecording rec_a = load_recording(signal_file);
  const ImuRecording rec_b = load_recording(anchor_file);
  const double s = model.similarity(to_signal(rec_a), to_signal(rec_b));
  std::printf("similarity %.6f\n", s);
  if (classify) {
    const auto probs = model.classify(to_signal(rec_a));
    std::size_t arg = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[arg]) arg = i;
    const auto& classes = rom_classes(rec_a.exercise);
    if (classes.size() == probs.size())
      std::printf("rom_class %d (p=%.4f)\n", classes[arg], probs[arg]);
    else
      std::printf("rom_class index %zu (p=%.4f)\n", arg, probs[arg]);
  }
}

void cmd_plot(const GlobalFlags& g, const std::string& energy_from,
              const std::string& cuts_file, const SegmentFlags& sf,
              const std::string& confusion_from) {
  if (energy_from.empty() && confusion_from.empty())
    throw ParamError("plot: provide --energy-from and/or --confusion-from");
  fs::create_directories(g.out_dir);
  if (!energy_from.empty()) {
    const SegmentationConfig cfg = sf.to_config();
    const ImuRecording rec = load_recording(energy_from);
    const EnergySeries e = energy(to_signal(rec), cfg);
    CutSet cuts;
    cuts.recording_id = rec.id;
    if (!cuts_file.empty())
      cuts = load_cutset(cuts_file);
    else
      cuts = propose_cuts(e, cfg, rec.id);
    const fs::path out = fs::path(g.out_dir) /
                         (fs::path(energy_from).stem().string() +
                          ".energy.svg");
    save_svg(render_energy_svg(e, cuts, rec.id), out);
    std::printf("energy plot -> %s\n", out.c_str());
  }
  if (!confusion_from.empty()) {
    std::ifstream in(confusion_from);
    if (!in)
      throw DataError("cannot open report '" + confusion_from + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("report '" + confusion_from + "': " + e.what());
    }
    if (!j.contains("confusion"))
      throw DataError("report '" + confusion_from +
                      "' has no confusion matrix (classifier disabled?)");
    std::vector<std::vector<std::int64_t>> counts;
    for (const auto& row : j["confusion"])
      counts.push_back(row.get<std::vector<std::int64_t>>());
    const fs::path out = fs::path(g.out_dir) / "confusion.svg";
    save_svg(render_confusion_svg(counts, {}, "ROM confusion"), out);
    std::printf("confusion plot -> %s\n", out.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Repetition-quality pipeline for wrist-worn IMU exercises"};
  app.config_formatter(std::make_shared<TomlOrJsonConfig>());
  app.set_config("--config", "", "TOML or JSON config file");
  app.allow_config_extras(false);
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--seed", g.seed, "Global random seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->fallthrough()->configurable();
  std::string sy_exercise = "shoulder_abduction";
  std::size_t sy_subjects = 10, sy_per_cell = 1;
  int sy_reps = 1;
  std::vector<double> sy_rom, sy_tremor = {0.0, 0.5, 1.0};
  double sy_jitter = 0.08;
  synth->add_option("--exercise", sy_exercise,
                    "shoulder_abduction|external_rotation|forward_flexion "
                    "(or sa|er|ff)");
  synth->add_option("--subjects", sy_subjects, "Number of subjects")
      ->check(CLI::PositiveNumber);
  synth->add_option("--per-cell", sy_per_cell,
                    "Recordings per (subject, ROM, tremor) cell")
      ->check(CLI::PositiveNumber);
  synth->add_option("--reps", sy_reps, "Repetitions per recording")
      ->check(CLI::PositiveNumber);
  synth->add_option("--rom", sy_rom,
                    "ROM values in degrees (default: the exercise's classes)")
      ->delimiter(',');
  synth->add_option("--tremor", sy_tremor, "Tremor levels in [0,1]")
      ->delimiter(',');
  synth->add_option("--amplitude-jitter", sy_jitter,
                    "Per-recording amplitude jitter bound");
  synth->callback(run_once([&] {
    cmd_synth(g, sy_exercise, sy_subjects, sy_per_cell, sy_reps, sy_rom,
              sy_tremor, sy_jitter);
  }));

  // segment ----------------------------------------------------------------
  auto* segment =
      app.add_subcommand("segment", "Propose repetition cuts for a recording");
  segment->fallthrough()->configurable();
  std::string sg_input;
  SegmentFlags sg_flags;
  bool sg_energy_csv = false, sg_plot = false;
  segment->add_option("--input", sg_input, "Recording CSV (with JSON sidecar)")
      ->required();
  add_segment_flags(segment, sg_flags);
  segment->add_flag("--energy-csv", sg_energy_csv,
                    "Also write the energy series as CSV");
  segment->add_flag("--plot", sg_plot, "Also write an energy/cuts SVG");
  segment->callback(run_once(
      [&] { cmd_segment(g, sg_input, sg_flags, sg_energy_csv, sg_plot); }));

  // label ------------------------------------------------------------------
  auto* label =
      app.add_subcommand("label", "Compute quality labels for segments");
  label->fallthrough()->configurable();
  std::string lb_manifest, lb_input, lb_cuts, lb_out = "labels.json";
  double lb_rom = 0.0;
  int lb_reps = 1;
  MetricFlags lb_metric;
  label->add_option("--manifest", lb_manifest, "Corpus manifest.json");
  label->add_option("--input", lb_input, "Single recording CSV");
  label->add_option("--cuts", lb_cuts, "Cut file for --input");
  auto* rom_opt =
      label->add_option("--rom", lb_rom, "ROM class in degrees for --input");
  label->add_option("--reps", lb_reps, "Repetition count for --input");
  add_metric_flags(label, lb_metric);
  label->add_option("--out", lb_out, "Output file name");
  label->callback(run_once([&] {
    cmd_label(g, lb_manifest, lb_input, lb_cuts, lb_rom, rom_opt->count() > 0,
              lb_reps, lb_metric, lb_out);
  }));

  // pairs ------------------------------------------------------------------
  auto* pairs =
      app.add_subcommand("pairs", "Build the within-subject pair manifest");
  pairs->fallthrough()->configurable();
  std::string pr_labels, pr_metric = "rom", pr_out = "pairs.jsonl";
  pairs->add_option("--labels", pr_labels, "labels.json from `label`")
      ->required();
  pairs->add_option("--metric", pr_metric, "rom|stability|repetition")
      ->check(CLI::IsMember({"rom", "stability", "repetition"}));
  pairs->add_option("--out", pr_out, "Output file name");
  pairs->callback(run_once([&] { cmd_pairs(g, pr_labels, pr_metric, pr_out); }));

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train one fold of a split");
  train->fallthrough()->configurable();
  std::string tr_manifest;
  std::size_t tr_fold = 0;
  TrainFlags tr_flags;
  ModelFlags tr_model;
  MetricFlags tr_metric;
  train->add_option("--manifest", tr_manifest, "Corpus manifest.json")
      ->required();
  train->add_option("--fold", tr_fold, "Fold index within the split");
  add_train_flags(train, tr_flags);
  add_model_flags(train, tr_model);
  add_metric_flags(train, tr_metric);
  train->callback(run_once([&] {
    cmd_train(g, tr_manifest, tr_flags, tr_model, tr_metric, tr_fold);
  }));

  // eval -------------------------------------------------------------------
  auto* eval =
      app.add_subcommand("eval", "Train and evaluate every fold of a split");
  eval->fallthrough()->configurable();
  std::string ev_manifest;
  int ev_jobs = 1;
  TrainFlags ev_flags;
  ModelFlags ev_model;
  MetricFlags ev_metric;
  eval->add_option("--manifest", ev_manifest, "Corpus manifest.json")
      ->required();
  eval->add_option("--jobs", ev_jobs, "Folds trained in parallel")
      ->check(CLI::PositiveNumber);
  add_train_flags(eval, ev_flags);
  add_model_flags(eval, ev_model);
  add_metric_flags(eval, ev_metric);
  eval->callback(run_once([&] {
    cmd_eval(g, ev_manifest, ev_flags, ev_model, ev_metric, ev_jobs);
  }));

  // score ------------------------------------------------------------------
  auto* score =
      app.add_subcommand("score", "Similarity of a signal to an anchor");
  score->fallthrough();
  std::string sc_signal, sc_anchor, sc_ckpt;
  bool sc_classify = false;
  score->add_option("signal", sc_signal, "Signal segment CSV")->required();
  score->add_option("anchor", sc_anchor, "Anchor segment CSV")->required();
  score->add_option("--ckpt", sc_ckpt, "Model checkpoint")->required();
  score->add_flag("--classify", sc_classify,
                  "Also print the signal's predicted ROM class");
  score->callback(run_once(
      [&] { cmd_score(sc_signal, sc_anchor, sc_ckpt, sc_classify); }));

  // plot -------------------------------------------------------------------
  auto* plot = app.add_subcommand("plot", "Render SVG diagnostics");
  plot->fallthrough()->configurable();
  std::string pl_energy, pl_cuts, pl_confusion;
  SegmentFlags pl_seg;
  plot->add_option("--energy-from", pl_energy,
                   "Recording CSV for an energy/cuts plot");
  plot->add_option("--cuts", pl_cuts,
                   "Cut file overlay (default: propose cuts)");
  add_segment_flags(plot, pl_seg);
  plot->add_option("--confusion-from", pl_confusion,
                   "report.json for a confusion heatmap");
  plot->callback(run_once(
      [&] { cmd_plot(g, pl_energy, pl_cuts, pl_seg, pl_confusion); }));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message
    return 2;
  } catch (const ParamError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
