#include "repq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "repq/errors.hpp"
#include "repq/filter.hpp"

namespace repq {

RomClass make_rom_class(Exercise exercise, double degrees) {
  if (!(degrees > 0.0)) {
    throw ParamError("ROM must be positive, got " + std::to_string(degrees));
  }
  double collapsed = degrees >= 150.0 ? 150.0 : degrees;
  const std::vector<int>& classes = rom_classes(exercise);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (std::abs(collapsed - classes[i]) < 1e-9) {
      return RomClass{exercise, classes[i], static_cast<int>(i)};
    }
  }
  throw DataError("ROM " + std::to_string(degrees) + " deg is not a legal class for " +
                  to_string(exercise));
}

void MetricConfig::check() const {
  if (!(rom_max > 0.0)) throw ParamError("rom_max must be positive");
  if (max_reps < 1) throw ParamError("max_reps must be at least 1");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < 25.0)) {
    throw ParamError("stability cutoff must lie in (0, 25) Hz");
  }
  if (!(eps_sigma > 0.0)) throw ParamError("eps_sigma must be positive");
}

std::string to_string(SimilarityMetric m) {
  switch (m) {
    case SimilarityMetric::Rom: return "rom";
    case SimilarityMetric::Stability: return "stability";
    case SimilarityMetric::Repetition: return "repetition";
  }
  throw ParamError("unknown similarity metric enum value");
}

SimilarityMetric similarity_metric_from_string(const std::string& s) {
  if (s == "rom") return SimilarityMetric::Rom;
  if (s == "stability") return SimilarityMetric::Stability;
  if (s == "repetition") return SimilarityMetric::Repetition;
  throw ParamError("unknown similarity metric '" + s + "'");
}

double coefficient_of_variation(const SignalMatrix& s, const MetricConfig& cfg) {
  cfg.check();
  const std::size_t n = s.length();
  if (n < 2) throw ParamError("CV needs at least 2 samples");
  double acc = 0.0;
  for (int a = 0; a < 6; ++a) {
    double sum = 0.0, sumsq = 0.0;
    for (double v : s.ch[a]) {
      sum += v;
      sumsq += v * v;
    }
    const double mu = sum / static_cast<double>(n);
    const double var = std::max(sumsq / static_cast<double>(n) - mu * mu, 0.0);
    const double sigma = std::sqrt(var);
    double cv = 0.0;
    if (cfg.cv_mode == CvMode::Standard) {
      cv = sigma / std::max(std::abs(mu), cfg.eps_sigma);
    } else {
      cv = mu / std::max(sigma, cfg.eps_sigma);
    }
    acc += std::abs(cv);
  }
  return acc / 6.0;
}

double instability(const SignalMatrix& s, const MetricConfig& cfg, double fs_hz) {
  cfg.check();
  const SignalMatrix filtered = lowpass(s, cfg.cutoff_hz, fs_hz);
  return std::tanh(coefficient_of_variation(filtered, cfg));
}

double sim_rom(double m_a, double m_b, const MetricConfig& cfg) {
  cfg.check();
  for (double m : {m_a, m_b}) {
    if (m < 0.0 || m > cfg.rom_max) {
      throw ParamError("ROM " + std::to_string(m) + " outside [0, " +
                       std::to_string(cfg.rom_max) + "]");
    }
  }
  return 1.0 - std::abs(m_a / cfg.rom_max - m_b / cfg.rom_max);
}

double sim_stability(double instability_a, double instability_b) {
  return 1.0 - std::abs(instability_a - instability_b);
}

double sim_stability(const SignalMatrix& s_a, const SignalMatrix& s_b,
                     const MetricConfig& cfg) {
  return sim_stability(instability(s_a, cfg), instability(s_b, cfg));
}

double sim_repetition(int r_a, int r_b, const MetricConfig& cfg) {
  cfg.check();
  for (int r : {r_a, r_b}) {
    if (r < 1 || r > cfg.max_reps) {
      throw ParamError("repetition count " + std::to_string(r) + " outside [1, " +
                       std::to_string(cfg.max_reps) + "]");
    }
  }
  const double m = static_cast<double>(cfg.max_reps);
  return 1.0 - std::abs(static_cast<double>(r_a) / m - static_cast<double>(r_b) / m);
}

std::vector<SimilarityPair> build_pairs(const std::vector<LabeledSegment>& segments,
                                        SimilarityMetric metric,
                                        const MetricConfig& cfg) {
  cfg.check();
  // Group indices by subject; pair order follows the input order within each
  // subject so the manifest is reproducible.
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    by_subject[segments[i].segment.subject_id].push_back(i);
  }

  std::vector<SimilarityPair> pairs;
  for (const auto& [subject, idx] : by_subject) {
    for (std::size_t a : idx) {
      for (std::size_t b : idx) {
        SimilarityPair p;
        p.signal_idx = a;
        p.anchor_idx = b;
        p.metric = metric;
        const QualityLabel& la = segments[a].label;
        const QualityLabel& lb = segments[b].label;
        switch (metric) {
          case SimilarityMetric::Rom:
            p.s = sim_rom(la.rom.degrees, lb.rom.degrees, cfg);
            break;
          case SimilarityMetric::Stability:
            p.s = sim_stability(la.instability, lb.instability);
            break;
          case SimilarityMetric::Repetition:
            p.s = sim_repetition(la.reps, lb.reps, cfg);
            break;
        }
        pairs.push_back(p);
      }
    }
  }
  return pairs;
}

std::vector<Segment> merge_repetitions(const std::vector<Segment>& segments, int n) {
  if (n < 1) throw ParamError("merge width must be at least 1");
  if (n == 1) return segments;

  std::vector<Segment> out;
  for (std::size_t start = 0; start + n <= segments.size(); ++start) {
    // The group must be a run of adjacent segments from one recording.
    bool adjacent = true;
    for (std::size_t k = 1; k < static_cast<std::size_t>(n); ++k) {
      const Segment& prev = segments[start + k - 1];
      const Segment& cur = segments[start + k];
      if (cur.recording_id != prev.recording_id || cur.begin != prev.end) {
        adjacent = false;
        break;
      }
    }
    if (!adjacent) continue;

    const Segment& first = segments[start];
    const Segment& last = segments[start + n - 1];
    Segment merged;
    merged.recording_id = first.recording_id;
    merged.subject_id = first.subject_id;
    merged.exercise = first.exercise;
    merged.begin = first.begin;
    merged.end = last.end;
    merged.signal = SignalMatrix::zeros(merged.end - merged.begin);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
      const SignalMatrix& part = segments[start + k].signal;
      for (int c = 0; c < 6; ++c) {
        std::copy(part.ch[c].begin(), part.ch[c].end(),
                  merged.signal.ch[c].begin() + static_cast<std::ptrdiff_t>(offset));
      }
      offset += part.length();
    }
    out.push_back(std::move(merged));
  }
  return out;
}

void save_labels(const std::vector<LabeledSegment>& segments,
                 const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const LabeledSegment& ls : segments) {
    nlohmann::json j;
    j["segment_id"] = ls.id;
    j["subject_id"] = ls.segment.subject_id;
    j["exercise"] = to_string(ls.segment.exercise);
    j["rom_degrees"] = ls.label.rom.degrees;
    j["instability"] = ls.label.instability;
    j["reps"] = ls.label.reps;
    arr.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << arr.dump(2) << "\n";
}

std::vector<LabeledSegment> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file '" + path.string() + "'");
  nlohmann::json arr;
  try {
    in >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("labels file '" + path.string() + "': " + e.what());
  }
  if (!arr.is_array())
    throw DataError("labels file '" + path.string() + "': expected a JSON array");
  std::vector<LabeledSegment> segments;
  segments.reserve(arr.size());
  for (const auto& j : arr) {
    try {
      LabeledSegment ls;
      ls.id = j.at("segment_id").get<std::string>();
      ls.segment.recording_id = ls.id;
      ls.segment.subject_id = j.at("subject_id").get<std::string>();
      ls.segment.exercise = exercise_from_string(j.at("exercise").get<std::string>());
      ls.label.rom = make_rom_class(ls.segment.exercise,
                                    j.at("rom_degrees").get<double>());
      ls.label.instability = j.at("instability").get<double>();
      ls.label.reps = j.at("reps").get<int>();
      segments.push_back(std::move(ls));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("labels file '" + path.string() + "': " + e.what());
    }
  }
  return segments;
}

void save_pairs(const std::vector<SimilarityPair>& pairs,
                const std::vector<LabeledSegment>& segments,
                const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  for (const SimilarityPair& p : pairs) {
    nlohmann::json j;
    j["signal"] = segments[p.signal_idx].id;
    j["anchor"] = segments[p.anchor_idx].id;
    j["metric"] = to_string(p.metric);
    j["s"] = p.s;
    out << j.dump() << "\n";
  }
}

}  // namespace repq
