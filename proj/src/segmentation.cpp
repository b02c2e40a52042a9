#include "repq/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "repq/errors.hpp"

namespace repq {
namespace {

// Radius of the light moving-average applied before peak picking. Keeps
// single-sample jitter from splitting one merged peak into two.
constexpr std::size_t kPeakSmoothRadius = 2;

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + mid);
    m = 0.5 * (lower + m);
  }
  return m;
}

std::vector<double> smooth(const std::vector<double>& v, std::size_t radius) {
  const std::size_t n = v.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= radius ? i - radius : 0;
    const std::size_t hi = std::min(n - 1, i + radius);
    double acc = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) acc += v[j];
    out[i] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace

void SegmentationConfig::check() const {
  if (wx < 0.0 || wy < 0.0 || wz < 0.0) {
    throw ParamError("segmentation weights must be non-negative");
  }
  if (wx == 0.0 && wy == 0.0 && wz == 0.0) {
    throw ParamError("segmentation weights must not all be zero");
  }
  if (!(lambda > 0.0)) throw ParamError("lambda must be positive");
  if (min_gap < 1) throw ParamError("min_gap must be at least 1 sample");
  if (expected_reps < 0) throw ParamError("expected_reps must be non-negative");
}

double pointwise_energy(const SignalMatrix& s, const SegmentationConfig& cfg,
                        std::size_t i) {
  return std::abs(s.ch[0][i] * cfg.wx) + std::abs(s.ch[1][i] * cfg.wy) +
         std::abs(s.ch[2][i] * cfg.wz);
}

EnergySeries energy(const SignalMatrix& s, const SegmentationConfig& cfg) {
  cfg.check();
  const std::size_t n = s.length();
  const auto t_raw = static_cast<long long>(
      std::llround(kSampleRateHz * cfg.lambda * static_cast<double>(n) / 2000.0));
  const auto t = static_cast<std::size_t>(t_raw);
  if (n == 0 || t >= n) {
    throw ParamError("smoothing half-window T = " + std::to_string(t_raw) +
                     " does not fit a recording of length " + std::to_string(n) +
                     " (lambda too large)");
  }

  std::vector<double> root_h(n);
  for (std::size_t i = 0; i < n; ++i) {
    root_h[i] = std::sqrt(pointwise_energy(s, cfg, i));
  }

  EnergySeries e;
  e.half_window = t;
  e.values.resize(n);
  const double denom = kSampleRateHz + 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    // Window indices outside the recording contribute zero.
    const std::size_t lo = i >= t ? i - t : 0;
    const std::size_t hi = std::min(n - 1, i + t);
    double acc = pointwise_energy(s, cfg, i);
    for (std::size_t j = lo; j <= hi; ++j) acc += root_h[j];
    e.values[i] = acc / denom;
  }
  return e;
}

CutSet propose_cuts(const EnergySeries& e, const SegmentationConfig& cfg,
                    const std::string& recording_id) {
  cfg.check();
  if (e.values.empty()) throw ParamError("propose_cuts on empty energy series");

  const std::size_t n = e.values.size();
  const double med = median_of(e.values);
  const double peak = *std::max_element(e.values.begin(), e.values.end());
  const double threshold = med + 0.5 * (peak - med);

  const std::vector<double> sm = smooth(e.values, kPeakSmoothRadius);

  // Interior local maxima above the threshold; a plateau counts once, at its
  // first sample.
  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (sm[i] > threshold && sm[i] > sm[i - 1] && sm[i] >= sm[i + 1]) {
      candidates.push_back(i);
    }
  }

  // Thin to min_gap spacing, larger peak first; stable order breaks value
  // ties toward the earlier index.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return sm[a] > sm[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t c : candidates) {
    const bool clear = std::none_of(kept.begin(), kept.end(), [&](std::size_t k) {
      const std::size_t gap = c > k ? c - k : k - c;
      return gap < cfg.min_gap;
    });
    if (clear) kept.push_back(c);
  }

  if (cfg.expected_reps > 0) {
    const auto wanted = static_cast<std::size_t>(cfg.expected_reps - 1);
    if (kept.size() < wanted) {
      throw DataError("segmentation failure: expected " +
                      std::to_string(cfg.expected_reps) + " repetitions but only " +
                      std::to_string(kept.size()) + " qualifying cut(s) found (" +
                      "threshold " + std::to_string(threshold) + ", min_gap " +
                      std::to_string(cfg.min_gap) + ")");
    }
    kept.resize(wanted);  // kept is ordered best-first
  }

  std::sort(kept.begin(), kept.end());
  CutSet out;
  out.recording_id = recording_id;
  out.cuts = std::move(kept);
  out.provenance.assign(out.cuts.size(), CutProvenance::Auto);
  return out;
}

std::vector<Segment> split(const ImuRecording& rec, const CutSet& cuts) {
  const std::size_t n = rec.samples.size();
  std::size_t prev = 0;
  for (std::size_t c : cuts.cuts) {
    if (c <= prev || c >= n) {
      throw DataError("cut " + std::to_string(c) +
                      " invalid for recording of length " + std::to_string(n) +
                      " (cuts must be strictly increasing interior indices)");
    }
    prev = c;
  }

  std::vector<Segment> segments;
  segments.reserve(cuts.cuts.size() + 1);
  std::size_t begin = 0;
  for (std::size_t k = 0; k <= cuts.cuts.size(); ++k) {
    const std::size_t end = k < cuts.cuts.size() ? cuts.cuts[k] : n;
    Segment seg;
    seg.recording_id = rec.id;
    seg.subject_id = rec.subject_id;
    seg.exercise = rec.exercise;
    seg.begin = begin;
    seg.end = end;
    seg.signal = to_signal(rec, begin, end);
    segments.push_back(std::move(seg));
    begin = end;
  }
  return segments;
}

void save_cutset(const CutSet& cuts, const std::filesystem::path& path) {
  nlohmann::json j;
  j["recording_id"] = cuts.recording_id;
  j["cuts"] = cuts.cuts;
  std::vector<std::string> prov;
  prov.reserve(cuts.provenance.size());
  for (CutProvenance p : cuts.provenance) {
    prov.push_back(p == CutProvenance::Auto ? "auto" : "manual");
  }
  j["provenance"] = prov;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
}

CutSet load_cutset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  CutSet cuts;
  try {
    cuts.recording_id = j.at("recording_id").get<std::string>();
    cuts.cuts = j.at("cuts").get<std::vector<std::size_t>>();
    if (j.contains("provenance")) {
      for (const auto& p : j.at("provenance")) {
        const std::string s = p.get<std::string>();
        if (s == "auto") {
          cuts.provenance.push_back(CutProvenance::Auto);
        } else if (s == "manual") {
          cuts.provenance.push_back(CutProvenance::Manual);
        } else {
          throw DataError(path.string() + ": unknown provenance '" + s + "'");
        }
      }
    } else {
      // Hand-written files may omit provenance; treat those cuts as manual.
      cuts.provenance.assign(cuts.cuts.size(), CutProvenance::Manual);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (cuts.provenance.size() != cuts.cuts.size()) {
    throw DataError(path.string() + ": provenance length does not match cuts");
  }
  for (std::size_t k = 1; k < cuts.cuts.size(); ++k) {
    if (cuts.cuts[k] <= cuts.cuts[k - 1]) {
      throw DataError(path.string() + ": cuts must be strictly increasing");
    }
  }
  return cuts;
}

void save_energy_csv(const EnergySeries& e, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "i,E\n";
  char buf[64];
  for (std::size_t i = 0; i < e.values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, e.values[i]);
    out << buf;
  }
}

}  // namespace repq
