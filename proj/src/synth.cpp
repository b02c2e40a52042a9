#include "repq/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"
#include "repq/errors.hpp"

namespace repq {
namespace {

constexpr double kGravity = 9.80665;  // m/s^2
constexpr double kDegToRad = std::numbers::pi / 180.0;

// Tremor band and strength. Three sinusoids per channel keep the noise
// band-limited; amplitudes scale linearly with tremor_level.
constexpr double kTremorFreqLoHz = 8.0;
constexpr double kTremorFreqHiHz = 12.0;
constexpr int kTremorComponents = 3;
constexpr double kTremorAccelAmp = 6.0;  // m/s^2 per component at tremor_level = 1
constexpr double kTremorGyroAmp = 2.5;   // rad/s per component at tremor_level = 1

// Geometry of each exercise: which gyro axis carries the rotation rate, how
// strongly gravity swings through the in-plane accelerometer channels, the
// in-plane mount offset, the slow near-axis channel g*(c0 + c1*cos(theta)),
// and the lever arm for tangential/centripetal terms. The near-axis channel
// decreases monotonically with elevation, which keeps the repetition
// boundary (theta = 0) the unique energy maximum for every ROM class.
struct ExerciseGeometry {
  int gyro_axis;
  double inplane_amp;    // fraction of g swinging through ax/ay
  double mount_offset;   // rad, in-plane sensor mount rotation
  double axis_c0;        // constant part of the near-axis channel (x g)
  double axis_c1;        // cos(theta) part of the near-axis channel (x g)
  double lever_m;        // base lever arm in meters, scaled by arm length
};

ExerciseGeometry geometry_for(Exercise e) {
  switch (e) {
    case Exercise::ShoulderAbduction:
      return {0, 1.0, 45.0 * kDegToRad, 0.30, 0.35, 0.55};
    case Exercise::ForwardFlexion:
      return {1, 1.0, 60.0 * kDegToRad, 0.25, 0.40, 0.55};
    case Exercise::ExternalRotation:
      // Forearm-only rotation about a near-vertical axis: gravity excursion
      // shrinks to sin(22 deg) of g and the lever arm to the wrist radius,
      // which preserves the whole-arm vs forearm difficulty gap.
      return {2, std::sin(22.0 * kDegToRad), 45.0 * kDegToRad, 0.80, 0.20, 0.04};
  }
  throw ParamError("unknown exercise enum value");
}

// Platform-stable uniform draw in [0, 1); std::uniform_real_distribution is
// implementation-defined, so corpora would not be byte-identical across
// standard libraries.
double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * u01(rng);
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t state = base ^ (0x517cc1b727220a95ULL * (salt + 1));
  std::uint64_t out = splitmix64(state);
  return splitmix64(state) ^ out;
}

void SubjectProfile::check() const {
  if (subject_id.empty()) throw ParamError("subject_id must not be empty");
  if (arm_length_scale < 0.8 || arm_length_scale > 1.2) {
    throw ParamError("arm_length_scale must lie in [0.8, 1.2]");
  }
  if (tempo_s < 1.5 || tempo_s > 4.0) {
    throw ParamError("tempo must lie in [1.5, 4.0] s");
  }
  if (amplitude_jitter < 0.0 || amplitude_jitter > 0.1) {
    throw ParamError("amplitude_jitter must lie in [0, 0.1]");
  }
}

SubjectProfile make_subject_profile(const std::string& subject_id,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SubjectProfile p;
  p.subject_id = subject_id;
  p.arm_length_scale = uniform(rng, 0.8, 1.2);
  p.tempo_s = uniform(rng, 1.7, 2.6);
  p.amplitude_jitter = uniform(rng, 0.0, 0.08);
  p.rng_seed = seed;
  p.check();
  return p;
}

void SynthSpec::check() const {
  profile.check();
  make_rom_class(exercise, rom_degrees);  // throws if illegal for exercise
  if (tremor_level < 0.0 || tremor_level > 1.0) {
    throw ParamError("tremor_level must lie in [0, 1]");
  }
  if (reps < 1) throw ParamError("reps must be at least 1");
}

GeneratedRecording generate(const SynthSpec& spec, const MetricConfig& metric_cfg) {
  spec.check();
  const ExerciseGeometry geo = geometry_for(spec.exercise);
  const double fs = kSampleRateHz;
  const double dt = 1.0 / fs;
  const double period = spec.profile.tempo_s;
  const double omega = 2.0 * std::numbers::pi / period;
  const double lever = geo.lever_m * spec.profile.arm_length_scale;
  const double inplane = kGravity * geo.inplane_amp * spec.profile.arm_length_scale;

  std::mt19937_64 rng(spec.profile.rng_seed);

  // Per-repetition amplitude jitter (the subject never hits exactly the same
  // peak angle twice); tempo stays fixed so boundaries land on multiples of
  // the period.
  std::vector<double> amp(spec.reps);
  for (int r = 0; r < spec.reps; ++r) {
    const double j = spec.profile.amplitude_jitter;
    amp[r] = spec.rom_degrees * (1.0 + uniform(rng, -j, j));
  }

  // Tremor: shared frequencies, independent phase per channel and component.
  std::array<double, kTremorComponents> trem_freq{};
  for (double& f : trem_freq) f = uniform(rng, kTremorFreqLoHz, kTremorFreqHiHz);
  std::array<std::array<double, kTremorComponents>, 6> trem_phase{};
  for (auto& per_channel : trem_phase) {
    for (double& ph : per_channel) ph = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  const auto tremor = [&](int channel, double t) {
    const double base =
        channel < 3 ? kTremorAccelAmp : kTremorGyroAmp;
    double v = 0.0;
    for (int c = 0; c < kTremorComponents; ++c) {
      v += std::sin(2.0 * std::numbers::pi * trem_freq[c] * t +
                    trem_phase[channel][c]);
    }
    return base * spec.tremor_level * v;
  };

  const auto n_total =
      static_cast<std::size_t>(std::llround(spec.reps * period * fs));

  ImuRecording rec;
  rec.subject_id = spec.profile.subject_id;
  rec.exercise = spec.exercise;
  rec.fs = fs;
  rec.samples.reserve(n_total);

  for (std::size_t i = 0; i < n_total; ++i) {
    const double t = static_cast<double>(i) * dt;
    auto rep = static_cast<int>(t / period);
    if (rep >= spec.reps) rep = spec.reps - 1;
    const double tau = t - rep * period;
    const double half = 0.5 * amp[rep] * kDegToRad;

    const double theta = half * (1.0 - std::cos(omega * tau));
    const double theta_dot = half * omega * std::sin(omega * tau);
    const double theta_ddot = half * omega * omega * std::cos(omega * tau);

    const double psi = theta + geo.mount_offset;
    ImuSample s;
    s.t = t;
    s.accel[0] = inplane * std::sin(psi) + lever * theta_ddot + tremor(0, t);
    s.accel[1] = inplane * std::cos(psi) - lever * theta_dot * theta_dot +
                 tremor(1, t);
    s.accel[2] = kGravity * (geo.axis_c0 + geo.axis_c1 * std::cos(theta)) +
                 tremor(2, t);
    s.gyro = {tremor(3, t), tremor(4, t), tremor(5, t)};
    s.gyro[geo.gyro_axis] += theta_dot;
    rec.samples.push_back(s);
  }

  GeneratedRecording out;
  out.rec = std::move(rec);
  out.cuts.recording_id = out.rec.id;
  for (int r = 1; r < spec.reps; ++r) {
    out.cuts.cuts.push_back(
        static_cast<std::size_t>(std::llround(r * period * fs)));
    out.cuts.provenance.push_back(CutProvenance::Auto);
  }
  out.label.rom = make_rom_class(spec.exercise, spec.rom_degrees);
  out.label.instability = instability(to_signal(out.rec), metric_cfg);
  out.label.reps = spec.reps;
  return out;
}

void CorpusSpec::check() const {
  if (n_subjects < 2) throw ParamError("corpus needs at least 2 subjects");
  if (per_cell < 1) throw ParamError("per_cell must be at least 1");
  if (reps < 1) throw ParamError("reps must be at least 1");
  for (double t : tremor_levels) {
    if (t < 0.0 || t > 1.0) throw ParamError("tremor levels must lie in [0, 1]");
  }
  if (tremor_levels.empty()) throw ParamError("tremor_levels must not be empty");
  if (amplitude_jitter_max < 0.0 || amplitude_jitter_max > 0.1) {
    throw ParamError("amplitude_jitter_max must lie in [0, 0.1]");
  }
}

std::vector<GeneratedRecording> generate_corpus(const CorpusSpec& spec,
                                                const MetricConfig& metric_cfg) {
  spec.check();
  std::vector<double> roms = spec.rom_values;
  if (roms.empty()) {
    for (int d : rom_classes(spec.exercise)) roms.push_back(d);
  }

  const char* short_name =
      spec.exercise == Exercise::ShoulderAbduction   ? "sa"
      : spec.exercise == Exercise::ForwardFlexion    ? "ff"
                                                     : "er";

  std::vector<GeneratedRecording> corpus;
  for (int s = 0; s < spec.n_subjects; ++s) {
    char sid[16];
    std::snprintf(sid, sizeof(sid), "s%02d", s);
    SubjectProfile profile = make_subject_profile(
        sid, derive_seed(spec.seed, static_cast<std::uint64_t>(s)));
    if (profile.amplitude_jitter > spec.amplitude_jitter_max) {
      profile.amplitude_jitter = spec.amplitude_jitter_max;
    }

    for (std::size_t ri = 0; ri < roms.size(); ++ri) {
      for (std::size_t ti = 0; ti < spec.tremor_levels.size(); ++ti) {
        for (int c = 0; c < spec.per_cell; ++c) {
          SynthSpec one;
          one.exercise = spec.exercise;
          one.rom_degrees = roms[ri];
          one.tremor_level = spec.tremor_levels[ti];
          one.reps = spec.reps;
          one.profile = profile;
          // Every cell gets its own stream so adding cells never reshuffles
          // existing recordings.
          one.profile.rng_seed = derive_seed(
              profile.rng_seed, 1000000ULL * static_cast<std::uint64_t>(ri + 1) +
                                    1000ULL * static_cast<std::uint64_t>(ti + 1) +
                                    static_cast<std::uint64_t>(c));
          GeneratedRecording g = generate(one, metric_cfg);
          char id[64];
          std::snprintf(id, sizeof(id), "%s_%s_rom%03d_t%03d_c%d", sid, short_name,
                        static_cast<int>(roms[ri]),
                        static_cast<int>(std::lround(spec.tremor_levels[ti] * 100)),
                        c);
          g.rec.id = id;
          g.cuts.recording_id = id;
          corpus.push_back(std::move(g));
        }
      }
    }
  }
  return corpus;
}

void write_corpus(const std::vector<GeneratedRecording>& corpus,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  for (const GeneratedRecording& g : corpus) {
    const std::string csv_name = g.rec.id + ".csv";
    const std::string cuts_name = g.rec.id + "_cuts.json";
    save_recording(g.rec, dir / csv_name);
    save_cutset(g.cuts, dir / cuts_name);
    nlohmann::json entry;
    entry["id"] = g.rec.id;
    entry["csv"] = csv_name;
    entry["cuts"] = cuts_name;
    entry["subject_id"] = g.rec.subject_id;
    entry["exercise"] = to_string(g.rec.exercise);
    entry["rom_degrees"] = g.label.rom.degrees;
    entry["instability"] = g.label.instability;
    entry["reps"] = g.label.reps;
    manifest.push_back(std::move(entry));
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) {
    throw DataError("cannot open '" + (dir / "manifest.json").string() +
                    "' for writing");
  }
  out << manifest.dump(2) << "\n";
}

}  // namespace repq
