#include "repq/imu.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "repq/errors.hpp"

namespace repq {
namespace {

constexpr double kGravity = 9.80665;  // m/s^2 per g, for "unit": "g" sidecars
constexpr const char* kCsvHeader = "t,ax,ay,az,gx,gy,gz";

double parse_field(const std::string& field, const std::filesystem::path& path,
                   std::size_t line_no) {
  const char* first = field.data();
  const char* last = first + field.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw DataError(path.string() + ":" + std::to_string(line_no) +
                    ": malformed number '" + field + "'");
  }
  return value;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

std::string to_string(Exercise e) {
  switch (e) {
    case Exercise::ShoulderAbduction: return "shoulder_abduction";
    case Exercise::ExternalRotation: return "external_rotation";
    case Exercise::ForwardFlexion: return "forward_flexion";
  }
  throw ParamError("unknown exercise enum value");
}

Exercise exercise_from_string(const std::string& s) {
  if (s == "shoulder_abduction") return Exercise::ShoulderAbduction;
  if (s == "external_rotation") return Exercise::ExternalRotation;
  if (s == "forward_flexion") return Exercise::ForwardFlexion;
  throw DataError("unknown exercise '" + s + "'");
}

const std::vector<int>& rom_classes(Exercise e) {
  static const std::vector<int> kWholeArm = {30, 60, 90, 120, 150};
  static const std::vector<int> kForearm = {45, 90, 150};
  return e == Exercise::ExternalRotation ? kForearm : kWholeArm;
}

int num_rom_classes(Exercise e) { return static_cast<int>(rom_classes(e).size()); }

SignalMatrix SignalMatrix::zeros(std::size_t len) {
  SignalMatrix m;
  for (auto& c : m.ch) c.assign(len, 0.0);
  return m;
}

SignalMatrix to_signal(const ImuRecording& rec, std::size_t begin, std::size_t end) {
  if (begin > end || end > rec.samples.size()) {
    throw ParamError("signal slice [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of range for recording of length " +
                     std::to_string(rec.samples.size()));
  }
  SignalMatrix m = SignalMatrix::zeros(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const ImuSample& s = rec.samples[i];
    m.ch[0][i - begin] = s.accel[0];
    m.ch[1][i - begin] = s.accel[1];
    m.ch[2][i - begin] = s.accel[2];
    m.ch[3][i - begin] = s.gyro[0];
    m.ch[4][i - begin] = s.gyro[1];
    m.ch[5][i - begin] = s.gyro[2];
  }
  return m;
}

SignalMatrix to_signal(const ImuRecording& rec) {
  return to_signal(rec, 0, rec.samples.size());
}

void validate(const ImuRecording& rec) {
  if (rec.fs != kSampleRateHz) {
    throw DataError("recording '" + rec.id + "': fs = " + std::to_string(rec.fs) +
                    ", expected " + std::to_string(kSampleRateHz));
  }
  const double dt = 1.0 / rec.fs;
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    const ImuSample& s = rec.samples[i];
    for (double v : s.accel) {
      if (!std::isfinite(v)) {
        throw DataError("recording '" + rec.id + "': non-finite accel at sample " +
                        std::to_string(i));
      }
    }
    for (double v : s.gyro) {
      if (!std::isfinite(v)) {
        throw DataError("recording '" + rec.id + "': non-finite gyro at sample " +
                        std::to_string(i));
      }
    }
    if (i > 0) {
      const double gap = s.t - rec.samples[i - 1].t;
      if (gap < 0.0) {
        throw DataError("recording '" + rec.id + "': timestamps decrease at sample " +
                        std::to_string(i));
      }
      if (std::abs(gap - dt) > 0.1 * dt) {
        throw DataError("recording '" + rec.id + "': sample spacing " +
                        std::to_string(gap) + " at sample " + std::to_string(i) +
                        " deviates more than 10% from 1/fs");
      }
    }
  }
}

void save_recording(const ImuRecording& rec, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot open '" + csv_path.string() + "' for writing");
  out << kCsvHeader << "\n";
  char buf[256];
  for (const ImuSample& s : rec.samples) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.t,
                  s.accel[0], s.accel[1], s.accel[2], s.gyro[0], s.gyro[1], s.gyro[2]);
    out << buf;
  }
  if (!out) throw DataError("write failed for '" + csv_path.string() + "'");

  nlohmann::json meta;
  meta["subject_id"] = rec.subject_id;
  meta["exercise"] = to_string(rec.exercise);
  meta["fs"] = rec.fs;
  meta["unit"] = "m/s^2";
  std::ofstream meta_out(sidecar_path(csv_path));
  if (!meta_out) {
    throw DataError("cannot open '" + sidecar_path(csv_path).string() + "' for writing");
  }
  meta_out << meta.dump(2) << "\n";
}

ImuRecording load_recording(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open '" + csv_path.string() + "'");

  ImuRecording rec;
  rec.id = csv_path.stem().string();

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) {
    throw DataError(csv_path.string() + ": empty file");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw DataError(csv_path.string() + ":1: expected header '" +
                    std::string(kCsvHeader) + "', got '" + line + "'");
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 7> fields{};
    std::size_t start = 0;
    for (int f = 0; f < 7; ++f) {
      std::size_t comma = line.find(',', start);
      const bool is_last = (f == 6);
      if (is_last != (comma == std::string::npos)) {
        throw DataError(csv_path.string() + ":" + std::to_string(line_no) +
                        ": expected 7 comma-separated fields");
      }
      std::string field = line.substr(start, is_last ? std::string::npos : comma - start);
      fields[f] = parse_field(field, csv_path, line_no);
      start = comma + 1;
    }
    ImuSample s;
    s.t = fields[0];
    s.accel = {fields[1], fields[2], fields[3]};
    s.gyro = {fields[4], fields[5], fields[6]};
    rec.samples.push_back(s);
  }

  const std::filesystem::path meta_path = sidecar_path(csv_path);
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw DataError("missing sidecar '" + meta_path.string() + "'");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": invalid JSON: " + e.what());
  }
  try {
    rec.subject_id = meta.at("subject_id").get<std::string>();
    rec.exercise = exercise_from_string(meta.at("exercise").get<std::string>());
    rec.fs = meta.at("fs").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  if (meta.contains("unit")) {
    const std::string unit = meta.at("unit").get<std::string>();
    if (unit == "g") {
      for (ImuSample& s : rec.samples) {
        for (double& v : s.accel) v *= kGravity;
      }
    } else if (unit != "m/s^2") {
      throw DataError(meta_path.string() + ": unknown accel unit '" + unit + "'");
    }
  }
  validate(rec);
  return rec;
}

}  // namespace repq
