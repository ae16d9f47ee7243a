#include "sprout/ingest.hpp"

#include "sprout/error.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace sprout {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<int> offset_of(Date start, const std::optional<Date>& sprouting) {
  if (!sprouting) {
    return std::nullopt;
  }
  return days_between(start, *sprouting);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

template <typename T>
T require_field(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw DataError(where + ": missing field '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(where + ": field '" + key + "' has the wrong type");
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  return s;
}

double parse_double(std::string_view field, const std::string& subject_id,
                    const fs::path& path, std::size_t line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') {
    field.remove_prefix(1);
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw DataError("subject '" + subject_id + "': " + path.string() + ":" +
                    std::to_string(line) + ": cannot parse '" + std::string(field) + "'");
  }
  return value;
}

} // namespace

std::optional<int> Recording::sprouting_offset() const {
  return offset_of(start_day, sprouting_day);
}

std::optional<int> ManifestEntry::sprouting_offset() const {
  return offset_of(start_day, sprouting_day);
}

void validate(const Recording& r) {
  const std::string who = "subject '" + r.subject_id + "'";
  if (r.subject_id.empty()) {
    throw DataError("recording with empty subject id");
  }
  if (!(r.sample_rate_hz > 0.0) || !std::isfinite(r.sample_rate_hz)) {
    throw DataError(who + ": sample_rate_hz must be positive");
  }
  if (r.samples.empty()) {
    throw DataError(who + ": no samples");
  }
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    if (!std::isfinite(r.samples[i])) {
      throw DataError(who + ": non-finite sample at index " + std::to_string(i));
    }
  }
  if (r.sprouting_day && days_between(r.start_day, *r.sprouting_day) < 0) {
    throw DataError(who + ": sprouting_day " + format_iso_date(*r.sprouting_day) +
                    " precedes start_day " + format_iso_date(r.start_day));
  }
}

void validate(const Dataset& dataset) {
  std::set<std::string> seen;
  for (const auto& r : dataset.recordings) {
    if (!seen.insert(r.subject_id).second) {
      throw DataError("duplicate subject id '" + r.subject_id + "'");
    }
    validate(r);
  }
}

void require_ground_truth(const Dataset& dataset) {
  for (const auto& r : dataset.recordings) {
    if (!r.sprouting_day) {
      throw DataError("subject '" + r.subject_id + "' has no sprouting_day (required for training/evaluation)");
    }
  }
}

void require_ground_truth(const Manifest& manifest) {
  for (const auto& e : manifest.subjects) {
    if (!e.sprouting_day) {
      throw DataError("subject '" + e.subject_id + "' has no sprouting_day (required for training/evaluation)");
    }
  }
}

Manifest load_manifest(const fs::path& manifest_path) {
  const std::string text = read_file(manifest_path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(manifest_path.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("subjects") || !doc["subjects"].is_array()) {
    throw DataError(manifest_path.string() + ": expected an object with a 'subjects' array");
  }

  Manifest manifest;
  manifest.label = doc.value("label", std::string{});
  const fs::path base = manifest_path.parent_path();
  std::set<std::string> seen;
  std::size_t index = 0;
  for (const auto& s : doc["subjects"]) {
    const std::string where =
        manifest_path.string() + ": subjects[" + std::to_string(index++) + "]";
    ManifestEntry e;
    e.subject_id = require_field<std::string>(s, "id", where);
    const std::string who = where + " (subject '" + e.subject_id + "')";
    if (!seen.insert(e.subject_id).second) {
      throw DataError(who + ": duplicate subject id '" + e.subject_id + "'");
    }
    e.variety = s.value("variety", std::string{});
    e.storage_temp_c = require_field<int>(s, "storage_temp_c", who);
    e.sample_rate_hz = require_field<double>(s, "sample_rate_hz", who);
    if (!(e.sample_rate_hz > 0.0)) {
      throw DataError(who + ": sample_rate_hz must be positive");
    }
    e.start_day = parse_iso_date(require_field<std::string>(s, "start_day", who));
    if (s.contains("sprouting_day") && !s["sprouting_day"].is_null()) {
      e.sprouting_day = parse_iso_date(require_field<std::string>(s, "sprouting_day", who));
      if (days_between(e.start_day, *e.sprouting_day) < 0) {
        throw DataError(who + ": sprouting_day precedes start_day");
      }
    }
    e.signal_path = base / require_field<std::string>(s, "signal_path", who);
    manifest.subjects.push_back(std::move(e));
  }
  return manifest;
}

std::vector<double> load_signal_csv(const fs::path& csv_path, const std::string& subject_id) {
  const std::string text = read_file(csv_path);
  std::vector<double> samples;
  std::string_view rest(text);
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    if (!header_seen) {
      if (line != "elapsed_seconds,voltage_volts") {
        throw DataError("subject '" + subject_id + "': " + csv_path.string() +
                        ":1: expected header 'elapsed_seconds,voltage_volts'");
      }
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) {
      throw DataError("subject '" + subject_id + "': " + csv_path.string() + ":" +
                      std::to_string(line_no) + ": expected two columns");
    }
    parse_double(line.substr(0, comma), subject_id, csv_path, line_no);
    const double v = parse_double(line.substr(comma + 1), subject_id, csv_path, line_no);
    if (!std::isfinite(v)) {
      throw DataError("subject '" + subject_id + "': " + csv_path.string() + ":" +
                      std::to_string(line_no) + ": non-finite sample");
    }
    samples.push_back(v);
  }
  if (!header_seen) {
    throw DataError("subject '" + subject_id + "': " + csv_path.string() + ": missing header row");
  }
  return samples;
}

void write_signal_csv(const fs::path& csv_path, double sample_rate_hz,
                      const std::vector<double>& samples) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) {
    throw InputError("cannot write '" + csv_path.string() + "'");
  }
  out << "elapsed_seconds,voltage_volts\n";
  char buf[64];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int n = std::snprintf(buf, sizeof buf, "%.17g,%.17g\n",
                                static_cast<double>(i) / sample_rate_hz, samples[i]);
    out.write(buf, n);
  }
  if (!out) {
    throw InputError("failed writing '" + csv_path.string() + "'");
  }
}

Recording load_recording(const ManifestEntry& e) {
  Recording r;
  r.subject_id = e.subject_id;
  r.variety = e.variety;
  r.storage_temp_c = e.storage_temp_c;
  r.sample_rate_hz = e.sample_rate_hz;
  r.start_day = e.start_day;
  r.sprouting_day = e.sprouting_day;
  r.samples = load_signal_csv(e.signal_path, e.subject_id);
  validate(r);
  return r;
}

Dataset load_dataset(const fs::path& manifest_path) {
  const Manifest manifest = load_manifest(manifest_path);
  Dataset dataset;
  dataset.label = manifest.label;
  dataset.recordings.reserve(manifest.subjects.size());
  for (const auto& e : manifest.subjects) {
    dataset.recordings.push_back(load_recording(e));
  }
  validate(dataset);
  return dataset;
}

void write_manifest(const Manifest& manifest, const fs::path& manifest_path) {
  const fs::path base = manifest_path.parent_path();
  json subjects = json::array();
  for (const auto& e : manifest.subjects) {
    json s;
    s["id"] = e.subject_id;
    s["variety"] = e.variety;
    s["storage_temp_c"] = e.storage_temp_c;
    s["sample_rate_hz"] = e.sample_rate_hz;
    s["start_day"] = format_iso_date(e.start_day);
    if (e.sprouting_day) {
      s["sprouting_day"] = format_iso_date(*e.sprouting_day);
    }
    fs::path rel = e.signal_path;
    if (rel.is_absolute() && !base.empty()) {
      rel = fs::relative(e.signal_path, fs::absolute(base));
    } else if (!base.empty()) {
      rel = e.signal_path.lexically_relative(base);
      if (rel.empty()) {
        rel = e.signal_path;
      }
    }
    s["signal_path"] = rel.generic_string();
    subjects.push_back(std::move(s));
  }
  json doc;
  doc["label"] = manifest.label;
  doc["subjects"] = std::move(subjects);
  std::ofstream out(manifest_path);
  if (!out) {
    throw InputError("cannot write '" + manifest_path.string() + "'");
  }
  out << doc.dump(2) << '\n';
}

fs::path write_dataset(const Dataset& dataset, const fs::path& dir,
                       const std::string& manifest_name) {
  validate(dataset);
  fs::create_directories(dir);
  Manifest manifest;
  manifest.label = dataset.label;
  for (const auto& r : dataset.recordings) {
    ManifestEntry e;
    e.subject_id = r.subject_id;
    e.variety = r.variety;
    e.storage_temp_c = r.storage_temp_c;
    e.sample_rate_hz = r.sample_rate_hz;
    e.start_day = r.start_day;
    e.sprouting_day = r.sprouting_day;
    e.signal_path = dir / (r.subject_id + ".csv");
    write_signal_csv(e.signal_path, r.sample_rate_hz, r.samples);
    manifest.subjects.push_back(std::move(e));
  }
  const fs::path manifest_path = dir / manifest_name;
  write_manifest(manifest, manifest_path);
  return manifest_path;
}

} // namespace sprout
