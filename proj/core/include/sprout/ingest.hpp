#pragma once

#include "sprout/dates.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sprout {

// One subject's raw voltage recording plus its metadata.
struct Recording {
  std::string subject_id;
  std::string variety;
  int storage_temp_c = 8;
  double sample_rate_hz = 1.0;
  Date start_day{};
  std::vector<double> samples; // volts
  std::optional<Date> sprouting_day;

  // Ground-truth sprouting day as a whole-day offset from start_day.
  std::optional<int> sprouting_offset() const;

  bool operator==(const Recording&) const = default;
};

struct Dataset {
  std::string label;
  std::vector<Recording> recordings;

  bool operator==(const Dataset&) const = default;
};

// Manifest row: everything about a subject except its samples. Lets callers
// stream large datasets one recording at a time.
struct ManifestEntry {
  std::string subject_id;
  std::string variety;
  int storage_temp_c = 8;
  double sample_rate_hz = 1.0;
  Date start_day{};
  std::optional<Date> sprouting_day;
  std::filesystem::path signal_path; // resolved against the manifest directory

  std::optional<int> sprouting_offset() const;
};

struct Manifest {
  std::string label;
  std::vector<ManifestEntry> subjects;
};

// Throws DataError naming the subject when an invariant does not hold.
void validate(const Recording& recording);
void validate(const Dataset& dataset);
// Rejects datasets containing subjects without a sprouting day.
void require_ground_truth(const Dataset& dataset);
void require_ground_truth(const Manifest& manifest);

Manifest load_manifest(const std::filesystem::path& manifest_path);

// Reads `elapsed_seconds,voltage_volts` rows (header required).
std::vector<double> load_signal_csv(const std::filesystem::path& csv_path,
                                    const std::string& subject_id);
void write_signal_csv(const std::filesystem::path& csv_path, double sample_rate_hz,
                      const std::vector<double>& samples);

Recording load_recording(const ManifestEntry& entry);
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes `<dir>/<manifest_name>` plus one `<subject_id>.csv` per recording.
// Returns the manifest path.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                                    const std::string& manifest_name = "manifest.json");

// Writes a manifest for entries whose signal files already exist.
void write_manifest(const Manifest& manifest, const std::filesystem::path& manifest_path);

} // namespace sprout
