#include "sprout/feature_table.hpp"

#include "sprout/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

namespace sprout {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kLeadColumns = "subject_id,window_index,day_offset,target_days";

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_number(std::string_view field, const fs::path& path, std::size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    fail(path, line, "cannot parse '" + std::string(field) + "'");
  }
  return value;
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

} // namespace

FeatureLayout layout_for_width(std::size_t width) {
  if (width == 0 || width % kFeaturesPerScale != 0) {
    throw DataError("feature width " + std::to_string(width) + " is not a multiple of " +
                    std::to_string(kFeaturesPerScale));
  }
  const std::size_t blocks = width / kFeaturesPerScale;
  return FeatureLayout{blocks, blocks == 1};
}

void write_feature_table(const fs::path& path, const FeatureTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("cannot write '" + path.string() + "'");
  }
  const std::size_t width = table.layout.width();
  std::string line(kLeadColumns);
  char name[32];
  for (std::size_t c = 0; c < width; ++c) {
    std::snprintf(name, sizeof name, ",f_%03zu", c);
    line += name;
  }
  line += '\n';
  out << line;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& fv = table.rows[r];
    if (fv.values.size() != width) {
      throw PreconditionError("row " + std::to_string(r) + " has " +
                              std::to_string(fv.values.size()) + " features, layout has " +
                              std::to_string(width));
    }
    line = fv.subject_id + "," + std::to_string(fv.window_index) + "," +
           std::to_string(fv.day_offset) + ",";
    if (r < table.targets.size() && table.targets[r]) {
      append_double(line, *table.targets[r]);
    }
    for (double v : fv.values) {
      line += ',';
      append_double(line, v);
    }
    line += '\n';
    out << line;
  }
  if (!out) {
    throw InputError("failed writing '" + path.string() + "'");
  }
}

FeatureTable read_feature_table(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open '" + path.string() + "'");
  }
  FeatureTable table;
  std::string raw;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool header_seen = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (!line.empty() && line.back() == '\r') {
      line.remove_suffix(1);
    }
    if (line.empty()) {
      continue;
    }
    const auto fields = split_commas(line);
    if (!header_seen) {
      if (line.substr(0, kLeadColumns.size()) != kLeadColumns) {
        fail(path, line_no, "expected header starting '" + std::string(kLeadColumns) + "'");
      }
      width = fields.size() - 4;
      for (std::size_t c = 0; c < width; ++c) {
        char name[32];
        std::snprintf(name, sizeof name, "f_%03zu", c);
        if (fields[4 + c] != name) {
          fail(path, line_no, "expected column '" + std::string(name) + "'");
        }
      }
      table.layout = layout_for_width(width);
      header_seen = true;
      continue;
    }
    if (fields.size() != width + 4) {
      fail(path, line_no,
           "expected " + std::to_string(width + 4) + " columns, got " +
               std::to_string(fields.size()));
    }
    FeatureVector fv;
    fv.subject_id = std::string(fields[0]);
    if (fv.subject_id.empty()) {
      fail(path, line_no, "empty subject_id");
    }
    fv.window_index = parse_number<int>(fields[1], path, line_no);
    fv.day_offset = parse_number<int>(fields[2], path, line_no);
    std::optional<double> target;
    if (!fields[3].empty()) {
      target = parse_number<double>(fields[3], path, line_no);
    }
    fv.values.reserve(width);
    for (std::size_t c = 0; c < width; ++c) {
      const double v = parse_number<double>(fields[4 + c], path, line_no);
      if (!std::isfinite(v)) {
        fail(path, line_no, "non-finite feature f_" + std::to_string(c));
      }
      fv.values.push_back(v);
    }
    table.rows.push_back(std::move(fv));
    table.targets.push_back(target);
  }
  if (!header_seen) {
    throw DataError(path.string() + ": empty feature table");
  }
  return table;
}

FeatureTable to_feature_table(const ExampleTable& examples) {
  FeatureTable table;
  table.layout = examples.layout;
  for (const auto& ex : examples.examples) {
    table.rows.push_back(ex.features);
    table.targets.emplace_back(ex.target_days);
  }
  return table;
}

ExampleTable to_example_table(const FeatureTable& table) {
  ExampleTable out;
  out.layout = table.layout;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& fv = table.rows[r];
    if (r >= table.targets.size() || !table.targets[r]) {
      throw DataError("subject '" + fv.subject_id + "' window " +
                      std::to_string(fv.window_index) + " has no target_days");
    }
    const double target = *table.targets[r];
    const int offset = fv.day_offset + static_cast<int>(std::lround(target));
    auto [it, inserted] = out.sprouting_offsets.emplace(fv.subject_id, offset);
    if (!inserted && it->second != offset) {
      throw DataError("subject '" + fv.subject_id + "' has inconsistent targets");
    }
    ++out.windows_per_subject[fv.subject_id];
    out.examples.push_back(LabeledExample{fv, target});
  }
  return out;
}

} // namespace sprout
