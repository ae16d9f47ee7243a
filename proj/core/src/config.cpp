#include "sprout/config.hpp"

#include "sprout/error.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace sprout {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct Entry {
  std::string where;
  std::string value;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(where + ": " + what + " (got '" + value + "')");
  }

  double real() const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
      fail("expected a number");
    }
    return v;
  }

  long long integer() const {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
      fail("expected an integer");
    }
    return v;
  }

  bool boolean() const {
    if (value == "true" || value == "1" || value == "yes" || value == "on") {
      return true;
    }
    if (value == "false" || value == "0" || value == "no" || value == "off") {
      return false;
    }
    fail("expected a boolean");
  }

  std::vector<double> reals() const {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) {
        continue;
      }
      out.push_back(Entry{where, item}.real());
    }
    return out;
  }
};

void apply_entry(const std::string& section, const std::string& key, const Entry& e,
                 PipelineConfig& c) {
  auto unknown = [&] { throw ConfigError(e.where + ": unknown key '" + section + "." + key + "'"); };
  if (section == "preprocess") {
    if (key == "notch") {
      c.chain.notch_hz = e.reals();
    } else if (key == "notch_q") {
      c.chain.notch_q = e.real();
    } else if (key == "lowpass") {
      c.chain.lowpass_hz = e.real();
    } else if (key == "lowpass_q") {
      c.chain.lowpass_q = e.real();
    } else if (key == "target_hz") {
      c.chain.target_hz = e.real();
    } else if (key == "window_seconds") {
      c.window_seconds = static_cast<int>(e.integer());
    } else {
      unknown();
    }
  } else if (section == "wavelet") {
    if (key == "scales") {
      c.scales = static_cast<std::size_t>(e.integer());
    } else if (key == "wavelet") {
      c.wavelet = e.value;
    } else if (key == "omega0") {
      c.omega0 = e.real();
    } else if (key == "band") {
      const auto band = e.reals();
      if (band.size() != 2) {
        e.fail("expected 'f_min, f_max'");
      }
      c.band_hz = std::make_pair(band[0], band[1]);
    } else {
      unknown();
    }
  } else if (section == "features") {
    if (key == "entropy_bins") {
      c.entropy_bins = static_cast<int>(e.integer());
    } else if (key == "time_domain") {
      c.time_domain = e.boolean();
    } else {
      unknown();
    }
  } else if (section == "regress") {
    if (key == "n_trees") {
      c.regressor.n_trees = static_cast<int>(e.integer());
    } else if (key == "max_depth") {
      c.regressor.max_depth = static_cast<int>(e.integer());
    } else if (key == "learning_rate") {
      c.regressor.learning_rate = e.real();
    } else if (key == "min_samples_leaf") {
      c.regressor.min_samples_leaf = static_cast<int>(e.integer());
    } else if (key == "subsample") {
      c.regressor.subsample = e.real();
    } else if (key == "strategy") {
      try {
        c.strategy = parse_strategy(e.value);
      } catch (const ConfigError&) {
        e.fail("expected 'single' or 'ensemble'");
      }
    } else if (key == "n_members") {
      c.n_members = static_cast<int>(e.integer());
    } else {
      unknown();
    }
  } else if (section == "estimate") {
    if (key == "uq_th") {
      c.uq_th = e.real();
    } else {
      unknown();
    }
  } else if (section == "evaluate") {
    if (key == "bin_width") {
      c.evaluation.bin_width = e.real();
    } else if (key == "rolling_n") {
      c.evaluation.rolling_n = static_cast<int>(e.integer());
    } else if (key == "tlag_min") {
      c.evaluation.tlag_min = static_cast<int>(e.integer());
    } else if (key == "tlag_max") {
      c.evaluation.tlag_max = static_cast<int>(e.integer());
    } else if (key == "percentile_step") {
      c.evaluation.percentile_step = e.real();
    } else if (key == "low_support_count") {
      c.evaluation.low_support_count = static_cast<int>(e.integer());
    } else if (key == "uq_sweep") {
      c.evaluation.uq_sweep = e.reals();
    } else {
      unknown();
    }
  } else if (section == "run") {
    if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(e.integer());
    } else if (key == "jobs") {
      c.jobs = static_cast<int>(e.integer());
    } else {
      unknown();
    }
  } else {
    throw ConfigError(e.where + ": unknown section '[" + section + "]'");
  }
}

} // namespace

std::string to_string(Strategy strategy) {
  return strategy == Strategy::single ? "single" : "ensemble";
}

Strategy parse_strategy(const std::string& text) {
  if (text == "single") {
    return Strategy::single;
  }
  if (text == "ensemble") {
    return Strategy::ensemble;
  }
  throw ConfigError("unknown strategy '" + text + "' (expected single|ensemble)");
}

void PipelineConfig::validate() const {
  if (window_seconds <= 0) {
    throw ConfigError("window_seconds must be positive");
  }
  if (!(chain.target_hz > 0.0)) {
    throw ConfigError("target_hz must be positive");
  }
  if (!time_domain && scales < 2) {
    throw ConfigError("at least 2 wavelet scales are required");
  }
  if (wavelet != "morlet") {
    throw ConfigError("unsupported wavelet '" + wavelet + "' (only 'morlet')");
  }
  if (!(omega0 > 0.0)) {
    throw ConfigError("omega0 must be positive");
  }
  if (entropy_bins < 1) {
    throw ConfigError("entropy_bins must be at least 1");
  }
  regressor.validate();
  if (uq_th && !(*uq_th > 0.0)) {
    throw ConfigError("uq_th must be positive");
  }
  if (n_members < 2) {
    throw ConfigError("an ensemble needs at least 2 members");
  }
  if (jobs < 1) {
    throw ConfigError("jobs must be at least 1");
  }
  if (!(evaluation.bin_width > 0.0)) {
    throw ConfigError("bin_width must be positive");
  }
  if (evaluation.rolling_n < 1) {
    throw ConfigError("rolling_n must be at least 1");
  }
  if (evaluation.tlag_min > evaluation.tlag_max) {
    throw ConfigError("tlag_min must not exceed tlag_max");
  }
  if (!(evaluation.percentile_step > 0.0) || evaluation.percentile_step > 100.0) {
    throw ConfigError("percentile_step must be in (0, 100]");
  }
}

std::size_t window_length(const PipelineConfig& config) {
  return static_cast<std::size_t>(std::llround(config.chain.target_hz * config.window_seconds));
}

ScalePlan scale_plan(const PipelineConfig& config) {
  return plan_scales(config.chain.target_hz, window_length(config), config.scales, config.omega0,
                     config.band_hz);
}

FeatureLayout feature_layout(const PipelineConfig& config) {
  return FeatureLayout{config.time_domain ? std::size_t{1} : config.scales, config.time_domain};
}

std::set<std::string> apply_config_text(const std::string& text, PipelineConfig& config,
                                        const std::string& origin) {
  std::set<std::string> applied;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) {
      line.erase(comment);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(where + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value'");
    }
    if (section.empty()) {
      throw ConfigError(where + ": key outside of a section");
    }
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    const std::string key = trim(line.substr(0, eq));
    apply_entry(section, key, Entry{where, value}, config);
    applied.insert(section + "." + key);
  }
  return applied;
}

std::set<std::string> apply_config_file(const std::filesystem::path& path,
                                        PipelineConfig& config) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open config file '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return apply_config_text(buf.str(), config, path.string());
}

std::string config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["preprocess"] = {{"notch_hz", c.chain.notch_hz},
                     {"notch_q", c.chain.notch_q},
                     {"lowpass_hz", c.chain.lowpass_hz},
                     {"lowpass_q", c.chain.lowpass_q},
                     {"target_hz", c.chain.target_hz},
                     {"window_seconds", c.window_seconds}};
  j["wavelet"] = {{"scales", c.scales}, {"wavelet", c.wavelet}, {"omega0", c.omega0}};
  if (c.band_hz) {
    j["wavelet"]["band_hz"] = {c.band_hz->first, c.band_hz->second};
  } else {
    j["wavelet"]["band_hz"] = nullptr;
  }
  j["features"] = {{"entropy_bins", c.entropy_bins},
                   {"time_domain", c.time_domain},
                   {"layout", feature_layout(c).version()}};
  j["regress"] = {{"n_trees", c.regressor.n_trees},
                  {"max_depth", c.regressor.max_depth},
                  {"learning_rate", c.regressor.learning_rate},
                  {"min_samples_leaf", c.regressor.min_samples_leaf},
                  {"subsample", c.regressor.subsample},
                  {"strategy", to_string(c.strategy)},
                  {"n_members", c.n_members}};
  j["estimate"] = {{"uq_th", c.uq_th ? nlohmann::ordered_json(*c.uq_th) : nlohmann::ordered_json()},
                   {"uq_rule", "discard when 2 * ci_halfwidth > uq_th"}};
  j["evaluate"] = {{"bin_width", c.evaluation.bin_width},
                   {"rolling_n", c.evaluation.rolling_n},
                   {"tlag_min", c.evaluation.tlag_min},
                   {"tlag_max", c.evaluation.tlag_max},
                   {"percentile_step", c.evaluation.percentile_step},
                   {"low_support_count", c.evaluation.low_support_count},
                   {"uq_sweep", c.evaluation.uq_sweep}};
  j["run"] = {{"seed", c.seed}, {"jobs", c.jobs}};
  return j.dump(2);
}

} // namespace sprout
