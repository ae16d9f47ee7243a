#include "sprout/regress.hpp"

#include "sprout/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace sprout {

using nlohmann::json;

void RegressorSpec::validate() const {
  if (n_trees < 1) {
    throw ConfigError("n_trees must be positive");
  }
  if (max_depth < 1) {
    throw ConfigError("max_depth must be positive");
  }
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ConfigError("learning_rate must be in (0, 1]");
  }
  if (min_samples_leaf < 1) {
    throw ConfigError("min_samples_leaf must be positive");
  }
  if (!(subsample > 0.0 && subsample <= 1.0)) {
    throw ConfigError("subsample must be in (0, 1]");
  }
}

double RegressionTree::evaluate(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                        : n.right);
  }
  return nodes[i].value;
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> level(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes[i].feature >= 0) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

double TrainedModel::predict(std::span<const double> x) const {
  if (x.size() != layout.width()) {
    throw DataError("feature vector has " + std::to_string(x.size()) +
                    " values, model expects " + std::to_string(layout.width()) + " (" +
                    layout.version() + ")");
  }
  double sum = 0.0;
  for (const auto& t : trees) {
    sum += t.evaluate(x);
  }
  return base_prediction + spec.learning_rate * sum;
}

double TrainedModel::predict(const FeatureVector& features) const {
  return predict(features.values);
}

namespace {

// Unbiased integer in [0, bound) from raw 64-bit engine output, so results
// do not depend on the standard library's distribution implementations.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r = rng();
  while (r >= limit) {
    r = rng();
  }
  return r % bound;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[bounded(rng, i)]);
  }
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct Entry {
  double value;
  double residual;
  int row;
};

// Each feature owns a segment of `buf` holding the bag sorted by that feature.
// A node is a range [lo, hi) that is the same in every segment; splitting
// stable-partitions each segment's range so children stay sorted.
class TreeBuilder {
public:
  TreeBuilder(std::vector<Entry>& buf, std::size_t width, std::size_t m, std::size_t n_rows,
              const RegressorSpec& spec)
      : buf_(buf), width_(width), m_(m), spec_(spec), goes_left_(n_rows, 0), scratch_(m),
        inverse_(m + 1, 0.0) {
    for (std::size_t k = 1; k <= m; ++k) {
      inverse_[k] = 1.0 / static_cast<double>(k);
    }
  }

  RegressionTree build() {
    RegressionTree tree;
    grow(tree, 0, m_, 0);
    return tree;
  }

private:
  Entry* segment(std::size_t f) { return buf_.data() + f * m_; }

  Split best_split(std::size_t lo, std::size_t hi, double sum) {
    const std::size_t n = hi - lo;
    const auto total = static_cast<double>(n);
    const double parent = sum * sum / total;
    const auto min_leaf = static_cast<std::size_t>(spec_.min_samples_leaf);
    Split best;
    if (n < 2 * min_leaf) {
      return best;
    }
    // Candidate boundaries sit after position p, with n_left = p + 1.
    const std::size_t p_begin = min_leaf - 1;
    const std::size_t p_end = n - min_leaf;
    const double* inv = inverse_.data();
    for (std::size_t f = 0; f < width_; ++f) {
      const Entry* e = segment(f) + lo;
      double left_sum = 0.0;
      for (std::size_t p = 0; p < p_begin; ++p) {
        left_sum += e[p].residual;
      }
      for (std::size_t p = p_begin; p < p_end; ++p) {
        left_sum += e[p].residual;
        const double a = e[p].value;
        const double b = e[p + 1].value;
        if (!(a < b)) {
          continue;
        }
        const double right_sum = sum - left_sum;
        const double gain =
            left_sum * left_sum * inv[p + 1] + right_sum * right_sum * inv[n - p - 1] - parent;
        if (gain > best.gain) {
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) {
            mid = a;
          }
          best = Split{static_cast<int>(f), mid, gain};
        }
      }
    }
    return best;
  }

  int grow(RegressionTree& tree, std::size_t lo, std::size_t hi, int depth) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sum = 0.0;
    double sum_sq = 0.0;
    const Entry* first = segment(0);
    for (std::size_t p = lo; p < hi; ++p) {
      const double v = first[p].residual;
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / static_cast<double>(hi - lo);
    tree.nodes[static_cast<std::size_t>(index)].value = mean;

    if (depth >= spec_.max_depth || sum_sq == 0.0) {
      return index;
    }
    const Split split = best_split(lo, hi, sum);
    // Ignore gains at the level of rounding noise in the node's residuals.
    if (split.feature < 0 || split.gain <= 1e-12 * sum_sq) {
      return index;
    }

    const Entry* chosen = segment(static_cast<std::size_t>(split.feature));
    std::size_t mid = lo;
    for (std::size_t p = lo; p < hi; ++p) {
      const bool left = chosen[p].value <= split.threshold;
      goes_left_[static_cast<std::size_t>(chosen[p].row)] = left ? 1 : 0;
      mid += left ? 1 : 0;
    }
    {
      // Leaves only read segment 0 for their mean.
      const std::size_t n_seg = depth + 1 < spec_.max_depth ? width_ : 1;
      for (std::size_t g = 0; g < n_seg; ++g) {
        Entry* e = segment(g);
        std::size_t l = lo;
        std::size_t r = 0;
        for (std::size_t p = lo; p < hi; ++p) {
          if (goes_left_[static_cast<std::size_t>(e[p].row)]) {
            e[l++] = e[p];
          } else {
            scratch_[r++] = e[p];
          }
        }
        std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r), e + l);
      }
    }

    const int l = grow(tree, lo, mid, depth + 1);
    const int r = grow(tree, mid, hi, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    node.value = 0.0;
    return index;
  }

  std::vector<Entry>& buf_;
  std::size_t width_;
  std::size_t m_;
  const RegressorSpec& spec_;
  std::vector<char> goes_left_;
  std::vector<Entry> scratch_;
  std::vector<double> inverse_;
};

double mse(const std::vector<double>& y, const std::vector<double>& pred) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += (y[i] - pred[i]) * (y[i] - pred[i]);
  }
  return s / static_cast<double>(y.size());
}

} // namespace

TrainedModel fit(std::span<const LabeledExample> examples, const RegressorSpec& spec,
                 const FeatureLayout& layout, FitTrace* trace) {
  spec.validate();
  if (examples.size() < 2) {
    throw PreconditionError("fit needs at least 2 examples");
  }
  const std::size_t width = layout.width();
  const std::size_t n = examples.size();
  std::vector<double> x(n * width);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = examples[i].features.values;
    if (v.size() != width) {
      throw PreconditionError("example " + std::to_string(i) + " has " + std::to_string(v.size()) +
                              " features, expected " + std::to_string(width));
    }
    for (double value : v) {
      if (!std::isfinite(value)) {
        throw DataError("example " + std::to_string(i) + " has a non-finite feature");
      }
    }
    std::copy(v.begin(), v.end(), x.begin() + static_cast<std::ptrdiff_t>(i * width));
    y[i] = examples[i].target_days;
  }

  TrainedModel model;
  model.spec = spec;
  model.layout = layout;
  const bool constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
  model.base_prediction =
      constant ? y.front() : std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

  // Per-feature row order, ties kept in row order, with values inlined.
  std::vector<Entry> order(width * n);
  {
    std::vector<int> idx(n);
    for (std::size_t f = 0; f < width; ++f) {
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return x[static_cast<std::size_t>(a) * width + f] <
               x[static_cast<std::size_t>(b) * width + f];
      });
      for (std::size_t p = 0; p < n; ++p) {
        const auto row = static_cast<std::size_t>(idx[p]);
        order[f * n + p] = Entry{x[row * width + f], 0.0, idx[p]};
      }
    }
  }

  std::vector<double> pred(n, model.base_prediction);
  std::vector<double> residual(n);
  if (trace) {
    trace->training_mse.assign(1, mse(y, pred));
  }

  std::mt19937_64 rng(spec.seed);
  const auto n_sample = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.subsample * static_cast<double>(n))));
  std::vector<int> perm(n);
  std::vector<char> in_sample(n, 1);
  std::vector<Entry> buf(width * n_sample);

  model.trees.reserve(static_cast<std::size_t>(spec.n_trees));
  for (int t = 0; t < spec.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] = y[i] - pred[i];
    }
    if (n_sample < n) {
      std::iota(perm.begin(), perm.end(), 0);
      // Partial Fisher-Yates: the first n_sample slots are the bag.
      for (std::size_t i = 0; i < n_sample; ++i) {
        std::swap(perm[i], perm[i + bounded(rng, n - i)]);
      }
      std::fill(in_sample.begin(), in_sample.end(), 0);
      for (std::size_t i = 0; i < n_sample; ++i) {
        in_sample[static_cast<std::size_t>(perm[i])] = 1;
      }
    }
    for (std::size_t f = 0; f < width; ++f) {
      Entry* e = buf.data() + f * n_sample;
      const Entry* src = order.data() + f * n;
      for (std::size_t p = 0; p < n; ++p) {
        const auto row = static_cast<std::size_t>(src[p].row);
        if (in_sample[row]) {
          *e++ = Entry{src[p].value, residual[row], src[p].row};
        }
      }
    }
    TreeBuilder builder(buf, width, n_sample, n, spec);
    RegressionTree tree = builder.build();
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] += spec.learning_rate *
                 tree.evaluate(std::span<const double>(x.data() + i * width, width));
    }
    model.trees.push_back(std::move(tree));
    if (trace) {
      trace->training_mse.push_back(mse(y, pred));
    }
  }
  return model;
}

std::vector<int> partition_examples(std::size_t n_examples, int n_members, std::uint64_t seed) {
  if (n_members < 1) {
    throw PreconditionError("n_members must be positive");
  }
  std::vector<std::size_t> idx(n_examples);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  shuffle(idx, rng);
  std::vector<int> assignment(n_examples);
  for (std::size_t p = 0; p < n_examples; ++p) {
    assignment[idx[p]] = static_cast<int>(p % static_cast<std::size_t>(n_members));
  }
  return assignment;
}

Ensemble fit_ensemble(std::span<const LabeledExample> examples, const RegressorSpec& spec,
                      const FeatureLayout& layout, int n_members, std::uint64_t seed, int jobs) {
  spec.validate();
  if (n_members < 2) {
    throw PreconditionError("an ensemble needs at least 2 members");
  }
  const auto needed = static_cast<std::size_t>(n_members) *
                      static_cast<std::size_t>(std::max(spec.min_samples_leaf, 2));
  if (examples.size() < needed) {
    throw PreconditionError("fit_ensemble needs at least " + std::to_string(needed) +
                            " examples for " + std::to_string(n_members) + " members, got " +
                            std::to_string(examples.size()));
  }

  Ensemble ensemble;
  ensemble.subset_assignment = partition_examples(examples.size(), n_members, seed);
  std::vector<std::vector<LabeledExample>> subsets(static_cast<std::size_t>(n_members));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    subsets[static_cast<std::size_t>(ensemble.subset_assignment[i])].push_back(examples[i]);
  }

  ensemble.members.resize(static_cast<std::size_t>(n_members));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int u = next++; u < n_members; u = next++) {
      try {
        RegressorSpec member_spec = spec;
        member_spec.seed = seed + static_cast<std::uint64_t>(u);
        ensemble.members[static_cast<std::size_t>(u)] =
            fit(subsets[static_cast<std::size_t>(u)], member_spec, layout);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(jobs, n_members); ++t) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  return ensemble;
}

double t_critical_975(int dof) {
  static constexpr double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                     2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                     2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                     2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof < 1) {
    throw PreconditionError("t critical value needs at least 1 degree of freedom");
  }
  if (dof <= 30) {
    return table[dof - 1];
  }
  if (dof <= 40) {
    return 2.021;
  }
  if (dof <= 60) {
    return 2.000;
  }
  if (dof <= 120) {
    return 1.980;
  }
  return 1.960;
}

EnsemblePrediction summarize_predictions(std::span<const double> predictions) {
  const std::size_t n = predictions.size();
  if (n < 2) {
    throw PreconditionError("a confidence interval needs at least 2 predictions");
  }
  const double mean =
      std::accumulate(predictions.begin(), predictions.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double p : predictions) {
    ss += (p - mean) * (p - mean);
  }
  const double s = std::sqrt(ss / static_cast<double>(n - 1));
  const double lo = *std::min_element(predictions.begin(), predictions.end());
  const double hi = *std::max_element(predictions.begin(), predictions.end());
  return EnsemblePrediction{std::clamp(mean, lo, hi),
                            t_critical_975(static_cast<int>(n - 1)) * s /
                                std::sqrt(static_cast<double>(n))};
}

EnsemblePrediction ensemble_predict(const Ensemble& ensemble, std::span<const double> x) {
  std::vector<double> p;
  p.reserve(ensemble.members.size());
  for (const auto& m : ensemble.members) {
    p.push_back(m.predict(x));
  }
  return summarize_predictions(p);
}

EnsemblePrediction ensemble_predict(const Ensemble& ensemble, const FeatureVector& features) {
  return ensemble_predict(ensemble, std::span<const double>(features.values));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kModelFormat = "sprout-model/1";

json spec_json(const RegressorSpec& s) {
  return json{{"n_trees", s.n_trees},     {"max_depth", s.max_depth},
              {"learning_rate", s.learning_rate}, {"min_samples_leaf", s.min_samples_leaf},
              {"subsample", s.subsample}, {"seed", s.seed}};
}

RegressorSpec spec_from(const json& j) {
  RegressorSpec s;
  s.n_trees = j.at("n_trees").get<int>();
  s.max_depth = j.at("max_depth").get<int>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  s.subsample = j.at("subsample").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

json model_json(const TrainedModel& m) {
  json trees = json::array();
  for (const auto& t : m.trees) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
    }
    trees.push_back(json{{"feature", feature},
                         {"threshold", threshold},
                         {"left", left},
                         {"right", right},
                         {"value", value}});
  }
  return json{{"spec", spec_json(m.spec)},
              {"feature_layout", m.layout.version()},
              {"n_features", m.layout.width()},
              {"base_prediction", m.base_prediction},
              {"trees", std::move(trees)}};
}

TrainedModel model_from(const json& j) {
  TrainedModel m;
  m.spec = spec_from(j.at("spec"));
  m.layout = parse_feature_layout(j.at("feature_layout").get<std::string>());
  if (j.at("n_features").get<std::size_t>() != m.layout.width()) {
    throw DataError("model n_features disagrees with its feature layout");
  }
  m.base_prediction = j.at("base_prediction").get<double>();
  for (const auto& t : j.at("trees")) {
    const auto feature = t.at("feature").get<std::vector<int>>();
    const auto threshold = t.at("threshold").get<std::vector<double>>();
    const auto left = t.at("left").get<std::vector<int>>();
    const auto right = t.at("right").get<std::vector<int>>();
    const auto value = t.at("value").get<std::vector<double>>();
    const std::size_t count = feature.size();
    if (count == 0 || threshold.size() != count || left.size() != count ||
        right.size() != count || value.size() != count) {
      throw DataError("malformed tree in model file");
    }
    RegressionTree tree;
    for (std::size_t i = 0; i < count; ++i) {
      TreeNode n{feature[i], threshold[i], left[i], right[i], value[i]};
      if (n.feature >= 0) {
        const auto in_range = [&](int c) {
          return c > static_cast<int>(i) && c < static_cast<int>(count);
        };
        if (static_cast<std::size_t>(n.feature) >= m.layout.width() || !in_range(n.left) ||
            !in_range(n.right)) {
          throw DataError("malformed tree node in model file");
        }
      }
      tree.nodes.push_back(n);
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("cannot write '" + path.string() + "'");
  }
  out << text << '\n';
}

} // namespace

std::string to_json_string(const TrainedModel& model) {
  json j = model_json(model);
  j["format"] = kModelFormat;
  j["kind"] = "single";
  return j.dump(1);
}

std::string to_json_string(const Ensemble& ensemble) {
  json members = json::array();
  for (const auto& m : ensemble.members) {
    members.push_back(model_json(m));
  }
  json j{{"format", kModelFormat},
         {"kind", "ensemble"},
         {"feature_layout", ensemble.layout().version()},
         {"members", std::move(members)},
         {"subset_assignment", ensemble.subset_assignment}};
  return j.dump(1);
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  std::visit([&](const auto& m) { write_text(path, to_json_string(m)); }, model);
}

ModelFile parse_model(const std::string& json_text) {
  try {
    const json j = json::parse(json_text);
    if (j.value("format", std::string{}) != kModelFormat) {
      throw DataError("not a sprout model file (format tag missing or unsupported)");
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "single") {
      return model_from(j);
    }
    if (kind == "ensemble") {
      Ensemble e;
      for (const auto& m : j.at("members")) {
        e.members.push_back(model_from(m));
      }
      if (e.members.size() < 2) {
        throw DataError("ensemble model file needs at least 2 members");
      }
      for (const auto& m : e.members) {
        if (!(m.layout == e.members.front().layout)) {
          throw DataError("ensemble members disagree on feature layout");
        }
      }
      e.subset_assignment = j.at("subset_assignment").get<std::vector<int>>();
      return e;
    }
    throw DataError("unknown model kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open model file '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

} // namespace sprout
