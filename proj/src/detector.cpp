#include <algorithm>
#include <numeric>
#include <sstream>

#include "apisentry/error.hpp"
#include "apisentry/gbdt.hpp"
#include "apisentry/rng.hpp"
#include "apisentry/textio.hpp"

namespace apisentry {

std::array<GbdtConfig, 3> default_member_configs() {
  std::array<GbdtConfig, 3> configs;
  configs[0].learning_rate = 0.01;
  configs[0].max_depth = 4;
  configs[0].n_estimators = 100;
  configs[1].learning_rate = 0.05;
  configs[1].max_depth = 3;
  configs[1].n_estimators = 200;
  configs[2].learning_rate = 0.1;
  configs[2].max_depth = 5;
  configs[2].n_estimators = 300;
  return configs;
}

BaggedDetector train_bagged(const FeatureMatrix& x, std::span<const int> y,
                            const std::array<GbdtConfig, 3>& configs, const BaggingOptions& options) {
  if (!(options.threshold > 0.0 && options.threshold < 1.0)) {
    throw ValidationError("threshold must lie in (0, 1)");
  }
  if (x.size() != y.size()) throw ValidationError("feature rows and labels differ in length");
  BaggedDetector detector;
  detector.threshold = options.threshold;
  detector.vote = options.vote;
  const auto bootstrap_seed = derive_seed(options.seed, "bootstrap");
  for (std::size_t m = 0; m < configs.size(); ++m) {
    if (!options.bootstrap) {
      detector.members[m] = train_gbdt(x, y, configs[m]);
      continue;
    }
    Rng rng(bootstrap_seed + m);
    FeatureMatrix sample;
    std::vector<int> labels;
    // Redraw the (rare) resample that misses a class entirely.
    for (int attempt = 0;; ++attempt) {
      sample.cols = x.cols;
      sample.rows.clear();
      labels.clear();
      for (std::size_t i = 0; i < x.size(); ++i) {
        const auto pick = rng.below(x.size());
        sample.rows.push_back(x.rows[pick]);
        labels.push_back(y[pick]);
      }
      const auto positives = std::count(labels.begin(), labels.end(), 1);
      if (positives > 0 && positives < static_cast<std::ptrdiff_t>(labels.size())) break;
      if (attempt == 100) throw ValidationError("bootstrap resamples keep missing a class");
    }
    detector.members[m] = train_gbdt(sample, labels, configs[m]);
  }
  return detector;
}

Detection combine_member_scores(std::span<const double> scores, double threshold, VoteRule vote) {
  if (scores.empty()) throw ValidationError("no member scores");
  Detection out;
  out.score = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  if (vote == VoteRule::mean) {
    out.label = out.score >= threshold ? 1 : 0;
  } else {
    const auto votes = std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= threshold; });
    out.label = 2 * static_cast<std::size_t>(votes) > scores.size() ? 1 : 0;
  }
  return out;
}

Detection ensemble_predict(const BaggedDetector& detector, const FeatureVector& x) {
  std::array<double, 3> scores{};
  for (std::size_t m = 0; m < 3; ++m) scores[m] = predict_proba(detector.members[m], x);
  return combine_member_scores(scores, detector.threshold, detector.vote);
}

std::vector<double> feature_importance(const BaggedDetector& detector) {
  const auto n = detector.members[0].feature_gain.size();
  std::vector<double> importance(n, 0.0);
  for (const auto& member : detector.members) {
    if (member.feature_gain.size() != n) throw ValidationError("members disagree on feature dimension");
    for (std::size_t f = 0; f < n; ++f) importance[f] += member.feature_gain[f];
  }
  const double total = std::accumulate(importance.begin(), importance.end(), 0.0);
  if (total > 0.0) {
    for (auto& v : importance) v /= total;
  }
  return importance;
}

std::vector<RankedFeature> rank_features(const BaggedDetector& detector, const NGramVocabulary& vocab,
                                         std::size_t k) {
  const auto importance = feature_importance(detector);
  if (importance.size() != vocab.size()) {
    throw ValidationError("vocabulary has " + std::to_string(vocab.size()) + " columns, detector has " +
                          std::to_string(importance.size()));
  }
  std::vector<std::uint32_t> order(importance.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return importance[a] > importance[b]; });
  order.resize(std::min(k, order.size()));
  std::vector<RankedFeature> out;
  for (auto col : order) out.push_back({col, vocab.entry(col), importance[col]});
  return out;
}

// Persistence: line-oriented "key value..." document.

namespace {

constexpr std::string_view kDetectorMagic = "apisentry-detector";
constexpr int kDetectorVersion = 1;

class Reader {
 public:
  explicit Reader(std::string_view content) : lines_(textio::lines(content)) {}

  std::vector<std::string_view> expect(std::string_view key, std::size_t n_values) {
    while (pos_ < lines_.size() && textio::trim(lines_[pos_]).empty()) ++pos_;
    if (pos_ >= lines_.size()) throw ValidationError("detector: unexpected end of file, wanted '" + std::string(key) + "'");
    auto fields = textio::split(lines_[pos_], ' ');
    ++pos_;
    if (fields.empty() || fields[0] != key || fields.size() != n_values + 1) {
      throw ValidationError("detector line " + std::to_string(pos_) + ": expected '" + std::string(key) + "' with " +
                            std::to_string(n_values) + " values");
    }
    fields.erase(fields.begin());
    return fields;
  }

 private:
  std::vector<std::string_view> lines_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_detector(const BaggedDetector& detector) {
  using textio::format_double;
  std::ostringstream out;
  out << kDetectorMagic << ' ' << kDetectorVersion << '\n';
  out << "threshold " << format_double(detector.threshold) << '\n';
  out << "vote " << (detector.vote == VoteRule::mean ? "mean" : "majority") << '\n';
  out << "vocab_ref " << (detector.vocab_ref.empty() ? "-" : detector.vocab_ref) << '\n';
  for (std::size_t m = 0; m < detector.members.size(); ++m) {
    const auto& model = detector.members[m];
    const auto& c = model.config;
    out << "member " << m << '\n';
    out << "config " << format_double(c.learning_rate) << ' ' << c.max_depth << ' ' << c.n_estimators << ' '
        << format_double(c.lambda) << ' ' << format_double(c.gamma) << ' ' << format_double(c.min_child_hessian)
        << ' ' << c.seed << '\n';
    out << "base_score " << format_double(model.base_score) << '\n';
    out << "n_features " << model.n_features << '\n';
    std::size_t nonzero = 0;
    for (double g : model.feature_gain) nonzero += g != 0.0;
    out << "gains " << nonzero << '\n';
    for (std::size_t f = 0; f < model.feature_gain.size(); ++f) {
      if (model.feature_gain[f] != 0.0) out << "g " << f << ' ' << format_double(model.feature_gain[f]) << '\n';
    }
    out << "trees " << model.trees.size() << '\n';
    for (const auto& tree : model.trees) {
      out << "tree " << tree.nodes.size() << '\n';
      for (const auto& n : tree.nodes) {
        out << "n " << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
            << format_double(n.weight) << ' ' << format_double(n.gain) << '\n';
      }
    }
  }
  return out.str();
}

BaggedDetector parse_detector(std::string_view content) {
  using textio::parse_double;
  using textio::parse_int;
  using textio::parse_uint;
  Reader reader(content);
  const auto header = reader.expect(kDetectorMagic, 1);
  if (parse_int(header[0], "detector version") != kDetectorVersion) {
    throw ValidationError("detector: unsupported version " + std::string(header[0]));
  }
  BaggedDetector detector;
  detector.threshold = parse_double(reader.expect("threshold", 1)[0], "threshold");
  const auto vote = reader.expect("vote", 1)[0];
  if (vote == "mean") {
    detector.vote = VoteRule::mean;
  } else if (vote == "majority") {
    detector.vote = VoteRule::majority;
  } else {
    throw ValidationError("detector: unknown vote rule '" + std::string(vote) + "'");
  }
  const auto ref = reader.expect("vocab_ref", 1)[0];
  detector.vocab_ref = ref == "-" ? std::string() : std::string(ref);

  for (std::size_t m = 0; m < detector.members.size(); ++m) {
    auto& model = detector.members[m];
    if (parse_uint(reader.expect("member", 1)[0], "member") != m) throw ValidationError("detector: members out of order");
    const auto c = reader.expect("config", 7);
    model.config.learning_rate = parse_double(c[0], "learning_rate");
    model.config.max_depth = static_cast<int>(parse_int(c[1], "max_depth"));
    model.config.n_estimators = static_cast<int>(parse_int(c[2], "n_estimators"));
    model.config.lambda = parse_double(c[3], "lambda");
    model.config.gamma = parse_double(c[4], "gamma");
    model.config.min_child_hessian = parse_double(c[5], "min_child_hessian");
    model.config.seed = parse_uint(c[6], "seed");
    model.config.validate();
    model.base_score = parse_double(reader.expect("base_score", 1)[0], "base_score");
    model.n_features = static_cast<std::uint32_t>(parse_uint(reader.expect("n_features", 1)[0], "n_features"));
    model.feature_gain.assign(model.n_features, 0.0);
    const auto n_gains = parse_uint(reader.expect("gains", 1)[0], "gains");
    for (std::uint64_t i = 0; i < n_gains; ++i) {
      const auto g = reader.expect("g", 2);
      const auto f = parse_uint(g[0], "gain column");
      if (f >= model.n_features) throw ValidationError("detector: gain column out of range");
      model.feature_gain[f] = parse_double(g[1], "gain");
    }
    const auto n_trees = parse_uint(reader.expect("trees", 1)[0], "trees");
    for (std::uint64_t t = 0; t < n_trees; ++t) {
      RegressionTree tree;
      const auto n_nodes = parse_uint(reader.expect("tree", 1)[0], "tree");
      for (std::uint64_t i = 0; i < n_nodes; ++i) {
        const auto f = reader.expect("n", 6);
        TreeNode node;
        node.feature = static_cast<std::int32_t>(parse_int(f[0], "feature"));
        node.threshold = parse_double(f[1], "threshold");
        node.left = static_cast<std::int32_t>(parse_int(f[2], "left"));
        node.right = static_cast<std::int32_t>(parse_int(f[3], "right"));
        node.weight = parse_double(f[4], "weight");
        node.gain = parse_double(f[5], "gain");
        const bool leaf = node.is_leaf();
        if (!leaf && (node.feature >= static_cast<std::int32_t>(model.n_features) || node.left <= static_cast<std::int32_t>(i) ||
                      node.right <= static_cast<std::int32_t>(i) || static_cast<std::uint64_t>(node.left) >= n_nodes ||
                      static_cast<std::uint64_t>(node.right) >= n_nodes)) {
          throw ValidationError("detector: malformed tree node");
        }
        tree.nodes.push_back(node);
      }
      if (tree.nodes.empty()) throw ValidationError("detector: empty tree");
      model.trees.push_back(std::move(tree));
    }
  }
  return detector;
}

}  // namespace apisentry
