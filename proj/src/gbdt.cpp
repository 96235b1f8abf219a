#include "apisentry/gbdt.hpp"

#include <algorithm>
#include <cmath>

#include "apisentry/error.hpp"

namespace apisentry {

void GbdtConfig::validate() const {
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ValidationError("learning_rate must lie in (0, 1]");
  }
  if (max_depth < 1 || max_depth > 16) throw ValidationError("max_depth must lie in [1, 16]");
  if (n_estimators < 0) throw ValidationError("n_estimators must be non-negative");
  if (lambda < 0.0 || gamma < 0.0 || min_child_hessian < 0.0) {
    throw ValidationError("lambda, gamma and min_child_hessian must be non-negative");
  }
}

std::size_t RegressionTree::leaf_index(const FeatureVector& x) const {
  std::size_t node = 0;
  while (!nodes[node].is_leaf()) {
    const auto& n = nodes[node];
    node = static_cast<std::size_t>(x.value(static_cast<std::uint32_t>(n.feature)) <= n.threshold ? n.left
                                                                                                  : n.right);
  }
  return node;
}

int RegressionTree::depth() const {
  // Children are always appended after their parent.
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

double GbdtModel::predict_margin(const FeatureVector& x, std::size_t tree_limit) const {
  if (x.dimension != n_features) {
    throw ValidationError("feature dimension " + std::to_string(x.dimension) + " does not match model (" +
                          std::to_string(n_features) + ")");
  }
  double sum = 0.0;
  const auto n = std::min(tree_limit, trees.size());
  for (std::size_t t = 0; t < n; ++t) sum += trees[t].leaf_weight(x);
  return base_score + config.learning_rate * sum;
}

double sigmoid(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

double logistic_loss(std::span<const double> margins, std::span<const int> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < margins.size(); ++i) {
    // log(1 + exp(m)) - y*m, computed without overflow
    const double m = margins[i];
    const double softplus = m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
    total += softplus - labels[i] * m;
  }
  return margins.empty() ? 0.0 : total / static_cast<double>(margins.size());
}

ColumnIndex::ColumnIndex(const FeatureMatrix& matrix) : rows_(matrix.rows.size()), columns_(matrix.cols) {
  for (std::size_t r = 0; r < matrix.rows.size(); ++r) {
    const auto& row = matrix.rows[r];
    if (row.dimension != matrix.cols) throw ValidationError("row dimension does not match matrix");
    for (const auto& [col, count] : row.entries) {
      columns_[col].push_back({static_cast<std::uint32_t>(r), static_cast<double>(count)});
    }
  }
  for (auto& column : columns_) {
    std::sort(column.begin(), column.end(), [](const Entry& a, const Entry& b) {
      return a.value < b.value || (a.value == b.value && a.row < b.row);
    });
  }
}

namespace {

struct Stats {
  double grad = 0.0;
  double hess = 0.0;
  std::size_t count = 0;
};

struct Split {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  Stats left;
};

double leaf_score(double g, double h, double lambda) { return g * g / (h + lambda); }

}  // namespace

FittedTree fit_tree(const ColumnIndex& columns, std::span<const double> grad, std::span<const double> hess,
                    const GbdtConfig& config, std::vector<double>& feature_gain) {
  const std::size_t n_rows = columns.rows();
  const double lambda = config.lambda;

  FittedTree fitted;
  auto& nodes = fitted.tree.nodes;
  nodes.emplace_back();
  std::vector<Stats> node_stats(1);
  for (std::size_t r = 0; r < n_rows; ++r) {
    node_stats[0].grad += grad[r];
    node_stats[0].hess += hess[r];
  }
  node_stats[0].count = n_rows;

  std::vector<std::int32_t> position(n_rows, 0);
  std::vector<std::int32_t> frontier{0};

  // Per-level scratch, indexed by frontier slot.
  std::vector<Stats> nonzero, left;
  std::vector<double> last_value;
  std::vector<Split> best;
  std::vector<std::int32_t> slot_of;
  std::vector<std::int32_t> touched;

  for (int depth = 0; depth < config.max_depth && !frontier.empty(); ++depth) {
    const auto n_slots = frontier.size();
    slot_of.assign(nodes.size(), -1);
    for (std::size_t s = 0; s < n_slots; ++s) slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<std::int32_t>(s);
    nonzero.assign(n_slots, {});
    left.assign(n_slots, {});
    last_value.assign(n_slots, 0.0);
    best.assign(n_slots, {});

    for (std::size_t f = 0; f < columns.cols(); ++f) {
      const auto column = columns.column(f);
      if (column.empty()) continue;
      touched.clear();
      for (const auto& e : column) {
        const auto node = position[e.row];
        if (node < 0) continue;
        const auto s = slot_of[static_cast<std::size_t>(node)];
        if (s < 0) continue;
        auto& nz = nonzero[static_cast<std::size_t>(s)];
        if (nz.count == 0) touched.push_back(s);
        nz.grad += grad[e.row];
        nz.hess += hess[e.row];
        ++nz.count;
      }
      // Zero-valued rows sort first and start on the left.
      for (auto s : touched) {
        const auto& total = node_stats[static_cast<std::size_t>(frontier[static_cast<std::size_t>(s)])];
        const auto& nz = nonzero[static_cast<std::size_t>(s)];
        left[static_cast<std::size_t>(s)] = {total.grad - nz.grad, total.hess - nz.hess, total.count - nz.count};
        last_value[static_cast<std::size_t>(s)] = 0.0;
      }
      for (const auto& e : column) {
        const auto node = position[e.row];
        if (node < 0) continue;
        const auto s = slot_of[static_cast<std::size_t>(node)];
        if (s < 0) continue;
        const auto slot = static_cast<std::size_t>(s);
        auto& l = left[slot];
        if (l.count > 0 && e.value > last_value[slot]) {
          const auto& total = node_stats[static_cast<std::size_t>(node)];
          const double gr = total.grad - l.grad;
          const double hr = total.hess - l.hess;
          if (l.hess >= config.min_child_hessian && hr >= config.min_child_hessian) {
            const double gain = 0.5 * (leaf_score(l.grad, l.hess, lambda) + leaf_score(gr, hr, lambda) -
                                       leaf_score(total.grad, total.hess, lambda)) -
                                config.gamma;
            if (gain > best[slot].gain) {
              best[slot] = {static_cast<std::int32_t>(f), 0.5 * (last_value[slot] + e.value), gain, l};
            }
          }
        }
        l.grad += grad[e.row];
        l.hess += hess[e.row];
        ++l.count;
        last_value[slot] = e.value;
      }
      for (auto s : touched) nonzero[static_cast<std::size_t>(s)] = {};
    }

    std::vector<std::int32_t> next_frontier;
    std::vector<std::int32_t> split_nodes;
    for (std::size_t s = 0; s < n_slots; ++s) {
      const auto node = frontier[s];
      const auto& split = best[s];
      if (split.feature < 0) continue;
      const Stats total = node_stats[static_cast<std::size_t>(node)];
      const auto left_id = static_cast<std::int32_t>(nodes.size());
      nodes.emplace_back();
      nodes.emplace_back();
      node_stats.push_back(split.left);
      node_stats.push_back({total.grad - split.left.grad, total.hess - split.left.hess,
                            total.count - split.left.count});
      auto& n = nodes[static_cast<std::size_t>(node)];
      n.feature = split.feature;
      n.threshold = split.threshold;
      n.gain = split.gain;
      n.left = left_id;
      n.right = left_id + 1;
      feature_gain[static_cast<std::size_t>(split.feature)] += split.gain;
      split_nodes.push_back(node);
      next_frontier.push_back(left_id);
      next_frontier.push_back(left_id + 1);
    }
    if (split_nodes.empty()) break;

    // Everything defaults left (value 0 <= any threshold); larger values move right.
    for (auto& p : position) {
      if (p >= 0 && !nodes[static_cast<std::size_t>(p)].is_leaf()) p = nodes[static_cast<std::size_t>(p)].left;
    }
    for (auto node : split_nodes) {
      const auto& n = nodes[static_cast<std::size_t>(node)];
      for (const auto& e : columns.column(static_cast<std::size_t>(n.feature))) {
        if (e.value > n.threshold && position[e.row] == n.left) {
          // Rows reach this child only through `node`, so the check is exact.
          position[e.row] = n.right;
        }
      }
    }
    frontier = std::move(next_frontier);
  }

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) nodes[i].weight = -node_stats[i].grad / (node_stats[i].hess + lambda);
  }
  fitted.row_leaf = std::move(position);
  return fitted;
}

GbdtModel train_gbdt(const FeatureMatrix& x, std::span<const int> y, const GbdtConfig& config,
                     std::optional<double> base_score) {
  config.validate();
  if (x.size() != y.size()) throw ValidationError("feature rows and labels differ in length");
  if (x.size() < 2) throw ValidationError("need at least two training samples");
  if (x.cols == 0) throw ValidationError("empty feature space");
  std::size_t positives = 0;
  for (int label : y) {
    if (label != 0 && label != 1) throw ValidationError("labels must be 0 or 1");
    positives += static_cast<std::size_t>(label);
  }
  if (positives == 0 || positives == y.size()) throw ValidationError("training labels contain a single class");

  GbdtModel model;
  model.config = config;
  model.n_features = x.cols;
  model.feature_gain.assign(x.cols, 0.0);
  const double rate = static_cast<double>(positives) / static_cast<double>(y.size());
  model.base_score = base_score.value_or(std::log(rate / (1.0 - rate)));

  const ColumnIndex columns(x);
  const std::size_t n = x.size();
  std::vector<double> margin(n, model.base_score), grad(n), hess(n);
  model.trees.reserve(static_cast<std::size_t>(config.n_estimators));
  for (int round = 0; round < config.n_estimators; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = p - y[i];
      hess[i] = p * (1.0 - p);
    }
    auto fitted = fit_tree(columns, grad, hess, config, model.feature_gain);
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += config.learning_rate * fitted.tree.nodes[static_cast<std::size_t>(fitted.row_leaf[i])].weight;
    }
    model.trees.push_back(std::move(fitted.tree));
  }
  return model;
}

double predict_proba(const GbdtModel& model, const FeatureVector& x) {
  constexpr double kEps = 1e-15;
  return std::clamp(sigmoid(model.predict_margin(x)), kEps, 1.0 - kEps);
}

}  // namespace apisentry
