// Independent reference computations shared by the unit and acceptance suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "apisentry/gbdt.hpp"
#include "apisentry/seqmodel.hpp"

namespace oracle {

// ---- gradient boosting ----

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

inline double leaf_score(double g, double h, double lambda) { return g * g / (h + lambda); }

// Every (feature, midpoint) pair, evaluated directly on dense values, in
// (feature, threshold) order.
inline std::vector<SplitCandidate> enumerate_splits(const apisentry::FeatureMatrix& x, std::span<const double> g,
                                                    std::span<const double> h, const apisentry::GbdtConfig& config) {
  double G = 0, H = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    G += g[i];
    H += h[i];
  }
  std::vector<SplitCandidate> out;
  for (std::uint32_t f = 0; f < x.cols; ++f) {
    std::set<double> values;
    for (const auto& row : x.rows) values.insert(row.value(f));
    const std::vector<double> sorted(values.begin(), values.end());
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
      const double thr = 0.5 * (sorted[k] + sorted[k + 1]);
      double gl = 0, hl = 0;
      for (std::size_t i = 0; i < x.rows.size(); ++i) {
        if (x.rows[i].value(f) <= thr) {
          gl += g[i];
          hl += h[i];
        }
      }
      const double gr = G - gl, hr = H - hl;
      if (hl < config.min_child_hessian || hr < config.min_child_hessian) continue;
      const double gain = 0.5 * (leaf_score(gl, hl, config.lambda) + leaf_score(gr, hr, config.lambda) -
                                 leaf_score(G, H, config.lambda)) -
                          config.gamma;
      out.push_back({static_cast<int>(f), thr, gain});
    }
  }
  return out;
}

// Largest replay error of leaf weights against -G/(H+lambda) over every tree.
inline double leaf_replay_error(const apisentry::GbdtModel& model, const apisentry::FeatureMatrix& x,
                                std::span<const int> y) {
  std::vector<double> margin(x.size(), model.base_score);
  double worst = 0.0;
  for (const auto& tree : model.trees) {
    std::vector<double> G(tree.nodes.size(), 0.0), H(tree.nodes.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = apisentry::sigmoid(margin[i]);
      const auto leaf = tree.leaf_index(x.rows[i]);
      G[leaf] += p - y[i];
      H[leaf] += p * (1 - p);
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      if (!tree.nodes[k].is_leaf()) continue;
      worst = std::max(worst, std::abs(tree.nodes[k].weight - (-G[k] / (H[k] + model.config.lambda))));
    }
    for (std::size_t i = 0; i < x.size(); ++i) margin[i] += model.config.learning_rate * tree.leaf_weight(x.rows[i]);
  }
  return worst;
}

// ---- metrics ----

struct Weighted {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

// Per-class table built from raw counts, then averaged by true support.
inline Weighted weighted_by_class(std::span<const int> preds, std::span<const int> truths, int labels) {
  Weighted out;
  const double n = static_cast<double>(truths.size());
  if (truths.empty()) return out;
  double correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) correct += preds[i] == truths[i];
  out.accuracy = correct / n;
  for (int l = 0; l < labels; ++l) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      const bool t = truths[i] == l, p = preds[i] == l;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
      support += t;
    }
    if (support == 0) continue;
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp / (tp + fn);
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    out.precision += support / n * precision;
    out.recall += support / n * recall;
    out.f1 += support / n * f1;
  }
  return out;
}

// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
inline double pairwise_auc(std::span<const double> scores, std::span<const char> positive) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      pairs += 1;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

// ---- recurrent cell ----

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain loops over the [i | f | o | g] gate blocks.
inline std::pair<std::vector<double>, std::vector<double>> lstm_cell(const std::vector<double>& x,
                                                                     const std::vector<double>& h,
                                                                     const std::vector<double>& c,
                                                                     const apisentry::LstmParams& p) {
  const std::size_t H = h.size();
  std::vector<double> h_out(H), c_out(H);
  for (std::size_t j = 0; j < H; ++j) {
    double z[4];
    for (std::size_t gate = 0; gate < 4; ++gate) {
      const auto col = static_cast<Eigen::Index>(gate * H + j);
      double s = p.b(0, col);
      for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * p.W(static_cast<Eigen::Index>(k), col);
      for (std::size_t k = 0; k < H; ++k) s += h[k] * p.U(static_cast<Eigen::Index>(k), col);
      z[gate] = s;
    }
    const double i = logistic(z[0]), f = logistic(z[1]), o = logistic(z[2]), g = std::tanh(z[3]);
    c_out[j] = f * c[j] + i * g;
    h_out[j] = o * std::tanh(c_out[j]);
  }
  return {h_out, c_out};
}

// Max relative error of analytic gradients against central differences,
// per tensor name.
inline std::map<std::string, double> gradient_check(const apisentry::BiLstmModel& model,
                                                    std::span<const apisentry::PrefixSample> batch,
                                                    apisentry::ForwardMode mode, double eps = 1e-4,
                                                    double floor = 1e-6) {
  const auto analytic = apisentry::loss_and_gradients(model, batch, mode);
  auto grads = analytic.grads;
  auto grad_tensors = grads.tensors();
  apisentry::BiLstmModel probe = model;
  auto tensors = probe.tensors();
  std::map<std::string, double> worst;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& [name, tensor] = tensors[k];
    const auto& g = *grad_tensors[k].second;
    double err = 0.0;
    for (Eigen::Index r = 0; r < tensor->rows(); ++r) {
      for (Eigen::Index c = 0; c < tensor->cols(); ++c) {
        const double saved = (*tensor)(r, c);
        (*tensor)(r, c) = saved + eps;
        const double up = apisentry::batch_loss(probe, batch, mode);
        (*tensor)(r, c) = saved - eps;
        const double down = apisentry::batch_loss(probe, batch, mode);
        (*tensor)(r, c) = saved;
        const double numeric = (up - down) / (2 * eps);
        const double a = g(r, c);
        const double scale = std::max({std::abs(a), std::abs(numeric), floor});
        err = std::max(err, std::abs(a - numeric) / scale);
      }
    }
    worst[name] = err;
  }
  return worst;
}

}  // namespace oracle
