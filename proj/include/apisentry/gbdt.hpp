#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apisentry/ngram.hpp"

namespace apisentry {

struct GbdtConfig {
  double learning_rate = 0.1;
  int max_depth = 6;
  int n_estimators = 100;
  double lambda = 1.0;             // L2 penalty on leaf weights
  double gamma = 0.0;              // minimum gain to split
  double min_child_hessian = 1.0;
  std::uint64_t seed = 42;

  void validate() const;
  bool operator==(const GbdtConfig&) const = default;
};

/// Internal nodes have `feature >= 0`; rows with value <= threshold go left.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double weight = 0.0;  // leaves only, before shrinkage
  double gain = 0.0;    // internal nodes only

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t leaf_index(const FeatureVector& x) const;
  double leaf_weight(const FeatureVector& x) const { return nodes[leaf_index(x)].weight; }
  int depth() const;
  bool operator==(const RegressionTree&) const = default;
};

struct GbdtModel {
  std::vector<RegressionTree> trees;
  double base_score = 0.0;  // log-odds
  GbdtConfig config;
  std::uint32_t n_features = 0;
  std::vector<double> feature_gain;  // accumulated split gain per column

  /// base_score + learning_rate * sum of the first `tree_limit` trees.
  double predict_margin(const FeatureVector& x,
                        std::size_t tree_limit = static_cast<std::size_t>(-1)) const;
  bool operator==(const GbdtModel&) const = default;
};

double sigmoid(double margin);

/// Mean logistic loss of `margins` against 0/1 labels.
double logistic_loss(std::span<const double> margins, std::span<const int> labels);

/// Column-major view of a FeatureMatrix: per column, the non-zero
/// (row, value) entries sorted by value then row.
class ColumnIndex {
 public:
  struct Entry {
    std::uint32_t row;
    double value;
  };

  explicit ColumnIndex(const FeatureMatrix& matrix);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return columns_.size(); }
  std::span<const Entry> column(std::size_t f) const { return columns_[f]; }

 private:
  std::size_t rows_;
  std::vector<std::vector<Entry>> columns_;
};

struct FittedTree {
  RegressionTree tree;
  std::vector<std::int32_t> row_leaf;  // leaf node reached by each training row
};

/// Grows one tree by exact greedy search on the second-order objective.
/// Leaf weight -G/(H+lambda); split gain
/// 0.5*(GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)) - gamma. Adds each split's
/// gain to `feature_gain[feature]`.
FittedTree fit_tree(const ColumnIndex& columns, std::span<const double> grad,
                    std::span<const double> hess, const GbdtConfig& config,
                    std::vector<double>& feature_gain);

/// Newton boosting on logistic loss. `base_score` defaults to the log-odds
/// of the positive rate.
GbdtModel train_gbdt(const FeatureMatrix& x, std::span<const int> y, const GbdtConfig& config,
                     std::optional<double> base_score = std::nullopt);

double predict_proba(const GbdtModel& model, const FeatureVector& x);

enum class VoteRule { mean, majority };

struct BaggedDetector {
  std::array<GbdtModel, 3> members;
  double threshold = 0.5;
  VoteRule vote = VoteRule::mean;
  std::string vocab_ref;

  bool operator==(const BaggedDetector&) const = default;
};

struct BaggingOptions {
  std::uint64_t seed = 42;
  bool bootstrap = true;
  double threshold = 0.5;
  VoteRule vote = VoteRule::mean;
};

/// (0.01, 4, 100), (0.05, 3, 200), (0.1, 5, 300) as (learning rate, depth, trees).
std::array<GbdtConfig, 3> default_member_configs();

BaggedDetector train_bagged(const FeatureMatrix& x, std::span<const int> y,
                            const std::array<GbdtConfig, 3>& configs,
                            const BaggingOptions& options = {});

struct Detection {
  int label = 0;
  double score = 0.0;
};

/// Mean of the member probabilities; label 1 iff the mean (or, for majority
/// voting, at least two members) reaches `threshold`.
Detection combine_member_scores(std::span<const double> scores, double threshold, VoteRule vote);
Detection ensemble_predict(const BaggedDetector& detector, const FeatureVector& x);

/// Gain summed over every split of every member, normalized to sum 1.
std::vector<double> feature_importance(const BaggedDetector& detector);

struct RankedFeature {
  std::uint32_t column = 0;
  NGram ngram;
  double importance = 0.0;
};

/// Top k by importance, ties by column index. k is clamped to the feature count.
std::vector<RankedFeature> rank_features(const BaggedDetector& detector, const NGramVocabulary& vocab,
                                         std::size_t k);

std::string serialize_detector(const BaggedDetector& detector);
BaggedDetector parse_detector(std::string_view content);

}  // namespace apisentry
