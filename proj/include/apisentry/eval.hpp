#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apisentry/corpus.hpp"

namespace apisentry {

/// counts(truth, predicted)
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t labels) : labels_(labels), counts_(labels * labels, 0) {}

  std::size_t labels() const { return labels_; }
  std::uint64_t operator()(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * labels_ + predicted];
  }
  void add(std::size_t truth, std::size_t predicted) { ++counts_[truth * labels_ + predicted]; }
  std::uint64_t total() const;
  std::uint64_t support(std::size_t label) const;          // row sum
  std::uint64_t predicted_count(std::size_t label) const;  // column sum

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t labels_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, std::size_t labels);

enum class Averaging { binary_positive_class, weighted };

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Averaging averaging = Averaging::weighted;
  std::map<int, std::uint64_t> support;
  /// Set when some ratio was 0/0 and reported as 0.
  bool degenerate = false;
};

MetricsReport binary_metrics(const ConfusionMatrix& cm, std::size_t positive = 1);

/// One-vs-rest precision/recall/F1 per label, averaged with weights equal to
/// each label's true support.
MetricsReport weighted_metrics(std::span<const int> preds, std::span<const int> truths, std::size_t labels);

struct AucReport {
  std::vector<std::optional<double>> per_label_auc;  // empty when the label is single-class
  std::vector<std::uint64_t> supports;
};

/// Mann-Whitney rank statistic with midranks for ties. Empty unless both
/// positives and negatives are present.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const char> positive);

/// `scores` is row-major, `labels` columns per sample.
AucReport roc_auc_per_label(std::span<const double> scores, std::span<const int> truths, std::size_t labels);

struct RareLabel {
  std::uint32_t label = 0;
  std::uint64_t frequency = 0;
  std::optional<double> auc;
  std::string name;  // empty without a name map
};

/// Threshold of 0.1% of all calls in the corpus.
double default_rare_threshold(const Corpus& corpus);

/// Labels whose call frequency in `corpus` is below `freq_threshold`,
/// ascending by frequency (ties by label).
std::vector<RareLabel> rare_label_report(const Corpus& corpus, const AucReport& auc, double freq_threshold,
                                         const std::map<std::uint32_t, std::string>& names = {});

/// "id,name" per line.
std::map<std::uint32_t, std::string> parse_name_map(std::string_view content);

/// Fraction rendered as a percentage with two decimals, e.g. "95.85%".
std::string percent(double fraction);

}  // namespace apisentry
