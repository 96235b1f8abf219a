#include "apisentry/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>

#include "apisentry/error.hpp"
#include "apisentry/textio.hpp"

namespace apisentry {

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::support(std::size_t label) const {
  std::uint64_t sum = 0;
  for (std::size_t p = 0; p < labels_; ++p) sum += (*this)(label, p);
  return sum;
}

std::uint64_t ConfusionMatrix::predicted_count(std::size_t label) const {
  std::uint64_t sum = 0;
  for (std::size_t t = 0; t < labels_; ++t) sum += (*this)(t, label);
  return sum;
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, std::size_t labels) {
  if (preds.size() != truths.size()) {
    throw ValidationError("predictions (" + std::to_string(preds.size()) + ") and truths (" +
                          std::to_string(truths.size()) + ") differ in length");
  }
  ConfusionMatrix cm(labels);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || truths[i] < 0 || static_cast<std::size_t>(preds[i]) >= labels ||
        static_cast<std::size_t>(truths[i]) >= labels) {
      throw ValidationError("label out of range at sample " + std::to_string(i));
    }
    cm.add(static_cast<std::size_t>(truths[i]), static_cast<std::size_t>(preds[i]));
  }
  return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

MetricsReport binary_metrics(const ConfusionMatrix& cm, std::size_t positive) {
  if (cm.labels() != 2) throw ValidationError("binary metrics need a 2x2 confusion matrix");
  const std::size_t negative = 1 - positive;
  const auto tp = cm(positive, positive);
  const auto fp = cm(negative, positive);
  const auto fn = cm(positive, negative);
  const auto tn = cm(negative, negative);
  MetricsReport report;
  report.averaging = Averaging::binary_positive_class;
  report.precision = ratio(tp, tp + fp, report.degenerate);
  report.recall = ratio(tp, tp + fn, report.degenerate);
  report.f1 = harmonic(report.precision, report.recall);
  report.accuracy = ratio(tp + tn, cm.total(), report.degenerate);
  report.support[0] = cm.support(0);
  report.support[1] = cm.support(1);
  return report;
}

MetricsReport weighted_metrics(std::span<const int> preds, std::span<const int> truths, std::size_t labels) {
  const auto cm = confusion(preds, truths, labels);
  MetricsReport report;
  report.averaging = Averaging::weighted;
  const auto total = cm.total();
  std::uint64_t diagonal = 0;
  for (std::size_t l = 0; l < labels; ++l) {
    const auto support = cm.support(l);
    diagonal += cm(l, l);
    if (support == 0) continue;
    report.support[static_cast<int>(l)] = support;
    const double precision = ratio(cm(l, l), cm.predicted_count(l), report.degenerate);
    const double recall = static_cast<double>(cm(l, l)) / static_cast<double>(support);
    const double weight = static_cast<double>(support) / static_cast<double>(total);
    report.precision += weight * precision;
    report.f1 += weight * harmonic(precision, recall);
  }
  report.accuracy = ratio(diagonal, total, report.degenerate);
  // Support-weighted recall sum_l (n_l/N)(tp_l/n_l) reduces to sum_l tp_l / N.
  report.recall = report.accuracy;
  return report;
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const char> positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::uint64_t n_pos = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double midrank = 0.5 * static_cast<double>(start + 1 + end);  // mean of ranks start+1..end
    for (std::size_t k = start; k < end; ++k) {
      if (positive[order[k]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    }
    start = end;
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double pos = static_cast<double>(n_pos);
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * static_cast<double>(n_neg));
}

AucReport roc_auc_per_label(std::span<const double> scores, std::span<const int> truths, std::size_t labels) {
  if (scores.size() != truths.size() * labels) {
    throw ValidationError("score matrix must have one row of " + std::to_string(labels) + " values per sample");
  }
  AucReport report;
  report.per_label_auc.resize(labels);
  report.supports.assign(labels, 0);
  for (int t : truths) {
    if (t < 0 || static_cast<std::size_t>(t) >= labels) throw ValidationError("truth label out of range");
    ++report.supports[static_cast<std::size_t>(t)];
  }
  std::vector<double> column(truths.size());
  std::vector<char> member(truths.size());
  for (std::size_t l = 0; l < labels; ++l) {
    if (report.supports[l] == 0 || report.supports[l] == truths.size()) continue;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      column[i] = scores[i * labels + l];
      member[i] = static_cast<std::size_t>(truths[i]) == l;
    }
    report.per_label_auc[l] = binary_auc(column, member);
  }
  return report;
}

double default_rare_threshold(const Corpus& corpus) { return 0.001 * static_cast<double>(corpus.total_calls()); }

std::vector<RareLabel> rare_label_report(const Corpus& corpus, const AucReport& auc, double freq_threshold,
                                         const std::map<std::uint32_t, std::string>& names) {
  const std::size_t labels = auc.per_label_auc.size();
  std::vector<std::uint64_t> freq(labels, 0);
  for (const auto& trace : corpus.traces) {
    for (auto id : trace.calls) {
      if (id < labels) ++freq[id];
    }
  }
  std::vector<RareLabel> out;
  for (std::size_t l = 0; l < labels; ++l) {
    if (static_cast<double>(freq[l]) >= freq_threshold) continue;
    RareLabel row;
    row.label = static_cast<std::uint32_t>(l);
    row.frequency = freq[l];
    row.auc = auc.per_label_auc[l];
    if (auto it = names.find(row.label); it != names.end()) row.name = it->second;
    out.push_back(std::move(row));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RareLabel& a, const RareLabel& b) { return a.frequency < b.frequency; });
  return out;
}

std::map<std::uint32_t, std::string> parse_name_map(std::string_view content) {
  std::map<std::uint32_t, std::string> names;
  std::size_t line_no = 0;
  for (auto line : textio::lines(content)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) {
      throw ValidationError("name map line " + std::to_string(line_no) + ": expected 'id,name'");
    }
    const auto id_field = textio::trim(line.substr(0, comma));
    if (line_no == 1 && !id_field.empty() && !std::isdigit(static_cast<unsigned char>(id_field.front()))) continue;
    const auto id = textio::parse_uint(id_field, "name map line " + std::to_string(line_no));
    names[static_cast<std::uint32_t>(id)] = std::string(textio::trim(line.substr(comma + 1)));
  }
  return names;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
  return buf;
}

}  // namespace apisentry
