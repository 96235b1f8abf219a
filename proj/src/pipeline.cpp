#include "apisentry/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "apisentry/error.hpp"
#include "apisentry/rng.hpp"

namespace apisentry::pipeline {

std::vector<int> detect_labels(const BaggedDetector& detector, const FeatureMatrix& x) {
  std::vector<int> out;
  out.reserve(x.size());
  for (const auto& row : x.rows) out.push_back(ensemble_predict(detector, row).label);
  return out;
}

DetectionOutcome run_detection(const Corpus& corpus, const DetectionSetup& setup) {
  DetectionOutcome out;
  const auto prepared = canonicalize(corpus, setup.collapse, setup.max_len);
  auto [train, test] = stratified_split(prepared, setup.split);
  if (setup.oversample_train) train = random_oversample(train, derive_seed(setup.split.seed, "balance-train"));
  if (setup.oversample_test) test = random_oversample(test, derive_seed(setup.split.seed, "balance-test"));

  out.vocab = build_vocabulary(train, setup.min_count, setup.top_k);
  const auto x_train = vectorize_corpus(train, out.vocab);
  const auto x_test = vectorize_corpus(test, out.vocab);
  const auto y_train = labels_of(train);
  const auto y_test = labels_of(test);

  out.detector = train_bagged(x_train, y_train, setup.members, setup.bagging);
  out.train_metrics = binary_metrics(confusion(detect_labels(out.detector, x_train), y_train, 2));
  out.test_metrics = binary_metrics(confusion(detect_labels(out.detector, x_test), y_test, 2));
  for (auto& ranked : rank_features(out.detector, out.vocab, setup.ranked)) {
    const auto [good, mal] = class_frequency(train, ranked.ngram);
    out.top_features.push_back({std::move(ranked), good, mal});
  }
  out.train = std::move(train);
  out.test = std::move(test);
  return out;
}

std::vector<PrefixSample> subsample(std::vector<PrefixSample> samples, std::size_t cap, std::uint64_t seed) {
  if (cap == 0 || samples.size() <= cap) return samples;
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng(seed, "subsample").shuffle(idx);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<PrefixSample> out;
  out.reserve(cap);
  for (auto i : idx) out.push_back(std::move(samples[i]));
  return out;
}

Corpus keep_last_calls(Corpus corpus, std::size_t n) {
  if (n == 0) return corpus;
  for (auto& trace : corpus.traces) {
    if (trace.calls.size() > n) trace.calls.erase(trace.calls.begin(), trace.calls.end() - static_cast<std::ptrdiff_t>(n));
  }
  return corpus;
}

PredictionOutcome run_prediction(const Corpus& corpus, const PredictionSetup& setup) {
  const auto prepared = keep_last_calls(corpus, setup.keep_last);
  SplitSpec split{setup.test_fraction, setup.seed, false};
  const auto [train_corpus, test_corpus] = stratified_split(prepared, split);
  const auto train_samples =
      subsample(prefix_samples(train_corpus), setup.max_train_samples, derive_seed(setup.seed, "train-samples"));
  const auto test_samples =
      subsample(prefix_samples(test_corpus), setup.max_test_samples, derive_seed(setup.seed, "test-samples"));
  if (test_samples.empty()) throw ValidationError("test split yields no prefix samples");

  PredictionOutcome out;
  out.trained = train(train_samples, setup.model);
  const auto& model = out.trained.model;
  const std::size_t labels = model.config.vocab_size;

  std::vector<int> preds, truths;
  std::vector<double> scores;
  scores.reserve(test_samples.size() * labels);
  const std::size_t chunk = model.config.batch_size;
  for (std::size_t start = 0; start < test_samples.size(); start += chunk) {
    const auto end = std::min(test_samples.size(), start + chunk);
    std::vector<std::vector<ApiCallId>> prefixes;
    for (std::size_t i = start; i < end; ++i) prefixes.push_back(test_samples[i].prefix);
    const auto probs = forward_batch(model, prefixes);
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < probs.cols(); ++k) {
        if (probs(r, k) > probs(r, best)) best = k;
      }
      preds.push_back(static_cast<int>(best));
      truths.push_back(static_cast<int>(test_samples[start + static_cast<std::size_t>(r)].next));
      for (Eigen::Index k = 0; k < probs.cols(); ++k) scores.push_back(probs(r, k));
    }
  }
  out.test_metrics = weighted_metrics(preds, truths, labels);
  out.auc = roc_auc_per_label(scores, truths, labels);
  out.rare = rare_label_report(prepared, out.auc, default_rare_threshold(prepared));

  // A random held-out trace long enough to decode `decode_steps` calls past a 2-call seed.
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < test_corpus.traces.size(); ++i) {
    if (test_corpus.traces[i].calls.size() >= setup.decode_steps + 2) candidates.push_back(i);
  }
  if (!candidates.empty() && setup.decode_steps > 0) {
    Rng rng(setup.seed, "decode-example");
    const auto& trace = test_corpus.traces[candidates[rng.below(candidates.size())]];
    const auto cut = trace.calls.size() - setup.decode_steps;
    DecodeExample example;
    example.trace_id = trace.id;
    example.input.assign(trace.calls.begin(), trace.calls.begin() + static_cast<std::ptrdiff_t>(cut));
    example.truth.assign(trace.calls.begin() + static_cast<std::ptrdiff_t>(cut), trace.calls.end());
    example.predicted = predict_next_k(model, example.input, setup.decode_steps);
    out.example = std::move(example);
  }
  return out;
}

}  // namespace apisentry::pipeline
