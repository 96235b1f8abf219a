#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "apisentry/corpus.hpp"
#include "apisentry/eval.hpp"
#include "apisentry/gbdt.hpp"
#include "apisentry/ngram.hpp"
#include "apisentry/seqmodel.hpp"

namespace apisentry::pipeline {

struct DetectionSetup {
  bool collapse = false;
  std::size_t max_len = 100;
  SplitSpec split;
  bool oversample_train = true;
  bool oversample_test = true;
  std::uint64_t min_count = 1;
  std::optional<std::size_t> top_k;
  std::array<GbdtConfig, 3> members = default_member_configs();
  BaggingOptions bagging;
  std::size_t ranked = 10;
};

struct RankedWithFrequency {
  RankedFeature feature;
  std::uint64_t goodware_count = 0;
  std::uint64_t malware_count = 0;
};

struct DetectionOutcome {
  Corpus train;
  Corpus test;
  NGramVocabulary vocab;
  BaggedDetector detector;
  MetricsReport train_metrics;
  MetricsReport test_metrics;
  std::vector<RankedWithFrequency> top_features;  // class counts over the prepared train split
};

/// canonicalize → split → oversample → vocabulary on train → vectorize →
/// bagged training → held-out metrics → feature ranking.
DetectionOutcome run_detection(const Corpus& corpus, const DetectionSetup& setup);

std::vector<int> detect_labels(const BaggedDetector& detector, const FeatureMatrix& x);

struct PredictionSetup {
  BiLstmConfig model;
  double test_fraction = 0.2;
  std::uint64_t seed = 42;
  /// Keep only the last N calls of each trace (0 keeps everything).
  std::size_t keep_last = 0;
  /// Cap on training samples after expansion (0 keeps everything).
  std::size_t max_train_samples = 0;
  std::size_t max_test_samples = 0;
  std::size_t decode_steps = 10;
};

struct DecodeExample {
  std::string trace_id;
  std::vector<ApiCallId> input;
  std::vector<ApiCallId> predicted;
  std::vector<ApiCallId> truth;
};

struct PredictionOutcome {
  TrainResult trained;
  MetricsReport test_metrics;
  AucReport auc;
  std::vector<RareLabel> rare;
  std::optional<DecodeExample> example;
};

PredictionOutcome run_prediction(const Corpus& corpus, const PredictionSetup& setup);

/// Deterministic subsample (without replacement) down to `cap` items, order preserved.
std::vector<PrefixSample> subsample(std::vector<PrefixSample> samples, std::size_t cap, std::uint64_t seed);

/// Keeps the last `n` calls of each trace.
Corpus keep_last_calls(Corpus corpus, std::size_t n);

}  // namespace apisentry::pipeline
