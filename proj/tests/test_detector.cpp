#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "apisentry/error.hpp"
#include "apisentry/gbdt.hpp"
#include "apisentry/ngram.hpp"
#include "apisentry/rng.hpp"
#include "apisentry/synthetic.hpp"

using namespace apisentry;

namespace {

struct Prepared {
  Corpus corpus;
  NGramVocabulary vocab;
  FeatureMatrix x;
  std::vector<int> y;
};

Prepared separable(std::size_t per_class = 40, std::uint64_t seed = 42) {
  synthetic::DetectionCorpusSpec spec;
  spec.goodware = per_class;
  spec.malware = per_class;
  spec.seed = seed;
  Prepared p;
  p.corpus = synthetic::detection_corpus(spec);
  p.vocab = build_vocabulary(p.corpus, 1);
  p.x = vectorize_corpus(p.corpus, p.vocab);
  p.y = labels_of(p.corpus);
  return p;
}

std::array<GbdtConfig, 3> small_members() {
  auto configs = default_member_configs();
  for (auto& c : configs) c.n_estimators = 20;
  return configs;
}

}  // namespace

TEST_CASE("default member configurations") {
  const auto configs = default_member_configs();
  CHECK(configs[0].learning_rate == 0.01);
  CHECK(configs[0].max_depth == 4);
  CHECK(configs[0].n_estimators == 100);
  CHECK(configs[1].learning_rate == 0.05);
  CHECK(configs[1].max_depth == 3);
  CHECK(configs[1].n_estimators == 200);
  CHECK(configs[2].learning_rate == 0.1);
  CHECK(configs[2].max_depth == 5);
  CHECK(configs[2].n_estimators == 300);
}

TEST_CASE("combine_member_scores examples") {
  const auto a = combine_member_scores(std::vector<double>{0.2, 0.4, 0.9}, 0.5, VoteRule::mean);
  CHECK(a.score == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a.label == 1);
  const auto b = combine_member_scores(std::vector<double>{0.5, 0.5, 0.5}, 0.5, VoteRule::mean);
  CHECK(b.score == 0.5);
  CHECK(b.label == 1);
  CHECK(combine_member_scores(std::vector<double>{0.1, 0.1, 0.1}, 0.5, VoteRule::mean).label == 0);
  CHECK(combine_member_scores(std::vector<double>{0.2, 0.4, 0.9}, 0.5, VoteRule::majority).label == 0);
  CHECK(combine_member_scores(std::vector<double>{0.6, 0.4, 0.9}, 0.5, VoteRule::majority).label == 1);
  CHECK_THROWS_AS(combine_member_scores(std::vector<double>{}, 0.5, VoteRule::mean), ValidationError);
}

TEST_CASE("combined score is the member mean, in any member order") {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    std::array<double, 3> s{rng.uniform01(), rng.uniform01(), rng.uniform01()};
    const double mean = (s[0] + s[1] + s[2]) / 3.0;
    const auto base = combine_member_scores(s, 0.5, VoteRule::mean);
    REQUIRE(std::abs(base.score - mean) <= 1e-12);
    std::sort(s.begin(), s.end());
    do {
      REQUIRE(std::abs(combine_member_scores(s, 0.5, VoteRule::mean).score - base.score) <= 1e-12);
    } while (std::next_permutation(s.begin(), s.end()));
  }
}

TEST_CASE("bagged training is deterministic and separates planted data") {
  const auto p = separable();
  BaggingOptions options;
  const auto a = train_bagged(p.x, p.y, small_members(), options);
  const auto b = train_bagged(p.x, p.y, small_members(), options);
  CHECK(a == b);
  for (std::size_t i = 0; i < p.y.size(); ++i) CHECK(ensemble_predict(a, p.x.rows[i]).label == p.y[i]);
  options.seed = 7;
  const auto c = train_bagged(p.x, p.y, small_members(), options);
  CHECK_FALSE(c.members[0] == a.members[0]);
}

TEST_CASE("no-bootstrap members see the full set") {
  const auto p = separable(20);
  BaggingOptions options;
  options.bootstrap = false;
  const auto d = train_bagged(p.x, p.y, small_members(), options);
  CHECK(d.members[0] == train_gbdt(p.x, p.y, small_members()[0]));
}

TEST_CASE("bagging rejects bad thresholds and sizes") {
  const auto p = separable(10);
  BaggingOptions options;
  options.threshold = 1.0;
  CHECK_THROWS_AS(train_bagged(p.x, p.y, small_members(), options), ValidationError);
  options.threshold = 0.5;
  auto short_y = p.y;
  short_y.pop_back();
  CHECK_THROWS_AS(train_bagged(p.x, short_y, small_members(), options), ValidationError);
}

TEST_CASE("importance concentrates on the single split feature") {
  BaggedDetector d;
  for (auto& m : d.members) {
    m.n_features = 5;
    m.feature_gain.assign(5, 0.0);
    m.feature_gain[3] = 2.5;
  }
  const auto imp = feature_importance(d);
  CHECK(imp[3] == 1.0);
  CHECK(imp[0] == 0.0);

  NGramVocabulary vocab;
  for (ApiCallId i = 0; i < 5; ++i) vocab.add(NGram{i, i}, 1);
  const auto ranked = rank_features(d, vocab, 10);
  REQUIRE(ranked.size() == 5);  // k clamped to F
  CHECK(ranked[0].column == 3);
  CHECK(ranked[0].ngram == NGram{3, 3});
  CHECK(ranked[1].column == 0);  // zero-importance ties by column
  CHECK(ranked[4].column == 4);

  NGramVocabulary short_vocab;
  short_vocab.add(NGram{1, 1}, 1);
  CHECK_THROWS_AS(rank_features(d, short_vocab, 1), ValidationError);
}

TEST_CASE("planted 3-gram ranks first and importances sum to 1") {
  const auto p = separable();
  const auto d = train_bagged(p.x, p.y, small_members());
  const auto imp = feature_importance(d);
  double total = 0.0;
  for (double v : imp) {
    CHECK(v >= 0.0);
    total += v;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  const auto ranked = rank_features(d, p.vocab, 10);
  REQUIRE_FALSE(ranked.empty());
  CHECK(ranked[0].ngram == NGram{7, 11, 13});
}

TEST_CASE("detector text round-trip is exact") {
  const auto p = separable(20);
  auto d = train_bagged(p.x, p.y, small_members());
  d.vocab_ref = "vocab.tsv";
  const auto text = serialize_detector(d);
  CHECK(text.starts_with("apisentry-detector 1\n"));
  const auto back = parse_detector(text);
  CHECK(back == d);
  CHECK(serialize_detector(back) == text);
  CHECK_THROWS_AS(parse_detector("apisentry-detector 9\n"), ValidationError);
  CHECK_THROWS_AS(parse_detector(text.substr(0, text.size() / 2)), ValidationError);
}

TEST_CASE("ensemble_predict checks the dimension") {
  const auto p = separable(10);
  const auto d = train_bagged(p.x, p.y, small_members());
  FeatureVector wrong;
  wrong.dimension = p.x.cols + 1;
  CHECK_THROWS_AS(ensemble_predict(d, wrong), ValidationError);
}
