#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "apisentry/error.hpp"
#include "apisentry/eval.hpp"
#include "apisentry/rng.hpp"
#include "oracles.hpp"

using namespace apisentry;

namespace {

MetricsReport binary_from(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
  ConfusionMatrix cm(2);
  for (std::uint64_t i = 0; i < tp; ++i) cm.add(1, 1);
  for (std::uint64_t i = 0; i < fp; ++i) cm.add(0, 1);
  for (std::uint64_t i = 0; i < fn; ++i) cm.add(1, 0);
  for (std::uint64_t i = 0; i < tn; ++i) cm.add(0, 0);
  return binary_metrics(cm);
}

}  // namespace

TEST_CASE("confusion examples") {
  const auto perfect = confusion(std::vector<int>{0, 1}, std::vector<int>{0, 1}, 2);
  CHECK(perfect(0, 0) == 1);
  CHECK(perfect(1, 1) == 1);
  CHECK(perfect(0, 1) == 0);
  const auto wrong = confusion(std::vector<int>{1}, std::vector<int>{0}, 2);
  CHECK(wrong(0, 1) == 1);
  CHECK(wrong.total() == 1);
  CHECK(confusion(std::vector<int>{}, std::vector<int>{}, 3) == ConfusionMatrix(3));
  CHECK_THROWS_AS(confusion(std::vector<int>{1}, std::vector<int>{}, 2), ValidationError);
  CHECK_THROWS_AS(confusion(std::vector<int>{2}, std::vector<int>{0}, 2), ValidationError);
}

TEST_CASE("confusion totals survive consistent reordering") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    std::vector<int> p(30), t(30);
    for (std::size_t k = 0; k < 30; ++k) {
      p[k] = static_cast<int>(rng.below(4));
      t[k] = static_cast<int>(rng.below(4));
    }
    const auto before = confusion(p, t, 4);
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    std::vector<int> p2(30), t2(30);
    for (std::size_t k = 0; k < 30; ++k) {
      p2[k] = p[perm[k]];
      t2[k] = t[perm[k]];
    }
    REQUIRE(confusion(p2, t2, 4) == before);
  }
}

TEST_CASE("binary_metrics examples") {
  const auto r = binary_from(2, 0, 1, 1);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.f1 == doctest::Approx(0.8));
  CHECK(r.accuracy == 0.75);
  CHECK_FALSE(r.degenerate);
  const auto perfect = binary_from(3, 0, 0, 4);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
  const auto none = binary_from(0, 0, 2, 2);
  CHECK(none.precision == 0.0);
  CHECK(none.degenerate);
  CHECK_THROWS_AS(binary_metrics(ConfusionMatrix(3)), ValidationError);
}

TEST_CASE("reference percentages render with two decimals") {
  CHECK(percent(0.9585) == "95.85%");
  CHECK(percent(0.927) == "92.70%");
  CHECK(percent(0.9956) == "99.56%");
  CHECK(percent(0.96) == "96.00%");
}

TEST_CASE("weighted_metrics examples") {
  const auto r = weighted_metrics(std::vector<int>{0, 1, 1}, std::vector<int>{0, 0, 1}, 2);
  CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(r.precision == doctest::Approx(5.0 / 6.0));
  CHECK(r.recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.support.at(0) == 2);
  const auto perfect = weighted_metrics(std::vector<int>{2, 0, 1}, std::vector<int>{2, 0, 1}, 3);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == doctest::Approx(1.0));
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == doctest::Approx(1.0));
}

TEST_CASE("weighted_metrics against the per-class oracle") {
  Rng rng(500);
  for (int trial = 0; trial < 500; ++trial) {
    const int labels = 2 + static_cast<int>(rng.below(6));
    const auto n = 1 + rng.below(60);
    std::vector<int> p(n), t(n);
    for (std::size_t k = 0; k < n; ++k) {
      t[k] = static_cast<int>(rng.below(static_cast<std::uint64_t>(labels)));
      p[k] = rng.uniform01() < 0.6 ? t[k] : static_cast<int>(rng.below(static_cast<std::uint64_t>(labels)));
    }
    const auto ours = weighted_metrics(p, t, static_cast<std::size_t>(labels));
    const auto ref = oracle::weighted_by_class(p, t, labels);
    REQUIRE(std::abs(ours.accuracy - ref.accuracy) <= 1e-12);
    REQUIRE(std::abs(ours.precision - ref.precision) <= 1e-12);
    REQUIRE(std::abs(ours.recall - ref.recall) <= 1e-12);
    REQUIRE(std::abs(ours.f1 - ref.f1) <= 1e-12);
    REQUIRE(ours.recall == ours.accuracy);
    for (double v : {ours.accuracy, ours.precision, ours.recall, ours.f1}) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("per-class f1 never exceeds the larger of precision and recall") {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const auto tp = rng.below(20), fp = rng.below(20), fn = rng.below(20), tn = rng.below(20);
    const auto r = binary_from(tp, fp, fn, tn);
    REQUIRE(r.f1 <= std::max(r.precision, r.recall) + 1e-15);
  }
}

TEST_CASE("AUC examples") {
  CHECK(binary_auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<char>{1, 1, 0}) == 1.0);
  CHECK(binary_auc(std::vector<double>{0.5, 0.5}, std::vector<char>{1, 0}) == 0.5);
  CHECK_FALSE(binary_auc(std::vector<double>{0.5, 0.2}, std::vector<char>{1, 1}).has_value());
}

TEST_CASE("AUC against the pairwise oracle and its symmetries") {
  Rng rng(20);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 20;
    std::vector<double> s(n);
    std::vector<char> pos(n);
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = trial % 3 == 0 ? static_cast<double>(rng.below(4)) : rng.uniform01();
      pos[k] = static_cast<char>(rng.below(2));
    }
    pos[0] = 1;
    pos[1] = 0;
    const auto auc = binary_auc(s, pos);
    REQUIRE(auc.has_value());
    REQUIRE(std::abs(*auc - oracle::pairwise_auc(s, pos)) <= 1e-12);

    std::vector<double> transformed(n), negated(n);
    for (std::size_t k = 0; k < n; ++k) {
      transformed[k] = std::exp(3.0 * s[k]) + 7.0;
      negated[k] = -s[k];
    }
    REQUIRE(std::abs(*binary_auc(transformed, pos) - *auc) <= 1e-12);
    if (trial % 3 != 0) REQUIRE(std::abs(*binary_auc(negated, pos) + *auc - 1.0) <= 1e-12);
  }
}

TEST_CASE("roc_auc_per_label") {
  // three samples, two labels, row-major
  const std::vector<double> scores{0.9, 0.1, 0.2, 0.8, 0.6, 0.4};
  const auto r = roc_auc_per_label(scores, std::vector<int>{0, 1, 0}, 2);
  REQUIRE(r.per_label_auc.size() == 2);
  CHECK(*r.per_label_auc[0] == 1.0);
  CHECK(*r.per_label_auc[1] == 1.0);
  CHECK(r.supports == std::vector<std::uint64_t>{2, 1});
  const auto single = roc_auc_per_label(std::vector<double>{0.3, 0.7, 0.1, 0.9}, std::vector<int>{1, 1}, 2);
  CHECK_FALSE(single.per_label_auc[0].has_value());
  CHECK_FALSE(single.per_label_auc[1].has_value());
  CHECK_THROWS_AS(roc_auc_per_label(scores, std::vector<int>{0, 1}, 2), ValidationError);
}

TEST_CASE("rare_label_report") {
  Corpus c;
  c.vocabulary_size = 4;
  c.traces.push_back({"a", {0, 0, 0, 1, 0, 0}, Label::malware});
  c.traces.push_back({"b", {0, 2, 0, 0}, Label::malware});
  AucReport auc;
  auc.per_label_auc = {0.9, 0.7, std::nullopt, std::nullopt};
  auc.supports = {5, 1, 1, 0};
  const auto rows = rare_label_report(c, auc, 2.0, {{1, "CopyFileW"}});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].label == 3);
  CHECK(rows[0].frequency == 0);
  CHECK_FALSE(rows[0].auc.has_value());
  CHECK(rows[1].label == 1);
  CHECK(rows[1].name == "CopyFileW");
  CHECK(*rows[1].auc == 0.7);
  CHECK(rows[2].label == 2);
  CHECK(rare_label_report(c, auc, 0.0).empty());
  CHECK(default_rare_threshold(c) == doctest::Approx(0.01));
}

TEST_CASE("name map parsing") {
  const auto names = parse_name_map("0,NtOpenFile\n1,CopyFileW\n");
  CHECK(names.at(1) == "CopyFileW");
  CHECK(parse_name_map("id,name\n7,ReadFile\n").at(7) == "ReadFile");
  CHECK_THROWS_AS(parse_name_map("zero\n"), ValidationError);
  CHECK_THROWS_AS(parse_name_map("0,a\nx,b\n"), ValidationError);
}
