#include <doctest.h>

#include <cmath>

#include "apisentry/error.hpp"
#include "apisentry/ngram.hpp"
#include "apisentry/rng.hpp"
#include "apisentry/seqmodel.hpp"
#include "oracles.hpp"

using namespace apisentry;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

namespace {

using Calls = std::vector<ApiCallId>;

BiLstmConfig tiny_config() {
  BiLstmConfig c;
  c.vocab_size = 7;
  c.embed_dim = 4;
  c.hidden = 5;
  c.max_prefix_len = 4;
  c.batch_size = 8;
  return c;
}

std::vector<PrefixSample> tiny_batch() {
  return {{{1, 2}, 3}, {{4, 0, 6, 5}, 2}, {{3}, 3}, {{6, 6, 1}, 0}};
}

Calls random_calls(Rng& rng, std::size_t min_len, std::size_t max_len, std::uint32_t vocab) {
  Calls out(min_len + rng.below(max_len - min_len + 1));
  for (auto& v : out) v = static_cast<ApiCallId>(rng.below(vocab));
  return out;
}

std::vector<PrefixSample> cyclic_samples(const Calls& pattern, std::size_t traces, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PrefixSample> out;
  for (std::size_t t = 0; t < traces; ++t) {
    const auto phase = rng.below(pattern.size());
    const auto len = 6 + rng.below(6);
    Calls calls;
    for (std::size_t k = 0; k < len; ++k) calls.push_back(pattern[(phase + k) % pattern.size()]);
    auto samples = prefix_samples(calls);
    out.insert(out.end(), samples.begin(), samples.end());
  }
  return out;
}

// A predictor for the 1,2,3 cycle, trained once and shared.
const TrainResult& cyclic_model() {
  static const TrainResult result = [] {
    BiLstmConfig config;
    config.vocab_size = 4;
    config.embed_dim = 8;
    config.hidden = 16;
    config.batch_size = 32;
    config.max_epochs = 20;
    config.patience = 3;
    return train(cyclic_samples({1, 2, 3}, 120, 5), config);
  }();
  return result;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  BiLstmConfig c;
  c.vocab_size = 307;
  CHECK(c.reference_settings());
  CHECK(c.embed_dim == 64);
  CHECK(c.batch_size == 128);
  CHECK(c.max_prefix_len == 99);
  CHECK(c.pad_id() == 307);
  c.validate();
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.dropout_rate = 0.3;
  c.val_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.val_fraction = 0.1;
  c.hidden = 32;
  CHECK_FALSE(c.reference_settings());
  BiLstmConfig empty;
  CHECK_THROWS_AS(empty.validate(), ValidationError);
}

TEST_CASE("init_model shapes and fixed entries") {
  const auto config = tiny_config();
  const auto a = init_model(config, 9);
  const auto b = init_model(config, 9);
  for (std::size_t k = 0; k < a.tensors().size(); ++k) CHECK(*a.tensors()[k].second == *b.tensors()[k].second);
  CHECK_FALSE(init_model(config, 10).embedding == a.embedding);

  CHECK(a.embedding.rows() == 8);
  CHECK(a.embedding.cols() == 4);
  CHECK(a.embedding.row(7).isZero(0.0));
  CHECK(a.forward_cell.W.rows() == 4);
  CHECK(a.forward_cell.W.cols() == 20);
  CHECK(a.forward_cell.U.rows() == 5);
  CHECK(a.dense_w.rows() == 10);
  CHECK(a.dense_w.cols() == 7);
  for (const auto* cell : {&a.forward_cell, &a.backward_cell}) {
    CHECK(cell->b.block(0, 5, 1, 5).isOnes(0.0));
    CHECK(cell->b.block(0, 0, 1, 5).isZero(0.0));
    CHECK(cell->b.block(0, 10, 1, 10).isZero(0.0));
  }
  CHECK(a.dense_b.isZero(0.0));
  const double limit = std::sqrt(6.0 / (4 + 20));
  CHECK(a.forward_cell.W.cwiseAbs().maxCoeff() <= limit);
}

TEST_CASE("lstm_cell closed forms") {
  LstmParams zero{MatrixXd::Zero(3, 8), MatrixXd::Zero(2, 8), MatrixXd::Zero(1, 8)};
  const RowVectorXd x = RowVectorXd::Random(3);
  const RowVectorXd h = RowVectorXd::Random(2);
  {
    const auto [h2, c2] = lstm_cell(x, h, RowVectorXd::Zero(2), zero);
    CHECK(h2.isZero(0.0));
    CHECK(c2.isZero(0.0));
  }
  RowVectorXd v(2);
  v << 1.5, -0.8;
  const auto [h2, c2] = lstm_cell(x, h, v, zero);
  for (int j = 0; j < 2; ++j) {
    CHECK(c2(j) == doctest::Approx(0.5 * v(j)).epsilon(1e-15));
    CHECK(h2(j) == doctest::Approx(0.5 * std::tanh(0.5 * v(j))).epsilon(1e-15));
  }
}

TEST_CASE("lstm_cell matches the scalar-loop oracle") {
  Rng rng(44);
  for (int trial = 0; trial < 200; ++trial) {
    const int E = 1 + static_cast<int>(rng.below(6)), H = 1 + static_cast<int>(rng.below(6));
    LstmParams p{MatrixXd(E, 4 * H), MatrixXd(H, 4 * H), MatrixXd(1, 4 * H)};
    for (auto* m : {&p.W, &p.U, &p.b}) {
      for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = rng.uniform(-1.0, 1.0);
    }
    std::vector<double> x(E), h(H), c(H);
    for (auto& v : x) v = rng.uniform(-1, 1);
    for (auto& v : h) v = rng.uniform(-1, 1);
    for (auto& v : c) v = rng.uniform(-2, 2);
    const auto [h_ref, c_ref] = oracle::lstm_cell(x, h, c, p);
    const auto [h_out, c_out] =
        lstm_cell(Eigen::Map<RowVectorXd>(x.data(), E), Eigen::Map<RowVectorXd>(h.data(), H),
                  Eigen::Map<RowVectorXd>(c.data(), H), p);
    for (int j = 0; j < H; ++j) {
      REQUIRE(std::abs(h_out(j) - h_ref[j]) <= 1e-12);
      REQUIRE(std::abs(c_out(j) - c_ref[j]) <= 1e-12);
    }
  }
}

TEST_CASE("forward produces a distribution") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    auto config = tiny_config();
    config.vocab_size = 2 + static_cast<std::uint32_t>(rng.below(8));
    config.hidden = 1 + static_cast<std::uint32_t>(rng.below(4));
    config.embed_dim = 1 + static_cast<std::uint32_t>(rng.below(4));
    const auto model = init_model(config, rng.next());
    const auto input = random_calls(rng, 1, 4, config.vocab_size);
    const auto mode = trial % 2 ? ForwardMode::training(rng.next()) : ForwardMode::infer();
    const auto probs = forward(model, input, mode);
    REQUIRE(probs.size() == config.vocab_size);
    REQUIRE(probs.minCoeff() >= 0.0);
    REQUIRE(std::abs(probs.sum() - 1.0) <= 1e-6);
  }
}

TEST_CASE("forward special cases") {
  auto config = tiny_config();
  auto model = init_model(config, 3);
  const Calls input{1, 2, 3};
  SUBCASE("zero dropout in training equals inference") {
    model.config.dropout_rate = 0.0;
    CHECK(forward(model, input, ForwardMode::training(5)) == forward(model, input));
  }
  SUBCASE("dropout changes training output only") {
    CHECK_FALSE(forward(model, input, ForwardMode::training(5)).isApprox(forward(model, input)));
    CHECK(forward(model, input, ForwardMode::training(5)) == forward(model, input, ForwardMode::training(5)));
  }
  SUBCASE("zero dense layer gives the uniform distribution") {
    model.dense_w.setZero();
    model.dense_b.setZero();
    const auto probs = forward(model, input);
    for (Eigen::Index k = 0; k < probs.size(); ++k) CHECK(probs(k) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  }
  SUBCASE("padding rules") {
    const ApiCallId pad = config.pad_id();
    CHECK_THROWS_AS(forward(model, Calls{pad, pad}), ValidationError);
    CHECK_THROWS_AS(forward(model, Calls{1, pad, 2}), ValidationError);
    CHECK_THROWS_AS(forward(model, Calls{1, pad + 1}), ValidationError);
    CHECK(forward(model, Calls{pad, pad, 1, 2}) == forward(model, Calls{1, 2}));
  }
}

TEST_CASE("pad neutrality inside batches") {
  Rng rng(2);
  auto config = tiny_config();
  config.max_prefix_len = 12;
  for (int trial = 0; trial < 100; ++trial) {
    const auto model = init_model(config, rng.next());
    std::vector<Calls> prefixes;
    for (int k = 0; k < 5; ++k) prefixes.push_back(random_calls(rng, 1, 12, config.vocab_size));
    const auto batch = forward_batch(model, prefixes);
    for (std::size_t k = 0; k < prefixes.size(); ++k) {
      const auto single = forward(model, pad_prefix(prefixes[k], 12, config.pad_id()));
      REQUIRE((batch.row(static_cast<Eigen::Index>(k)) - single).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("forward_batch keeps the last max_prefix_len calls") {
  const auto model = init_model(tiny_config(), 4);
  const std::vector<Calls> longer{{6, 5, 1, 2, 3, 4}};
  const std::vector<Calls> tail{{1, 2, 3, 4}};
  CHECK(forward_batch(model, longer) == forward_batch(model, tail));
}

TEST_CASE("reversing the input and swapping directions leaves the output unchanged") {
  Rng rng(13);
  auto config = tiny_config();
  config.max_prefix_len = 10;
  for (int trial = 0; trial < 100; ++trial) {
    const auto model = init_model(config, rng.next());
    auto mirrored = model;
    std::swap(mirrored.forward_cell, mirrored.backward_cell);
    const auto H = static_cast<Eigen::Index>(config.hidden);
    mirrored.dense_w.topRows(H) = model.dense_w.bottomRows(H);
    mirrored.dense_w.bottomRows(H) = model.dense_w.topRows(H);
    auto input = random_calls(rng, 1, 10, config.vocab_size);
    const auto a = forward(model, input);
    std::reverse(input.begin(), input.end());
    const auto b = forward(mirrored, input);
    REQUIRE((a - b).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("batch_loss examples") {
  BiLstmConfig config;
  config.vocab_size = 342;
  config.embed_dim = 3;
  config.hidden = 2;
  auto model = init_model(config, 1);
  model.dense_w.setZero();
  const std::vector<PrefixSample> one{{{1, 2}, 3}};
  CHECK(batch_loss(model, one) == doctest::Approx(std::log(342.0)).epsilon(1e-12));
  CHECK(std::log(342.0) == doctest::Approx(5.8348).epsilon(1e-5));

  model.dense_b(0, 3) = 1000.0;
  CHECK(batch_loss(model, one) == doctest::Approx(0.0));

  const auto m2 = init_model(tiny_config(), 2);
  const std::vector<PrefixSample> a{{{1, 2}, 3}}, b{{{4, 5, 6}, 0}}, ab{{{1, 2}, 3}, {{4, 5, 6}, 0}};
  CHECK(std::abs(batch_loss(m2, ab) - 0.5 * (batch_loss(m2, a) + batch_loss(m2, b))) <= 1e-12);
  CHECK_THROWS_AS(batch_loss(m2, std::vector<PrefixSample>{}), ValidationError);
  CHECK_THROWS_AS(batch_loss(m2, std::vector<PrefixSample>{{{1}, 7}}), ValidationError);
}

TEST_CASE("analytic gradients match central differences") {
  const auto config = tiny_config();
  const auto batch = tiny_batch();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto model = init_model(config, seed);
    for (auto mode : {ForwardMode::infer(), ForwardMode::training(seed * 31)}) {
      const auto errors = oracle::gradient_check(model, batch, mode);
      CHECK(errors.size() == 9);
      for (const auto& [name, err] : errors) {
        INFO(name);
        CHECK(err < 1e-3);
      }
    }
  }
}

TEST_CASE("gradients of a padded batch are the mean of per-sample gradients") {
  const auto model = init_model(tiny_config(), 8);
  const auto batch = tiny_batch();
  auto joint = loss_and_gradients(model, batch);
  std::vector<LossAndGradients> parts;
  for (const auto& s : batch) parts.push_back(loss_and_gradients(model, std::vector<PrefixSample>{s}));
  auto tensors = joint.grads.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    MatrixXd mean = MatrixXd::Zero(tensors[k].second->rows(), tensors[k].second->cols());
    for (auto& p : parts) mean += *p.grads.tensors()[k].second;
    mean /= static_cast<double>(parts.size());
    CHECK((mean - *tensors[k].second).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK(joint.grads.embedding.row(7).isZero(0.0));
}

TEST_CASE("train_step behaviour") {
  const auto batch = tiny_batch();
  SUBCASE("zero learning rate leaves parameters unchanged") {
    auto model = init_model(tiny_config(), 5);
    model.config.learning_rate = 0.0;
    const auto before = model;
    auto adam = AdamState::for_model(model);
    train_step(model, adam, batch, 1);
    CHECK(adam.step == 1);
    for (std::size_t k = 0; k < model.tensors().size(); ++k) CHECK(*model.tensors()[k].second == *before.tensors()[k].second);
  }
  SUBCASE("overfitting one batch lowers the loss at every step") {
    auto config = tiny_config();
    config.dropout_rate = 0.0;
    auto model = init_model(config, 5);
    auto adam = AdamState::for_model(model);
    double previous = train_step(model, adam, batch, 0);
    for (int step = 0; step < 15; ++step) {
      const double loss = train_step(model, adam, batch, 0);
      CHECK(loss < previous);
      previous = loss;
    }
    CHECK(adam.step == 16);
  }
  SUBCASE("non-finite loss aborts") {
    auto model = init_model(tiny_config(), 5);
    model.dense_b(0, 0) = std::numeric_limits<double>::quiet_NaN();
    auto adam = AdamState::for_model(model);
    CHECK_THROWS_AS(train_step(model, adam, batch, 0), NumericError);
  }
}

TEST_CASE("early stopping rule") {
  EarlyStopping stop(1);
  CHECK_FALSE(stop.update(1.0));
  CHECK(stop.update(1.5));
  CHECK(stop.best_epoch() == 1);
  CHECK(stop.epochs_seen() == 2);

  EarlyStopping patient(3);
  CHECK_FALSE(patient.update(2.0));
  CHECK_FALSE(patient.update(1.0));
  CHECK_FALSE(patient.update(1.0));  // equal is not an improvement
  CHECK_FALSE(patient.update(1.1));
  CHECK(patient.update(1.2));
  CHECK(patient.best_epoch() == 2);
  CHECK(patient.best_loss() == 1.0);
}

TEST_CASE("train preconditions") {
  auto config = tiny_config();
  CHECK_THROWS_AS(train(std::vector<PrefixSample>{{{1, 2}, 3}}, config), ValidationError);
  config.val_fraction = 0.9;
  CHECK_THROWS_AS(train(std::vector<PrefixSample>{{{1, 2}, 3}, {{1, 2}, 3}}, config), ValidationError);
}

TEST_CASE("training is deterministic and returns the best epoch") {
  auto config = tiny_config();
  config.max_epochs = 6;
  config.patience = 2;
  config.max_prefix_len = 10;
  Rng rng(3);
  std::vector<PrefixSample> samples;
  for (int t = 0; t < 20; ++t) {
    auto s = prefix_samples(random_calls(rng, 4, 10, 7));
    samples.insert(samples.end(), s.begin(), s.end());
  }
  const auto a = train(samples, config);
  const auto b = train(samples, config);
  CHECK(a.report == b.report);
  CHECK(serialize_model(a.model) == serialize_model(b.model));
  const auto& r = a.report;
  REQUIRE(r.best_epoch >= 1);
  for (double v : r.val_loss) CHECK(r.val_loss[r.best_epoch - 1] <= v);
  CHECK(std::abs(batch_loss(a.model, a.validation) - r.val_loss[r.best_epoch - 1]) <= 1e-9);
  CHECK(r.train_loss.size() == r.stopped_epoch);
  CHECK(r.curves_csv().starts_with("epoch,train_loss,val_loss\n1,"));
}

TEST_CASE("learned 1,2,3 cycle") {
  const auto& trained = cyclic_model();
  CHECK(trained.report.val_accuracy[trained.report.best_epoch - 1] >= 0.99);
  CHECK(next_call_accuracy(trained.model, trained.validation) >= 0.99);
  CHECK(predict_next(trained.model, Calls{1, 2, 3, 1, 2}).next == 3);
  CHECK(predict_next_k(trained.model, Calls{1, 2}, 4) == Calls{3, 1, 2, 3});
}

TEST_CASE("prediction contracts") {
  auto model = init_model(tiny_config(), 6);
  const Calls seq{1, 2, 3};
  const auto one = predict_next(model, seq);
  Eigen::Index arg;
  one.distribution.maxCoeff(&arg);
  CHECK(one.next == static_cast<ApiCallId>(arg));
  CHECK(predict_next_k(model, seq, 1) == Calls{one.next});
  for (std::size_t k : {1u, 3u, 10u}) CHECK(predict_next_k(model, seq, k).size() == k);
  CHECK_THROWS_AS(predict_next(model, Calls{}), ValidationError);
  CHECK_THROWS_AS(predict_next_k(model, Calls{}, 3), ValidationError);
  model.dense_w.setZero();
  model.dense_b.setZero();
  CHECK(predict_next(model, seq).next == 0);
}

TEST_CASE("model text round-trip is exact") {
  const auto model = init_model(tiny_config(), 12);
  const auto text = serialize_model(model);
  const auto back = parse_model(text);
  CHECK(back.config == model.config);
  for (std::size_t k = 0; k < model.tensors().size(); ++k) CHECK(*back.tensors()[k].second == *model.tensors()[k].second);
  CHECK(serialize_model(back) == text);
  auto broken = text;
  broken.replace(broken.rfind('\n', broken.size() - 2) + 1, 3, "nan");
  CHECK_THROWS_AS(parse_model(broken), ValidationError);
  CHECK_THROWS_AS(parse_model("apisentry-seqmodel 2\n"), ValidationError);
}
