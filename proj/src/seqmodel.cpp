#include "apisentry/seqmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "apisentry/error.hpp"
#include "apisentry/rng.hpp"
#include "apisentry/textio.hpp"

namespace apisentry {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

void BiLstmConfig::validate() const {
  if (vocab_size == 0) throw ValidationError("vocab_size must be positive");
  if (embed_dim == 0 || hidden == 0) throw ValidationError("embed_dim and hidden must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("dropout_rate must lie in [0, 1)");
  if (!(learning_rate >= 0.0)) throw ValidationError("learning_rate must be non-negative");
  if (batch_size == 0 || max_epochs == 0 || patience == 0 || max_prefix_len == 0) {
    throw ValidationError("batch_size, max_epochs, patience and max_prefix_len must be positive");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ValidationError("val_fraction must lie in (0, 1)");
}

bool BiLstmConfig::reference_settings() const {
  return hidden == 150 && dropout_rate == 0.3 && learning_rate == 0.01;
}

std::vector<std::pair<std::string, MatrixXd*>> BiLstmModel::tensors() {
  return {{"embedding", &embedding},       {"forward.W", &forward_cell.W},   {"forward.U", &forward_cell.U},
          {"forward.b", &forward_cell.b},  {"backward.W", &backward_cell.W}, {"backward.U", &backward_cell.U},
          {"backward.b", &backward_cell.b}, {"dense.W", &dense_w},           {"dense.b", &dense_b}};
}

std::vector<std::pair<std::string, const MatrixXd*>> BiLstmModel::tensors() const {
  std::vector<std::pair<std::string, const MatrixXd*>> out;
  for (auto& [name, ptr] : const_cast<BiLstmModel*>(this)->tensors()) out.emplace_back(name, ptr);
  return out;
}

std::vector<std::pair<std::string, MatrixXd*>> Gradients::tensors() {
  return {{"embedding", &embedding},       {"forward.W", &forward_cell.W},   {"forward.U", &forward_cell.U},
          {"forward.b", &forward_cell.b},  {"backward.W", &backward_cell.W}, {"backward.U", &backward_cell.U},
          {"backward.b", &backward_cell.b}, {"dense.W", &dense_w},           {"dense.b", &dense_b}};
}

namespace {

MatrixXd glorot(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
  }
  return m;
}

LstmParams init_cell(Index input, Index hidden, Rng& rng) {
  LstmParams p;
  p.W = glorot(input, 4 * hidden, rng);
  p.U = glorot(hidden, 4 * hidden, rng);
  p.b = MatrixXd::Zero(1, 4 * hidden);
  p.b.block(0, hidden, 1, hidden).setOnes();
  return p;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

BiLstmModel init_model(const BiLstmConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, "init");
  const Index vocab = config.vocab_size;
  const Index embed = config.embed_dim;
  const Index hidden = config.hidden;
  BiLstmModel model;
  model.config = config;
  model.embedding = glorot(vocab + 1, embed, rng);
  model.embedding.row(vocab).setZero();
  model.forward_cell = init_cell(embed, hidden, rng);
  model.backward_cell = init_cell(embed, hidden, rng);
  model.dense_w = glorot(2 * hidden, vocab, rng);
  model.dense_b = MatrixXd::Zero(1, vocab);
  return model;
}

std::pair<RowVectorXd, RowVectorXd> lstm_cell(const RowVectorXd& x, const RowVectorXd& h, const RowVectorXd& c,
                                              const LstmParams& params) {
  const Index hidden = h.size();
  const RowVectorXd z = x * params.W + h * params.U + params.b.row(0);
  const RowVectorXd i = z.segment(0, hidden).unaryExpr(&logistic);
  const RowVectorXd f = z.segment(hidden, hidden).unaryExpr(&logistic);
  const RowVectorXd o = z.segment(2 * hidden, hidden).unaryExpr(&logistic);
  const RowVectorXd g = z.segment(3 * hidden, hidden).array().tanh();
  RowVectorXd c_next = f.cwiseProduct(c) + i.cwiseProduct(g);
  RowVectorXd h_next = o.cwiseProduct(c_next.array().tanh().matrix());
  return {std::move(h_next), std::move(c_next)};
}

namespace {

// Left-padded batch: ids[t][b], active[t][b] marks non-pad positions.
struct Batch {
  Index size = 0;
  Index steps = 0;
  std::vector<std::vector<ApiCallId>> ids;
  std::vector<std::vector<char>> active;
};

Batch make_batch(const BiLstmConfig& config, std::span<const std::vector<ApiCallId>> prefixes) {
  if (prefixes.empty()) throw ValidationError("empty batch");
  Batch batch;
  batch.size = static_cast<Index>(prefixes.size());
  std::size_t steps = 0;
  for (const auto& p : prefixes) {
    if (p.empty()) throw ValidationError("prefix has no calls");
    steps = std::max(steps, std::min<std::size_t>(p.size(), config.max_prefix_len));
  }
  batch.steps = static_cast<Index>(steps);
  batch.ids.assign(steps, std::vector<ApiCallId>(prefixes.size(), config.pad_id()));
  batch.active.assign(steps, std::vector<char>(prefixes.size(), 0));
  for (std::size_t b = 0; b < prefixes.size(); ++b) {
    const auto& p = prefixes[b];
    const auto len = std::min<std::size_t>(p.size(), config.max_prefix_len);
    const auto offset = p.size() - len;
    for (std::size_t k = 0; k < len; ++k) {
      const auto id = p[offset + k];
      if (id >= config.vocab_size) {
        throw ValidationError("call id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(config.vocab_size));
      }
      const auto t = steps - len + k;
      batch.ids[t][b] = id;
      batch.active[t][b] = 1;
    }
  }
  return batch;
}

struct StepCache {
  MatrixXd h_prev, c_prev, gates, c_next, tanh_c;
};

struct DirectionCache {
  std::vector<StepCache> steps;  // indexed by time position t
  MatrixXd final_h;
};

struct ForwardCache {
  std::vector<MatrixXd> inputs;        // dropped-out embeddings per t (B x E)
  std::vector<MatrixXd> dropout_mask;  // scaled mask per t; empty in inference
  DirectionCache fwd, bwd;
  MatrixXd features;                   // B x 2H
  MatrixXd logits;                     // B x V
};

void run_direction(const LstmParams& p, const Batch& batch, const std::vector<MatrixXd>& inputs, bool reverse,
                   bool keep, DirectionCache& cache) {
  const Index hidden = p.U.rows();
  MatrixXd h = MatrixXd::Zero(batch.size, hidden);
  MatrixXd c = MatrixXd::Zero(batch.size, hidden);
  if (keep) cache.steps.resize(static_cast<std::size_t>(batch.steps));
  for (Index k = 0; k < batch.steps; ++k) {
    const auto t = static_cast<std::size_t>(reverse ? batch.steps - 1 - k : k);
    MatrixXd z = inputs[t] * p.W + h * p.U;
    z.rowwise() += p.b.row(0);
    MatrixXd gates(batch.size, 4 * hidden);
    gates.leftCols(3 * hidden) = z.leftCols(3 * hidden).unaryExpr(&logistic);
    gates.rightCols(hidden) = z.rightCols(hidden).array().tanh();
    MatrixXd c_next = gates.middleCols(hidden, hidden).cwiseProduct(c) +
                      gates.leftCols(hidden).cwiseProduct(gates.rightCols(hidden));
    MatrixXd tanh_c = c_next.array().tanh();
    MatrixXd h_next = gates.middleCols(2 * hidden, hidden).cwiseProduct(tanh_c);
    const auto& active = batch.active[t];
    for (Index b = 0; b < batch.size; ++b) {
      if (!active[static_cast<std::size_t>(b)]) {
        h_next.row(b) = h.row(b);
        c_next.row(b) = c.row(b);
      }
    }
    if (keep) {
      auto& s = cache.steps[t];
      s.h_prev = std::move(h);
      s.c_prev = std::move(c);
      s.gates = std::move(gates);
      s.tanh_c = std::move(tanh_c);
      s.c_next = c_next;
    }
    h = std::move(h_next);
    c = std::move(c_next);
  }
  cache.final_h = std::move(h);
}

void run_forward(const BiLstmModel& model, const Batch& batch, ForwardMode mode, bool keep, ForwardCache& cache) {
  const auto& config = model.config;
  const Index embed = config.embed_dim;
  const auto steps = static_cast<std::size_t>(batch.steps);
  cache.inputs.assign(steps, MatrixXd());
  cache.dropout_mask.clear();
  const bool dropout = mode.train && config.dropout_rate > 0.0;
  Rng rng(mode.dropout_seed, "dropout-mask");
  const double keep_scale = 1.0 / (1.0 - config.dropout_rate);
  if (dropout) cache.dropout_mask.assign(steps, MatrixXd());
  for (std::size_t t = 0; t < steps; ++t) {
    MatrixXd x(batch.size, embed);
    for (Index b = 0; b < batch.size; ++b) x.row(b) = model.embedding.row(batch.ids[t][static_cast<std::size_t>(b)]);
    if (dropout) {
      MatrixXd mask(batch.size, embed);
      for (Index b = 0; b < batch.size; ++b) {
        for (Index e = 0; e < embed; ++e) mask(b, e) = rng.uniform01() < config.dropout_rate ? 0.0 : keep_scale;
      }
      x = x.cwiseProduct(mask);
      cache.dropout_mask[t] = std::move(mask);
    }
    cache.inputs[t] = std::move(x);
  }
  run_direction(model.forward_cell, batch, cache.inputs, false, keep, cache.fwd);
  run_direction(model.backward_cell, batch, cache.inputs, true, keep, cache.bwd);
  const Index hidden = config.hidden;
  cache.features.resize(batch.size, 2 * hidden);
  cache.features.leftCols(hidden) = cache.fwd.final_h;
  cache.features.rightCols(hidden) = cache.bwd.final_h;
  cache.logits = cache.features * model.dense_w;
  cache.logits.rowwise() += model.dense_b.row(0);
}

MatrixXd softmax_rows(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - peak).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// Per-row log-softmax evaluated at `target`.
double log_prob(const MatrixXd& logits, Index row, Index target) {
  const double peak = logits.row(row).maxCoeff();
  const double log_sum = std::log((logits.row(row).array() - peak).exp().sum()) + peak;
  return logits(row, target) - log_sum;
}

std::vector<std::vector<ApiCallId>> prefixes_of(std::span<const PrefixSample> batch) {
  std::vector<std::vector<ApiCallId>> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(s.prefix);
  return out;
}

void check_targets(const BiLstmConfig& config, std::span<const PrefixSample> batch) {
  for (const auto& s : batch) {
    if (s.next >= config.vocab_size) {
      throw ValidationError("next id " + std::to_string(s.next) + " outside vocabulary");
    }
  }
}

void backprop_direction(const LstmParams& p, LstmParams& grad, const Batch& batch, const DirectionCache& cache,
                        const std::vector<MatrixXd>& inputs, bool reverse, MatrixXd dh,
                        std::vector<MatrixXd>& d_inputs) {
  const Index hidden = p.U.rows();
  MatrixXd dc = MatrixXd::Zero(batch.size, hidden);
  MatrixXd dz(batch.size, 4 * hidden);
  // Walk the processing order backwards.
  for (Index k = batch.steps - 1; k >= 0; --k) {
    const auto t = static_cast<std::size_t>(reverse ? batch.steps - 1 - k : k);
    const auto& s = cache.steps[t];
    const auto i = s.gates.leftCols(hidden).array();
    const auto f = s.gates.middleCols(hidden, hidden).array();
    const auto o = s.gates.middleCols(2 * hidden, hidden).array();
    const auto g = s.gates.rightCols(hidden).array();
    const auto tc = s.tanh_c.array();

    const Eigen::ArrayXXd dct = dc.array() + dh.array() * o * (1.0 - tc * tc);
    dz.leftCols(hidden) = (dct * g * i * (1.0 - i)).matrix();
    dz.middleCols(hidden, hidden) = (dct * s.c_prev.array() * f * (1.0 - f)).matrix();
    dz.middleCols(2 * hidden, hidden) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dz.rightCols(hidden) = (dct * i * (1.0 - g * g)).matrix();

    const auto& active = batch.active[t];
    for (Index b = 0; b < batch.size; ++b) {
      if (!active[static_cast<std::size_t>(b)]) dz.row(b).setZero();
    }
    grad.W.noalias() += inputs[t].transpose() * dz;
    grad.U.noalias() += s.h_prev.transpose() * dz;
    grad.b += dz.colwise().sum();
    d_inputs[t].noalias() += dz * p.W.transpose();

    MatrixXd dh_prev = dz * p.U.transpose();
    MatrixXd dc_prev = (dct * f).matrix();
    for (Index b = 0; b < batch.size; ++b) {
      if (!active[static_cast<std::size_t>(b)]) {
        dh_prev.row(b) = dh.row(b);
        dc_prev.row(b) = dc.row(b);
      }
    }
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }
}

LstmParams zeros_like(const LstmParams& p) {
  return {MatrixXd::Zero(p.W.rows(), p.W.cols()), MatrixXd::Zero(p.U.rows(), p.U.cols()),
          MatrixXd::Zero(p.b.rows(), p.b.cols())};
}

}  // namespace

RowVectorXd forward(const BiLstmModel& model, std::span<const ApiCallId> padded_prefix, ForwardMode mode) {
  const auto pad = model.config.pad_id();
  std::vector<ApiCallId> calls;
  bool seen_call = false;
  for (auto id : padded_prefix) {
    if (id == pad) {
      if (seen_call) throw ValidationError("pad id may only appear as a left prefix");
      continue;
    }
    if (id > pad) throw ValidationError("call id " + std::to_string(id) + " outside vocabulary");
    seen_call = true;
    calls.push_back(id);
  }
  if (calls.empty()) throw ValidationError("input contains only padding");
  const std::vector<std::vector<ApiCallId>> one{std::move(calls)};
  return forward_batch(model, one, mode).row(0);
}

MatrixXd forward_batch(const BiLstmModel& model, std::span<const std::vector<ApiCallId>> prefixes, ForwardMode mode) {
  const auto batch = make_batch(model.config, prefixes);
  ForwardCache cache;
  run_forward(model, batch, mode, false, cache);
  return softmax_rows(cache.logits);
}

double batch_loss(const BiLstmModel& model, std::span<const PrefixSample> batch, ForwardMode mode) {
  if (batch.empty()) throw ValidationError("empty batch");
  check_targets(model.config, batch);
  const auto prefixes = prefixes_of(batch);
  const auto b = make_batch(model.config, prefixes);
  ForwardCache cache;
  run_forward(model, b, mode, false, cache);
  double total = 0.0;
  for (Index r = 0; r < b.size; ++r) total -= log_prob(cache.logits, r, batch[static_cast<std::size_t>(r)].next);
  return total / static_cast<double>(b.size);
}

LossAndGradients loss_and_gradients(const BiLstmModel& model, std::span<const PrefixSample> batch, ForwardMode mode) {
  if (batch.empty()) throw ValidationError("empty batch");
  check_targets(model.config, batch);
  const auto prefixes = prefixes_of(batch);
  const auto b = make_batch(model.config, prefixes);
  ForwardCache cache;
  run_forward(model, b, mode, true, cache);

  LossAndGradients out;
  const double inv_n = 1.0 / static_cast<double>(b.size);
  MatrixXd dlogits = softmax_rows(cache.logits);
  for (Index r = 0; r < b.size; ++r) {
    const auto target = static_cast<Index>(batch[static_cast<std::size_t>(r)].next);
    out.loss -= log_prob(cache.logits, r, target);
    dlogits(r, target) -= 1.0;
  }
  out.loss *= inv_n;
  dlogits *= inv_n;

  auto& g = out.grads;
  const Index hidden = model.config.hidden;
  g.dense_w = cache.features.transpose() * dlogits;
  g.dense_b = dlogits.colwise().sum();
  const MatrixXd dfeatures = dlogits * model.dense_w.transpose();

  g.forward_cell = zeros_like(model.forward_cell);
  g.backward_cell = zeros_like(model.backward_cell);
  std::vector<MatrixXd> d_inputs(static_cast<std::size_t>(b.steps), MatrixXd::Zero(b.size, model.config.embed_dim));
  backprop_direction(model.forward_cell, g.forward_cell, b, cache.fwd, cache.inputs, false, dfeatures.leftCols(hidden),
                     d_inputs);
  backprop_direction(model.backward_cell, g.backward_cell, b, cache.bwd, cache.inputs, true,
                     dfeatures.rightCols(hidden), d_inputs);

  g.embedding = MatrixXd::Zero(model.embedding.rows(), model.embedding.cols());
  const bool dropout = !cache.dropout_mask.empty();
  for (std::size_t t = 0; t < static_cast<std::size_t>(b.steps); ++t) {
    for (Index r = 0; r < b.size; ++r) {
      if (!b.active[t][static_cast<std::size_t>(r)]) continue;
      const auto id = b.ids[t][static_cast<std::size_t>(r)];
      if (dropout) {
        g.embedding.row(id) += d_inputs[t].row(r).cwiseProduct(cache.dropout_mask[t].row(r));
      } else {
        g.embedding.row(id) += d_inputs[t].row(r);
      }
    }
  }
  return out;
}

AdamState AdamState::for_model(const BiLstmModel& model) {
  AdamState state;
  for (const auto& [name, tensor] : model.tensors()) {
    state.first_moment.push_back(MatrixXd::Zero(tensor->rows(), tensor->cols()));
    state.second_moment.push_back(MatrixXd::Zero(tensor->rows(), tensor->cols()));
  }
  return state;
}

double train_step(BiLstmModel& model, AdamState& adam, std::span<const PrefixSample> batch,
                  std::uint64_t dropout_seed) {
  auto result = loss_and_gradients(model, batch, ForwardMode::training(dropout_seed));
  if (!std::isfinite(result.loss)) {
    throw NumericError("non-finite loss at optimizer step " + std::to_string(adam.step + 1));
  }
  const auto& config = model.config;
  auto params = model.tensors();
  auto grads = result.grads.tensors();
  if (adam.first_moment.size() != params.size()) throw ValidationError("optimizer state does not match model");
  ++adam.step;
  const double t = static_cast<double>(adam.step);
  const double correction1 = 1.0 - std::pow(config.adam_beta1, t);
  const double correction2 = 1.0 - std::pow(config.adam_beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const MatrixXd& grad = *grads[k].second;
    if (!grad.allFinite()) throw NumericError("non-finite gradient in " + params[k].first);
    auto& m = adam.first_moment[k];
    auto& v = adam.second_moment[k];
    m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * grad;
    v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * grad.cwiseProduct(grad);
    params[k].second->array() -=
        config.learning_rate * (m.array() / correction1) / ((v.array() / correction2).sqrt() + config.adam_eps);
  }
  return result.loss;
}

bool EarlyStopping::update(double val_loss) {
  ++epoch_;
  improved_ = epoch_ == 1 || val_loss < best_loss_;
  if (improved_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return false;
  }
  ++since_best_;
  return since_best_ >= patience_;
}

std::string TrainReport::curves_csv() const {
  std::string out = "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < train_loss.size(); ++e) {
    out += std::to_string(e + 1) + ',' + textio::format_double(train_loss[e]) + ',' +
           textio::format_double(val_loss[e]) + '\n';
  }
  return out;
}

namespace {

// Mean loss over `samples`, evaluated in fixed-size chunks.
double mean_loss(const BiLstmModel& model, std::span<const PrefixSample> samples) {
  const std::size_t chunk = model.config.batch_size;
  double total = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const auto part = samples.subspan(start, std::min(chunk, samples.size() - start));
    total += batch_loss(model, part) * static_cast<double>(part.size());
  }
  return total / static_cast<double>(samples.size());
}

ApiCallId argmax(const RowVectorXd& row) {
  Index best = 0;
  for (Index k = 1; k < row.size(); ++k) {
    if (row(k) > row(best)) best = k;
  }
  return static_cast<ApiCallId>(best);
}

}  // namespace

double next_call_accuracy(const BiLstmModel& model, std::span<const PrefixSample> samples) {
  if (samples.empty()) return 0.0;
  const std::size_t chunk = model.config.batch_size;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const auto part = samples.subspan(start, std::min(chunk, samples.size() - start));
    const auto probs = forward_batch(model, prefixes_of(part));
    for (std::size_t r = 0; r < part.size(); ++r) correct += argmax(probs.row(static_cast<Index>(r))) == part[r].next;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainResult train(std::span<const PrefixSample> samples, const BiLstmConfig& config) {
  config.validate();
  if (samples.size() < 2) throw ValidationError("need at least two samples to train");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(config.seed, "val-split");
  split_rng.shuffle(order);
  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(samples.size()) * config.val_fraction));
  n_val = std::max<std::size_t>(n_val, 1);
  if (n_val >= samples.size()) throw ValidationError("validation split leaves no training samples");

  TrainResult result;
  std::vector<PrefixSample> training;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_val ? result.validation : training).push_back(samples[order[k]]);
  }

  BiLstmModel model = init_model(config, config.seed);
  AdamState adam = AdamState::for_model(model);
  EarlyStopping stopper(config.patience);
  BiLstmModel best = model;
  const auto shuffle_seed = derive_seed(config.seed, "shuffle");
  const auto dropout_seed = derive_seed(config.seed, "dropout");
  std::vector<PrefixSample> batch;
  for (std::uint32_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<std::size_t> perm(training.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng(shuffle_seed + epoch).shuffle(perm);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
      const auto end = std::min<std::size_t>(perm.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(training[perm[k]]);
      epoch_loss += train_step(model, adam, batch, dropout_seed + adam.step) * static_cast<double>(batch.size());
    }
    result.report.train_loss.push_back(epoch_loss / static_cast<double>(training.size()));
    const double val_loss = mean_loss(model, result.validation);
    result.report.val_loss.push_back(val_loss);
    result.report.val_accuracy.push_back(next_call_accuracy(model, result.validation));
    result.report.stopped_epoch = epoch;
    const bool stop = stopper.update(val_loss);
    if (stopper.improved()) best = model;
    if (stop) break;
  }
  result.report.best_epoch = stopper.best_epoch();
  result.model = std::move(best);
  return result;
}

NextCall predict_next(const BiLstmModel& model, std::span<const ApiCallId> sequence) {
  if (sequence.empty()) throw ValidationError("cannot predict from an empty sequence");
  const std::vector<std::vector<ApiCallId>> one{{sequence.begin(), sequence.end()}};
  NextCall out;
  out.distribution = forward_batch(model, one).row(0);
  out.next = argmax(out.distribution);
  return out;
}

std::vector<ApiCallId> predict_next_k(const BiLstmModel& model, std::span<const ApiCallId> sequence, std::size_t k) {
  if (sequence.empty()) throw ValidationError("cannot predict from an empty sequence");
  std::vector<ApiCallId> context(sequence.begin(), sequence.end());
  std::vector<ApiCallId> out;
  out.reserve(k);
  for (std::size_t step = 0; step < k; ++step) {
    const auto next = predict_next(model, context).next;
    out.push_back(next);
    context.push_back(next);
  }
  return out;
}

}  // namespace apisentry
