#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "apisentry/ngram.hpp"

namespace apisentry {

struct BiLstmConfig {
  std::uint32_t vocab_size = 0;  // number of output classes; pad id == vocab_size
  std::uint32_t embed_dim = 64;
  std::uint32_t hidden = 150;
  double dropout_rate = 0.3;
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint32_t batch_size = 128;
  std::uint32_t max_epochs = 50;
  std::uint32_t patience = 3;
  double val_fraction = 0.1;
  std::uint32_t max_prefix_len = 99;
  std::uint64_t seed = 42;

  void validate() const;
  /// Hidden 150, dropout 0.3, learning rate 0.01.
  bool reference_settings() const;
  ApiCallId pad_id() const { return vocab_size; }
  bool operator==(const BiLstmConfig&) const = default;
};

/// One LSTM direction. Gate blocks are laid out [i | f | o | g] along the
/// columns of W (embed x 4H), U (H x 4H) and b (1 x 4H).
struct LstmParams {
  Eigen::MatrixXd W;
  Eigen::MatrixXd U;
  Eigen::MatrixXd b;
};

struct BiLstmModel {
  BiLstmConfig config;
  Eigen::MatrixXd embedding;  // (vocab + 1) x embed; last row is the pad row
  LstmParams forward_cell;
  LstmParams backward_cell;
  Eigen::MatrixXd dense_w;    // 2H x vocab; rows [0,H) read the forward state
  Eigen::MatrixXd dense_b;    // 1 x vocab

  /// Every parameter tensor with a stable name, in serialization order.
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensors();
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors() const;
};

/// Glorot-uniform weights, forget-gate bias 1, other biases 0, zero pad row.
BiLstmModel init_model(const BiLstmConfig& config, std::uint64_t seed);

/// One step of the standard cell on row vectors.
std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> lstm_cell(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& h,
                                                            const Eigen::RowVectorXd& c, const LstmParams& params);

/// Inference, or training with an inverted-dropout mask drawn from `dropout_seed`.
struct ForwardMode {
  bool train = false;
  std::uint64_t dropout_seed = 0;

  static ForwardMode infer() { return {}; }
  static ForwardMode training(std::uint64_t seed) { return {true, seed}; }
};

/// Output distribution for one padded prefix. Pad tokens may only appear as
/// a left prefix and are skipped by both directions.
Eigen::RowVectorXd forward(const BiLstmModel& model, std::span<const ApiCallId> padded_prefix,
                           ForwardMode mode = ForwardMode::infer());

/// Distributions for a batch of (unpadded) prefixes, one row per sample.
/// Prefixes longer than max_prefix_len keep their last max_prefix_len calls.
Eigen::MatrixXd forward_batch(const BiLstmModel& model, std::span<const std::vector<ApiCallId>> prefixes,
                              ForwardMode mode = ForwardMode::infer());

/// Mean categorical cross-entropy of the true next ids.
double batch_loss(const BiLstmModel& model, std::span<const PrefixSample> batch,
                  ForwardMode mode = ForwardMode::infer());

/// Gradients of batch_loss with respect to every tensor, same layout as the model.
struct Gradients {
  Eigen::MatrixXd embedding;
  LstmParams forward_cell;
  LstmParams backward_cell;
  Eigen::MatrixXd dense_w;
  Eigen::MatrixXd dense_b;

  std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensors();
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

LossAndGradients loss_and_gradients(const BiLstmModel& model, std::span<const PrefixSample> batch,
                                    ForwardMode mode = ForwardMode::infer());

struct AdamState {
  std::vector<Eigen::MatrixXd> first_moment;
  std::vector<Eigen::MatrixXd> second_moment;
  std::uint64_t step = 0;

  static AdamState for_model(const BiLstmModel& model);
};

/// Backpropagates through both directions and applies one bias-corrected
/// Adam update. Returns the (train-mode) batch loss. Throws NumericError on
/// a non-finite loss.
double train_step(BiLstmModel& model, AdamState& adam, std::span<const PrefixSample> batch,
                  std::uint64_t dropout_seed);

/// Patience-based early stopping on validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::uint32_t patience) : patience_(patience) {}

  /// Records one epoch's validation loss; returns true when training should stop.
  bool update(double val_loss);
  bool improved() const { return improved_; }
  std::uint32_t best_epoch() const { return best_epoch_; }  // 1-based
  double best_loss() const { return best_loss_; }
  std::uint32_t epochs_seen() const { return epoch_; }

 private:
  std::uint32_t patience_;
  std::uint32_t epoch_ = 0;
  std::uint32_t best_epoch_ = 0;
  std::uint32_t since_best_ = 0;
  double best_loss_ = 0.0;
  bool improved_ = false;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;
  std::uint32_t stopped_epoch = 0;
  std::uint32_t best_epoch = 0;

  /// "epoch,train_loss,val_loss"
  std::string curves_csv() const;
  bool operator==(const TrainReport&) const = default;
};

struct TrainResult {
  BiLstmModel model;
  TrainReport report;
  std::vector<PrefixSample> validation;  // held-out samples used for early stopping
};

TrainResult train(std::span<const PrefixSample> samples, const BiLstmConfig& config);

/// Fraction of samples whose argmax prediction equals the true next id.
double next_call_accuracy(const BiLstmModel& model, std::span<const PrefixSample> samples);

struct NextCall {
  ApiCallId next = 0;
  Eigen::RowVectorXd distribution;
};

/// Argmax of the inference distribution, ties to the lowest id.
NextCall predict_next(const BiLstmModel& model, std::span<const ApiCallId> sequence);

/// Greedy autoregressive decoding of k calls.
std::vector<ApiCallId> predict_next_k(const BiLstmModel& model, std::span<const ApiCallId> sequence, std::size_t k);

std::string serialize_model(const BiLstmModel& model);
BiLstmModel parse_model(std::string_view content);

}  // namespace apisentry
