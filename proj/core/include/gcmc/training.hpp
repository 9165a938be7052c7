#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcmc/model.hpp"
#include "gcmc/rng.hpp"

namespace gcmc {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<DenseMatrix> first_moment;
  std::vector<DenseMatrix> second_moment;

  /// Zero moments shaped like `params`.
  static AdamState zeros_like(std::span<const DenseMatrix* const> params, AdamConfig config);
  static AdamState zeros_like(const ModelParams& params, AdamConfig config);
};

/// One bias-corrected Adam update. Every gradient is checked before anything is
/// written, so a DivergenceError (non-finite gradient, message names the
/// tensor) leaves parameters and state untouched. `names` is optional.
void adam_step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix* const> grads,
               AdamState& state, std::span<const std::string> names = {});
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state);

struct EmaParams {
  ModelParams shadow;
  double decay = 0.995;
};

/// shadow <- decay * shadow + (1 - decay) * params, per tensor.
void ema_update(EmaParams& ema, const ModelParams& params);

struct Minibatch {
  std::vector<std::size_t> edges;  // indices into the training edge list
  /// Users and items touched by the batch; only their rows are encoded.
  ActiveNodes active;
};

/// One epoch of mini-batches: a uniform permutation of the edge indices cut
/// into consecutive chunks of `batch_size` (the last one may be shorter).
/// Throws ConfigError unless 1 <= batch_size <= edges.size().
std::vector<Minibatch> sample_minibatches(std::span<const LabeledEdge> edges,
                                          std::size_t batch_size, Rng& rng);

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 1000;
  std::size_t batch_size = 0;  // 0 = full batch
  AdamConfig adam;
  double ema_decay = 0.995;
  bool use_ema = true;
  std::size_t eval_every = 10;  // 0 = only after the last epoch
  std::uint64_t seed = 1;

  /// Throws ConfigError on bad values, including batch_size > num_train_edges.
  void validate(std::size_t num_train_edges) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  /// Summed NLL of the epoch's training steps, as seen with dropout active.
  double train_loss = 0.0;
  /// RMSE of the same dropout-perturbed predictions.
  double train_rmse = 0.0;
  std::optional<double> val_rmse;  // EMA parameters, no dropout
  double elapsed_seconds = 0.0;
};

struct MetricsReport {
  std::vector<EpochRecord> epochs;
  std::optional<double> test_rmse;
  std::optional<double> best_val_test_rmse;
  std::optional<double> val_rmse;
  std::optional<std::size_t> best_val_epoch;
  std::string fingerprint;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;
};

struct TrainResult {
  ModelParams params;  // live parameters
  /// Parameters used for evaluation: the moving average, or the live
  /// parameters when use_ema is off.
  ModelParams eval_params;
  /// eval_params at the epoch with the lowest validation RMSE (absent without
  /// a validation set).
  std::optional<ModelParams> best_val_params;
  MetricsReport report;
  /// Set when training stopped on a non-finite loss, gradient or parameter;
  /// everything above then holds the last finite state.
  std::optional<std::string> divergence;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on `train_edges` (which should be the edges of model.graph()) and
/// tracks RMSE on `validation`. Deterministic given config.seed.
/// Draw order per step: mini-batch permutation (once per epoch), node dropout
/// mask, user unit mask, item unit mask.
TrainResult train(const GcmcModel& model, const TrainConfig& config,
                  std::span<const LabeledEdge> train_edges, std::span<const LabeledEdge> validation,
                  const EpochCallback& on_epoch = {});

}  // namespace gcmc
