#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcmc/decoder.hpp"
#include "gcmc/encoder.hpp"
#include "gcmc/graph_data.hpp"

namespace gcmc {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t num_levels = 5;
  std::size_t num_basis = 2;

  void validate() const;
};

/// Every trainable tensor of the model.
struct ModelParams {
  EncoderParams encoder;
  DecoderParams decoder;

  /// Tensors in a fixed order with stable names (used by the optimizer,
  /// the moving average and checkpoints).
  std::vector<std::pair<std::string, DenseMatrix*>> named();
  std::vector<std::pair<std::string, const DenseMatrix*>> named() const;

  bool all_finite() const;
  /// Same structure, all entries zero.
  ModelParams zeros_like() const;
};

/// Dropout draws for one training step.
struct DropoutState {
  NodeDropoutMask nodes;
  UnitDropoutMasks units;
};

/// Intermediates of one forward pass, consumed by backward().
struct ForwardTrace {
  std::vector<NodePair> pairs;        // dense dataset indices
  std::vector<NodePair> local_pairs;  // rows of the encoder outputs
  ActiveNodes active;
  std::optional<DropoutState> dropout;
  ConvOutput conv;
  EmbedOutput embed;
  BasisLogits decoder;
  DenseMatrix probabilities;
};

/// The graph auto-encoder bound to one training graph and its input features.
/// Messages always flow over the full training graph; a forward pass computes
/// embeddings only for the endpoints of the requested pairs.
class GcmcModel {
 public:
  GcmcModel(ModelConfig config, RatingGraph graph, FeatureSet features,
            std::optional<FeatureSet> side, std::vector<double> level_values);

  const ModelConfig& config() const { return config_; }
  const RatingGraph& graph() const { return graph_; }
  const FeatureSet& features() const { return features_; }
  const FeatureSet* side_features() const { return side_ ? &*side_ : nullptr; }
  std::span<const double> level_values() const { return level_values_; }

  ModelParams init_params(Rng& rng) const;

  /// Node mask over the whole graph, then unit masks for the active users and
  /// items (in that order).
  DropoutState sample_dropout(const ActiveNodes& active, Rng& rng) const;

  /// `dropout` null means inference: no node or unit dropout.
  ForwardTrace forward(const ModelParams& params, std::span<const NodePair> pairs,
                       const DropoutState* dropout) const;

  /// Gradient of nll_loss(trace.probabilities, targets) with respect to every
  /// parameter. Throws ContractViolation if the trace does not belong to
  /// `params` (stale shapes) or targets do not match the traced pairs.
  ModelParams backward(const ForwardTrace& trace, const ModelParams& params,
                       std::span<const std::size_t> targets) const;

  /// Expected ratings and level probabilities for arbitrary pairs, no dropout.
  std::vector<EdgePrediction> predict(const ModelParams& params, std::span<const NodePair> pairs) const;

 private:
  ModelConfig config_;
  RatingGraph graph_;
  NormalizedAdjacency adjacency_;
  FeatureSet features_;
  std::optional<FeatureSet> side_;
  std::vector<double> level_values_;
};

/// Smallest probability fed to the logarithm in the loss.
inline constexpr double kProbabilityFloor = 1e-12;

/// -sum_e log max(p[e][target_e], 1e-12): summed, not averaged.
double nll_loss(const DenseMatrix& probabilities, std::span<const std::size_t> targets);

}  // namespace gcmc
