#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gcmc/graph_data.hpp"
#include "gcmc/rng.hpp"
#include "gcmc/tensor.hpp"

namespace gcmc {

enum class Accumulation { kStack, kSum };
enum class Normalization { kLeft, kSymmetric };
enum class Activation { kRelu, kIdentity };

Accumulation parse_accumulation(std::string_view name);
Normalization parse_normalization(std::string_view name);
Activation parse_activation(std::string_view name);
std::string_view to_string(Accumulation a);
std::string_view to_string(Normalization n);
std::string_view to_string(Activation a);

struct EncoderConfig {
  std::size_t hidden_dim = 500;
  std::size_t embed_dim = 75;
  Accumulation accumulation = Accumulation::kStack;
  Normalization normalization = Normalization::kLeft;
  bool ordinal_sharing = true;
  Activation conv_activation = Activation::kRelu;
  Activation dense_activation = Activation::kIdentity;
  bool side_info = false;
  std::size_t side_hidden_dim = 10;
  double node_dropout = 0.7;
  double unit_dropout = 0.7;

  /// Throws ConfigError for zero sizes, dropout outside [0, 1), or a stacked
  /// hidden layer that does not split evenly over the rating levels.
  void validate(std::size_t num_levels) const;

  /// Output width of one rating level's message transform.
  std::size_t level_width(std::size_t num_levels) const {
    return accumulation == Accumulation::kStack ? hidden_dim / num_levels : hidden_dim;
  }
};

/// Weights of the side-information channel for one node type:
/// f = relu(x W1 + b), contribution f W2.
struct SideChannel {
  DenseMatrix input_weight;   // side_dim x side_hidden
  DenseMatrix bias;           // 1 x side_hidden
  DenseMatrix output_weight;  // side_hidden x embed
};

/// All weights are stored input-major (fan_in x fan_out) so that a layer is a
/// plain row-vector product x * W.
struct EncoderParams {
  /// Ordinal basis T_s, one per level. Rows [0, D_u) act on user features,
  /// rows [D_u, D_u + D_v) on item features.
  std::vector<DenseMatrix> basis;
  /// Dense layer. Shared by users and items unless side information is on.
  DenseMatrix dense_user;
  DenseMatrix dense_item;  // empty when shared
  std::optional<SideChannel> side_user;
  std::optional<SideChannel> side_item;

  const DenseMatrix& dense(Side side) const {
    return side == Side::kItem && dense_item.size() > 0 ? dense_item : dense_user;
  }
  const std::optional<SideChannel>& side(Side s) const {
    return s == Side::kUser ? side_user : side_item;
  }
};

/// Glorot-uniform initialization of every tensor (biases start at zero).
EncoderParams init_encoder_params(const EncoderConfig& cfg, std::size_t num_levels,
                                  std::size_t user_feature_dim, std::size_t item_feature_dim,
                                  std::optional<std::pair<std::size_t, std::size_t>> side_dims,
                                  Rng& rng);

/// W_r = T_1 + ... + T_r with ordinal sharing, W_r = T_r without.
std::vector<DenseMatrix> effective_level_weights(const EncoderParams& params, bool ordinal_sharing);

/// Sender-side node dropout. scale[n] is 0 for a dropped node and 1/(1-p) for
/// a kept one; a dropped node sends no message on any level.
struct NodeDropoutMask {
  std::vector<double> user_scale;
  std::vector<double> item_scale;

  static NodeDropoutMask keep_all(std::size_t num_users, std::size_t num_items);
  std::span<const double> scale(Side side) const {
    return side == Side::kUser ? user_scale : item_scale;
  }
};

/// Draws users first, then items, one Bernoulli(p) per node.
/// Throws ConfigError unless 0 <= p < 1.
NodeDropoutMask node_dropout_mask(const RatingGraph& graph, double p, Rng& rng);

/// M_r with sender columns scaled by the mask: for receiver users the N_u x N_v
/// matrix with column j multiplied by item_scale[j], for receiver items the
/// N_v x N_u transpose with column i multiplied by user_scale[i].
SparseMatrix masked_adjacency(const RatingGraph& graph, std::size_t level,
                              const NodeDropoutMask& mask, Side receiver);

/// Degree-normalized message operators for every level. Entry (i, j) of
/// to_users(r) is 1/c_ij for an observed level-r rating, with c_ij = |N_i|
/// (left) or sqrt(|N_i| |N_j|) (symmetric) over total degrees.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency(const RatingGraph& graph, Normalization normalization);

  std::size_t num_levels() const { return to_users_.size(); }
  const SparseMatrix& to(Side receiver, std::size_t level) const {
    return receiver == Side::kUser ? to_users_[level] : to_items_[level];
  }

 private:
  std::vector<SparseMatrix> to_users_;
  std::vector<SparseMatrix> to_items_;
};

/// Users and items whose embeddings a forward pass computes. Encoder outputs
/// hold one row per active node, in the order listed here.
struct ActiveNodes {
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;

  static ActiveNodes all(std::size_t num_users, std::size_t num_items);
  /// Sorted, de-duplicated endpoints of `pairs`.
  static ActiveNodes from_pairs(std::span<const NodePair> pairs);

  std::span<const std::size_t> of(Side side) const {
    return side == Side::kUser ? std::span<const std::size_t>(users)
                               : std::span<const std::size_t>(items);
  }
};

struct ConvOutput {
  DenseMatrix pre_user;  // accumulated messages before the activation
  DenseMatrix pre_item;
  DenseMatrix hidden_user;  // h after the activation
  DenseMatrix hidden_item;

  const DenseMatrix& pre(Side s) const { return s == Side::kUser ? pre_user : pre_item; }
  const DenseMatrix& hidden(Side s) const { return s == Side::kUser ? hidden_user : hidden_item; }
};

/// Graph convolution layer over the active nodes. `mask` may be null
/// (inference: every node sends, unscaled).
ConvOutput graph_convolve(const NormalizedAdjacency& adjacency, const FeatureSet& features,
                          const EncoderParams& params, const EncoderConfig& cfg,
                          const NodeDropoutMask* mask, const ActiveNodes& active);

/// Convenience form over the whole graph.
ConvOutput graph_convolve(const RatingGraph& graph, const FeatureSet& features,
                          const EncoderParams& params, const EncoderConfig& cfg,
                          const NodeDropoutMask* mask = nullptr);

/// Per-entry multipliers for the hidden units (same shape as ConvOutput::hidden_*).
struct UnitDropoutMasks {
  DenseMatrix user;
  DenseMatrix item;
  const DenseMatrix& of(Side s) const { return s == Side::kUser ? user : item; }
};

struct EmbedOutput {
  DenseMatrix dropped_user;  // h after unit dropout (equals h at inference)
  DenseMatrix dropped_item;
  DenseMatrix side_pre_user;  // x W1 + b, empty without side information
  DenseMatrix side_pre_item;
  DenseMatrix side_user;  // relu(x W1 + b)
  DenseMatrix side_item;
  DenseMatrix pre_user;  // argument of the dense activation
  DenseMatrix pre_item;
  DenseMatrix user;  // U, one row per active user
  DenseMatrix item;  // V, one row per active item

  const DenseMatrix& embedding(Side s) const { return s == Side::kUser ? user : item; }
};

/// Dense layer, optionally with the side-information channel. `side` must be
/// given when cfg.side_info is set (ConfigError otherwise).
EmbedOutput dense_embed(const ConvOutput& conv, const FeatureSet* side,
                        const EncoderParams& params, const EncoderConfig& cfg,
                        const UnitDropoutMasks* unit_dropout, const ActiveNodes& active);

double activate(Activation a, double x);
/// Derivative of the activation given its argument (0 at the ReLU kink).
double activation_slope(Activation a, double x);

}  // namespace gcmc
