#include "gcmc/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gcmc/error.hpp"

namespace gcmc {
namespace {

DenseMatrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  DenseMatrix m(fan_in, fan_out);
  for (double& v : m.values()) v = rng.uniform(-limit, limit);
  return m;
}

void apply_activation(Activation a, const DenseMatrix& pre, DenseMatrix& out) {
  out = pre;
  if (a == Activation::kRelu) {
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  }
}

void require_dropout_probability(double p, const char* what) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError(std::string(what) + " must lie in [0, 1), got " + std::to_string(p));
  }
}

}  // namespace

Accumulation parse_accumulation(std::string_view name) {
  if (name == "stack") return Accumulation::kStack;
  if (name == "sum") return Accumulation::kSum;
  throw ConfigError("accumulation must be 'stack' or 'sum', got '" + std::string(name) + "'");
}

Normalization parse_normalization(std::string_view name) {
  if (name == "left") return Normalization::kLeft;
  if (name == "symmetric") return Normalization::kSymmetric;
  throw ConfigError("normalization must be 'left' or 'symmetric', got '" + std::string(name) + "'");
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("activation must be 'relu' or 'identity', got '" + std::string(name) + "'");
}

std::string_view to_string(Accumulation a) { return a == Accumulation::kStack ? "stack" : "sum"; }
std::string_view to_string(Normalization n) {
  return n == Normalization::kLeft ? "left" : "symmetric";
}
std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "identity"; }

double activate(Activation a, double x) {
  return a == Activation::kRelu ? (x > 0.0 ? x : 0.0) : x;
}

double activation_slope(Activation a, double x) {
  return a == Activation::kRelu ? (x > 0.0 ? 1.0 : 0.0) : 1.0;
}

void EncoderConfig::validate(std::size_t num_levels) const {
  if (num_levels == 0) throw ConfigError("at least one rating level is required");
  if (hidden_dim == 0 || embed_dim == 0) throw ConfigError("hidden_dim and embed_dim must be >= 1");
  if (side_info && side_hidden_dim == 0) throw ConfigError("side_hidden_dim must be >= 1");
  if (accumulation == Accumulation::kStack && hidden_dim % num_levels != 0) {
    throw ConfigError("stack accumulation needs hidden_dim (" + std::to_string(hidden_dim) +
                      ") divisible by the number of rating levels (" +
                      std::to_string(num_levels) + ")");
  }
  require_dropout_probability(node_dropout, "node_dropout");
  require_dropout_probability(unit_dropout, "unit_dropout");
}

EncoderParams init_encoder_params(const EncoderConfig& cfg, std::size_t num_levels,
                                  std::size_t user_feature_dim, std::size_t item_feature_dim,
                                  std::optional<std::pair<std::size_t, std::size_t>> side_dims,
                                  Rng& rng) {
  cfg.validate(num_levels);
  if (cfg.side_info && !side_dims) {
    throw ConfigError("side_info is enabled but no side features were provided");
  }
  EncoderParams p;
  const std::size_t in_dim = user_feature_dim + item_feature_dim;
  const std::size_t width = cfg.level_width(num_levels);
  // Fan-out is the full hidden layer, as if the stacked slices were one matrix.
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + cfg.hidden_dim));
  for (std::size_t r = 0; r < num_levels; ++r) {
    DenseMatrix t(in_dim, width);
    for (double& v : t.values()) v = rng.uniform(-limit, limit);
    p.basis.push_back(std::move(t));
  }
  p.dense_user = glorot(cfg.hidden_dim, cfg.embed_dim, rng);
  if (cfg.side_info) {
    p.dense_item = glorot(cfg.hidden_dim, cfg.embed_dim, rng);
    const auto [user_side, item_side] = *side_dims;
    p.side_user = SideChannel{glorot(user_side, cfg.side_hidden_dim, rng),
                              DenseMatrix(1, cfg.side_hidden_dim),
                              glorot(cfg.side_hidden_dim, cfg.embed_dim, rng)};
    p.side_item = SideChannel{glorot(item_side, cfg.side_hidden_dim, rng),
                              DenseMatrix(1, cfg.side_hidden_dim),
                              glorot(cfg.side_hidden_dim, cfg.embed_dim, rng)};
  }
  return p;
}

std::vector<DenseMatrix> effective_level_weights(const EncoderParams& params, bool ordinal_sharing) {
  std::vector<DenseMatrix> out;
  out.reserve(params.basis.size());
  for (std::size_t r = 0; r < params.basis.size(); ++r) {
    if (ordinal_sharing && r > 0) {
      out.push_back(out.back() + params.basis[r]);
    } else {
      out.push_back(params.basis[r]);
    }
  }
  return out;
}

NodeDropoutMask NodeDropoutMask::keep_all(std::size_t num_users, std::size_t num_items) {
  return {std::vector<double>(num_users, 1.0), std::vector<double>(num_items, 1.0)};
}

NodeDropoutMask node_dropout_mask(const RatingGraph& graph, double p, Rng& rng) {
  require_dropout_probability(p, "node dropout");
  auto mask = NodeDropoutMask::keep_all(graph.num_users(), graph.num_items());
  if (p == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& s : mask.user_scale) s = rng.bernoulli(p) ? 0.0 : keep_scale;
  for (double& s : mask.item_scale) s = rng.bernoulli(p) ? 0.0 : keep_scale;
  return mask;
}

SparseMatrix masked_adjacency(const RatingGraph& graph, std::size_t level,
                              const NodeDropoutMask& mask, Side receiver) {
  const SparseMatrix& m = graph.adjacency(level);
  if (receiver == Side::kUser) {
    return m.map_values([&](std::size_t, std::size_t j, double v) { return v * mask.item_scale[j]; });
  }
  return m.transpose().map_values(
      [&](std::size_t, std::size_t i, double v) { return v * mask.user_scale[i]; });
}

NormalizedAdjacency::NormalizedAdjacency(const RatingGraph& graph, Normalization normalization) {
  const auto du = graph.user_degrees();
  const auto dv = graph.item_degrees();
  for (std::size_t r = 0; r < graph.num_levels(); ++r) {
    const SparseMatrix& m = graph.adjacency(r);
    if (normalization == Normalization::kLeft) {
      to_users_.push_back(m.map_values([&](std::size_t i, std::size_t, double v) {
        return v / static_cast<double>(du[i]);
      }));
      to_items_.push_back(m.transpose().map_values([&](std::size_t j, std::size_t, double v) {
        return v / static_cast<double>(dv[j]);
      }));
    } else {
      auto coef = [&](std::size_t u, std::size_t i) {
        return 1.0 / std::sqrt(static_cast<double>(du[u]) * static_cast<double>(dv[i]));
      };
      to_users_.push_back(
          m.map_values([&](std::size_t u, std::size_t i, double v) { return v * coef(u, i); }));
      to_items_.push_back(m.transpose().map_values(
          [&](std::size_t i, std::size_t u, double v) { return v * coef(u, i); }));
    }
  }
}

ActiveNodes ActiveNodes::all(std::size_t num_users, std::size_t num_items) {
  ActiveNodes a;
  a.users.resize(num_users);
  a.items.resize(num_items);
  for (std::size_t k = 0; k < num_users; ++k) a.users[k] = k;
  for (std::size_t k = 0; k < num_items; ++k) a.items[k] = k;
  return a;
}

ActiveNodes ActiveNodes::from_pairs(std::span<const NodePair> pairs) {
  ActiveNodes a;
  a.users.reserve(pairs.size());
  a.items.reserve(pairs.size());
  for (const auto& p : pairs) {
    a.users.push_back(p.user);
    a.items.push_back(p.item);
  }
  for (auto* v : {&a.users, &a.items}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  return a;
}

ConvOutput graph_convolve(const NormalizedAdjacency& adjacency, const FeatureSet& features,
                          const EncoderParams& params, const EncoderConfig& cfg,
                          const NodeDropoutMask* mask, const ActiveNodes& active) {
  const std::size_t levels = params.basis.size();
  if (adjacency.num_levels() != levels) {
    throw ContractViolation("graph_convolve: graph and parameters disagree on the level count");
  }
  const std::size_t user_dim = features.dim(Side::kUser);
  const std::size_t item_dim = features.dim(Side::kItem);
  if (params.basis.empty() || params.basis.front().rows() != user_dim + item_dim) {
    throw ContractViolation("graph_convolve: feature dimensions do not match the ordinal basis");
  }
  if (mask && (mask->user_scale.size() != features.count(Side::kUser) ||
               mask->item_scale.size() != features.count(Side::kItem))) {
    throw ContractViolation("graph_convolve: node dropout mask has the wrong size");
  }

  const auto weights = effective_level_weights(params, cfg.ordinal_sharing);
  ConvOutput out;
  for (const Side receiver : {Side::kUser, Side::kItem}) {
    const Side sender = receiver == Side::kUser ? Side::kItem : Side::kUser;
    const std::size_t offset = sender == Side::kUser ? 0 : user_dim;
    const auto rows = active.of(receiver);
    std::vector<DenseMatrix> per_level;
    per_level.reserve(levels);
    for (std::size_t r = 0; r < levels; ++r) {
      // Outgoing message table: one row per sender node, zeroed/rescaled by node dropout.
      DenseMatrix messages = features.project(sender, weights[r], offset);
      if (mask) {
        const auto scale = mask->scale(sender);
        for (std::size_t n = 0; n < messages.rows(); ++n) {
          if (scale[n] != 1.0) {
            for (double& v : messages.row(n)) v *= scale[n];
          }
        }
      }
      per_level.push_back(spmm_rows(adjacency.to(receiver, r), rows, messages));
    }
    DenseMatrix pre;
    if (cfg.accumulation == Accumulation::kStack) {
      pre = hstack(per_level);
    } else {
      pre = std::move(per_level.front());
      for (std::size_t r = 1; r < levels; ++r) pre += per_level[r];
    }
    DenseMatrix hidden;
    apply_activation(cfg.conv_activation, pre, hidden);
    if (receiver == Side::kUser) {
      out.pre_user = std::move(pre);
      out.hidden_user = std::move(hidden);
    } else {
      out.pre_item = std::move(pre);
      out.hidden_item = std::move(hidden);
    }
  }
  return out;
}

ConvOutput graph_convolve(const RatingGraph& graph, const FeatureSet& features,
                          const EncoderParams& params, const EncoderConfig& cfg,
                          const NodeDropoutMask* mask) {
  const NormalizedAdjacency adjacency(graph, cfg.normalization);
  return graph_convolve(adjacency, features, params, cfg, mask,
                        ActiveNodes::all(graph.num_users(), graph.num_items()));
}

EmbedOutput dense_embed(const ConvOutput& conv, const FeatureSet* side,
                        const EncoderParams& params, const EncoderConfig& cfg,
                        const UnitDropoutMasks* unit_dropout, const ActiveNodes& active) {
  if (cfg.side_info) {
    if (side == nullptr || side->kind() != FeatureSet::Kind::kSideInfo) {
      throw ConfigError("side_info is enabled but no side features were provided");
    }
    if (!params.side_user || !params.side_item) {
      throw ContractViolation("dense_embed: side_info enabled but parameters lack a side channel");
    }
  }
  EmbedOutput out;
  for (const Side s : {Side::kUser, Side::kItem}) {
    const DenseMatrix& hidden = conv.hidden(s);
    const DenseMatrix& w = params.dense(s);
    if (hidden.cols() != w.rows() || w.cols() != cfg.embed_dim) {
      throw ContractViolation("dense_embed: hidden width does not match the dense layer");
    }
    DenseMatrix dropped = hidden;
    if (unit_dropout) {
      const DenseMatrix& m = unit_dropout->of(s);
      if (!m.same_shape(hidden)) throw ContractViolation("dense_embed: unit dropout mask shape");
      auto dv = dropped.values();
      auto mv = m.values();
      for (std::size_t k = 0; k < dv.size(); ++k) dv[k] *= mv[k];
    }
    DenseMatrix pre = matmul(dropped, w);
    DenseMatrix side_pre;
    DenseMatrix side_act;
    if (cfg.side_info) {
      const SideChannel& ch = *params.side(s);
      const DenseMatrix x = gather_rows(side->dense(s), active.of(s));
      side_pre = matmul(x, ch.input_weight);
      for (std::size_t n = 0; n < side_pre.rows(); ++n) {
        auto row = side_pre.row(n);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += ch.bias(0, c);
      }
      apply_activation(Activation::kRelu, side_pre, side_act);
      pre += matmul(side_act, ch.output_weight);
    }
    DenseMatrix emb;
    apply_activation(cfg.dense_activation, pre, emb);
    if (s == Side::kUser) {
      out.dropped_user = std::move(dropped);
      out.side_pre_user = std::move(side_pre);
      out.side_user = std::move(side_act);
      out.pre_user = std::move(pre);
      out.user = std::move(emb);
    } else {
      out.dropped_item = std::move(dropped);
      out.side_pre_item = std::move(side_pre);
      out.side_item = std::move(side_act);
      out.pre_item = std::move(pre);
      out.item = std::move(emb);
    }
  }
  return out;
}

}  // namespace gcmc
