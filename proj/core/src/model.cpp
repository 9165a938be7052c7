#include "gcmc/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gcmc/error.hpp"

namespace gcmc {
namespace {

std::size_t local_index(std::span<const std::size_t> sorted, std::size_t global) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), global) - sorted.begin());
}

void multiply_by_slope(Activation a, const DenseMatrix& pre, DenseMatrix& grad) {
  if (a == Activation::kIdentity) return;
  auto g = grad.values();
  auto p = pre.values();
  for (std::size_t k = 0; k < g.size(); ++k) g[k] *= activation_slope(a, p[k]);
}

void require(bool ok, const char* what) {
  if (!ok) throw ContractViolation(std::string("backward: ") + what);
}

template <typename Params, typename Out>
void collect(Params& p, Out& out) {
  for (std::size_t r = 0; r < p.encoder.basis.size(); ++r) {
    out.emplace_back("encoder.basis." + std::to_string(r), &p.encoder.basis[r]);
  }
  out.emplace_back("encoder.dense.user", &p.encoder.dense_user);
  if (p.encoder.dense_item.size() > 0) out.emplace_back("encoder.dense.item", &p.encoder.dense_item);
  for (auto* side : {&p.encoder.side_user, &p.encoder.side_item}) {
    if (!*side) continue;
    const std::string prefix = side == &p.encoder.side_user ? "encoder.side.user." : "encoder.side.item.";
    out.emplace_back(prefix + "input_weight", &(*side)->input_weight);
    out.emplace_back(prefix + "bias", &(*side)->bias);
    out.emplace_back(prefix + "output_weight", &(*side)->output_weight);
  }
  for (std::size_t s = 0; s < p.decoder.basis.size(); ++s) {
    out.emplace_back("decoder.basis." + std::to_string(s), &p.decoder.basis[s]);
  }
  out.emplace_back("decoder.coefficients", &p.decoder.coefficients);
}

}  // namespace

void ModelConfig::validate() const {
  encoder.validate(num_levels);
  if (num_basis < 1 || num_basis > num_levels) {
    throw ConfigError("num_basis must lie in [1, num_levels = " + std::to_string(num_levels) +
                      "], got " + std::to_string(num_basis));
  }
}

std::vector<std::pair<std::string, DenseMatrix*>> ModelParams::named() {
  std::vector<std::pair<std::string, DenseMatrix*>> out;
  collect(*this, out);
  return out;
}

std::vector<std::pair<std::string, const DenseMatrix*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const DenseMatrix*>> out;
  collect(*this, out);
  return out;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, t] : named()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& [name, t] : z.named()) t->fill(0.0);
  return z;
}

double nll_loss(const DenseMatrix& probabilities, std::span<const std::size_t> targets) {
  if (targets.size() != probabilities.rows()) {
    throw ContractViolation("nll_loss: one target per probability row expected");
  }
  double loss = 0.0;
  for (std::size_t e = 0; e < targets.size(); ++e) {
    if (targets[e] >= probabilities.cols()) throw ContractViolation("nll_loss: target level out of range");
    loss -= std::log(std::max(probabilities(e, targets[e]), kProbabilityFloor));
  }
  return loss;
}

GcmcModel::GcmcModel(ModelConfig config, RatingGraph graph, FeatureSet features,
                     std::optional<FeatureSet> side, std::vector<double> level_values)
    : config_(std::move(config)),
      graph_(std::move(graph)),
      adjacency_(graph_, config_.encoder.normalization),
      features_(std::move(features)),
      side_(std::move(side)),
      level_values_(std::move(level_values)) {
  config_.validate();
  if (graph_.num_levels() != config_.num_levels || level_values_.size() != config_.num_levels) {
    throw ContractViolation("GcmcModel: graph, level values and config disagree on the level count");
  }
  if (features_.count(Side::kUser) != graph_.num_users() ||
      features_.count(Side::kItem) != graph_.num_items()) {
    throw ContractViolation("GcmcModel: feature rows do not match the graph's node counts");
  }
  if (config_.encoder.side_info) {
    if (!side_ || side_->kind() != FeatureSet::Kind::kSideInfo) {
      throw ConfigError("side_info is enabled but no side features were provided");
    }
    if (side_->count(Side::kUser) != graph_.num_users() ||
        side_->count(Side::kItem) != graph_.num_items()) {
      throw ContractViolation("GcmcModel: side feature rows do not match the graph's node counts");
    }
  }
}

ModelParams GcmcModel::init_params(Rng& rng) const {
  std::optional<std::pair<std::size_t, std::size_t>> side_dims;
  if (config_.encoder.side_info) side_dims = {{side_->dim(Side::kUser), side_->dim(Side::kItem)}};
  ModelParams p;
  p.encoder = init_encoder_params(config_.encoder, config_.num_levels, features_.dim(Side::kUser),
                                  features_.dim(Side::kItem), side_dims, rng);
  p.decoder = init_decoder_params(config_.encoder.embed_dim, config_.num_levels, config_.num_basis, rng);
  return p;
}

DropoutState GcmcModel::sample_dropout(const ActiveNodes& active, Rng& rng) const {
  DropoutState state{node_dropout_mask(graph_, config_.encoder.node_dropout, rng), {}};
  const std::size_t hidden = config_.encoder.hidden_dim;
  state.units.user =
      apply_unit_dropout(DenseMatrix(active.users.size(), hidden, 1.0), config_.encoder.unit_dropout, rng).mask;
  state.units.item =
      apply_unit_dropout(DenseMatrix(active.items.size(), hidden, 1.0), config_.encoder.unit_dropout, rng).mask;
  return state;
}

ForwardTrace GcmcModel::forward(const ModelParams& params, std::span<const NodePair> pairs,
                                const DropoutState* dropout) const {
  ForwardTrace t;
  t.pairs.assign(pairs.begin(), pairs.end());
  for (const auto& p : pairs) {
    if (p.user >= graph_.num_users() || p.item >= graph_.num_items()) {
      throw ContractViolation("forward: pair (" + std::to_string(p.user) + ", " +
                              std::to_string(p.item) + ") outside the graph");
    }
  }
  t.active = ActiveNodes::from_pairs(pairs);
  t.local_pairs.reserve(pairs.size());
  for (const auto& p : pairs) {
    t.local_pairs.push_back({local_index(t.active.users, p.user), local_index(t.active.items, p.item)});
  }
  if (dropout) t.dropout = *dropout;
  const auto& ecfg = config_.encoder;
  t.conv = graph_convolve(adjacency_, features_, params.encoder, ecfg,
                          t.dropout ? &t.dropout->nodes : nullptr, t.active);
  t.embed = dense_embed(t.conv, side_features(), params.encoder, ecfg,
                        t.dropout ? &t.dropout->units : nullptr, t.active);
  t.decoder = basis_logits(t.embed.user, t.embed.item, t.local_pairs, params.decoder);
  t.probabilities = row_softmax(t.decoder.logits);
  return t;
}

std::vector<EdgePrediction> GcmcModel::predict(const ModelParams& params,
                                               std::span<const NodePair> pairs) const {
  const ForwardTrace t = forward(params, pairs, nullptr);
  return gcmc::predict(t.decoder.logits, level_values_);
}

ModelParams GcmcModel::backward(const ForwardTrace& trace, const ModelParams& params,
                                std::span<const std::size_t> targets) const {
  const auto& ecfg = config_.encoder;
  const std::size_t levels = config_.num_levels;
  const std::size_t n_edges = trace.pairs.size();
  const std::size_t nb = params.decoder.num_basis();

  require(targets.size() == n_edges, "one target per traced pair expected");
  require(trace.probabilities.rows() == n_edges && trace.probabilities.cols() == levels,
          "probability table does not match the traced pairs");
  require(trace.decoder.scores.cols() == nb && trace.decoder.projected.size() == nb,
          "trace has a different decoder basis count");
  require(trace.embed.user.cols() == params.decoder.basis.front().rows(),
          "trace embedding width differs from the decoder");
  require(trace.conv.hidden_user.cols() == params.encoder.dense_user.rows(),
          "trace hidden width differs from the dense layer");
  require(trace.embed.user.rows() == trace.active.users.size() &&
              trace.embed.item.rows() == trace.active.items.size(),
          "trace embeddings do not match its active nodes");
  require(params.encoder.basis.size() == levels &&
              params.encoder.basis.front().rows() ==
                  features_.dim(Side::kUser) + features_.dim(Side::kItem),
          "parameters do not match the model's features");

  ModelParams grads = params.zeros_like();

  // Softmax + NLL: d loss / d logits = p - onehot(target); zero where the
  // probability floor is active (the clamped loss is flat there).
  DenseMatrix dlogits(n_edges, levels);
  for (std::size_t e = 0; e < n_edges; ++e) {
    require(targets[e] < levels, "target level out of range");
    if (trace.probabilities(e, targets[e]) < kProbabilityFloor) continue;
    auto dst = dlogits.row(e);
    auto src = trace.probabilities.row(e);
    std::copy(src.begin(), src.end(), dst.begin());
    dst[targets[e]] -= 1.0;
  }

  // Decoder: logits = scores a^T, scores[e][s] = (U P_s)[i] . v_j.
  grads.decoder.coefficients = matmul_tn(dlogits, trace.decoder.scores);
  const DenseMatrix dscores = matmul(dlogits, params.decoder.coefficients);
  const DenseMatrix& users = trace.embed.user;
  const DenseMatrix& items = trace.embed.item;
  const std::size_t width = users.cols();
  DenseMatrix duser(users.rows(), width);
  DenseMatrix ditem(items.rows(), width);
  for (std::size_t s = 0; s < nb; ++s) {
    const DenseMatrix& proj = trace.decoder.projected[s];
    DenseMatrix dproj(users.rows(), width);
    for (std::size_t e = 0; e < n_edges; ++e) {
      const double ds = dscores(e, s);
      if (ds == 0.0) continue;
      const auto [lu, lv] = trace.local_pairs[e];
      auto dp = dproj.row(lu);
      auto dv = ditem.row(lv);
      const auto v = items.row(lv);
      const auto pu = proj.row(lu);
      for (std::size_t k = 0; k < width; ++k) {
        dp[k] += ds * v[k];
        dv[k] += ds * pu[k];
      }
    }
    grads.decoder.basis[s] = matmul_tn(users, dproj);
    duser += matmul_nt(dproj, params.decoder.basis[s]);
  }

  // Dense layer (+ side channel), unit dropout, conv activation.
  DenseMatrix dconv_pre[2];
  const bool shared_dense = params.encoder.dense_item.size() == 0;
  for (const Side side : {Side::kUser, Side::kItem}) {
    const bool is_user = side == Side::kUser;
    DenseMatrix dpre = is_user ? std::move(duser) : std::move(ditem);
    multiply_by_slope(ecfg.dense_activation, is_user ? trace.embed.pre_user : trace.embed.pre_item, dpre);

    const DenseMatrix& dropped = is_user ? trace.embed.dropped_user : trace.embed.dropped_item;
    DenseMatrix& dw = (is_user || shared_dense) ? grads.encoder.dense_user : grads.encoder.dense_item;
    dw += matmul_tn(dropped, dpre);
    DenseMatrix dhidden = matmul_nt(dpre, params.encoder.dense(side));

    if (ecfg.side_info) {
      const SideChannel& ch = *params.encoder.side(side);
      SideChannel& gch = is_user ? *grads.encoder.side_user : *grads.encoder.side_item;
      const DenseMatrix& side_act = is_user ? trace.embed.side_user : trace.embed.side_item;
      const DenseMatrix& side_pre = is_user ? trace.embed.side_pre_user : trace.embed.side_pre_item;
      gch.output_weight += matmul_tn(side_act, dpre);
      DenseMatrix dside = matmul_nt(dpre, ch.output_weight);
      multiply_by_slope(Activation::kRelu, side_pre, dside);
      const DenseMatrix x = gather_rows(side_->dense(side), trace.active.of(side));
      gch.input_weight += matmul_tn(x, dside);
      for (std::size_t n = 0; n < dside.rows(); ++n) {
        for (std::size_t c = 0; c < dside.cols(); ++c) gch.bias(0, c) += dside(n, c);
      }
    }

    if (trace.dropout) {
      const DenseMatrix& mask = trace.dropout->units.of(side);
      require(mask.same_shape(dhidden), "unit dropout mask shape");
      auto g = dhidden.values();
      auto m = mask.values();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= m[k];
    }
    multiply_by_slope(ecfg.conv_activation, trace.conv.pre(side), dhidden);
    dconv_pre[is_user ? 0 : 1] = std::move(dhidden);
  }

  // Graph convolution: pre_receiver = accum_r A_r[active] (s * X_sender W_r).
  const std::size_t level_width = ecfg.level_width(levels);
  const std::size_t in_dim = params.encoder.basis.front().rows();
  std::vector<DenseMatrix> dlevel(levels, DenseMatrix(in_dim, level_width));
  for (const Side receiver : {Side::kUser, Side::kItem}) {
    const Side sender = receiver == Side::kUser ? Side::kItem : Side::kUser;
    const std::size_t offset = sender == Side::kUser ? 0 : features_.dim(Side::kUser);
    const DenseMatrix& dpre = dconv_pre[receiver == Side::kUser ? 0 : 1];
    for (std::size_t r = 0; r < levels; ++r) {
      const DenseMatrix dblock = ecfg.accumulation == Accumulation::kStack
                                     ? column_block(dpre, r * level_width, level_width)
                                     : dpre;
      DenseMatrix dmessages(features_.count(sender), level_width);
      spmm_rows_transposed_add(adjacency_.to(receiver, r), trace.active.of(receiver), dblock, dmessages);
      if (trace.dropout) {
        const auto scale = trace.dropout->nodes.scale(sender);
        for (std::size_t n = 0; n < dmessages.rows(); ++n) {
          if (scale[n] != 1.0) {
            for (double& v : dmessages.row(n)) v *= scale[n];
          }
        }
      }
      features_.project_adjoint(sender, dmessages, dlevel[r], offset);
    }
  }

  // W_r = sum_{s<=r} T_s  =>  dT_s = sum_{r>=s} dW_r.
  if (ecfg.ordinal_sharing) {
    for (std::size_t r = levels - 1; r > 0; --r) dlevel[r - 1] += dlevel[r];
  }
  for (std::size_t r = 0; r < levels; ++r) grads.encoder.basis[r] = std::move(dlevel[r]);
  return grads;
}

}  // namespace gcmc
