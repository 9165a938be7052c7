#include "gcmc/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "gcmc/error.hpp"
#include "gcmc/eval.hpp"

namespace gcmc {
namespace {

std::vector<const DenseMatrix*> const_tensors(const ModelParams& p) {
  std::vector<const DenseMatrix*> out;
  for (const auto& [name, t] : p.named()) out.push_back(t);
  return out;
}

std::vector<NodePair> pairs_of(std::span<const LabeledEdge> edges) {
  std::vector<NodePair> pairs;
  pairs.reserve(edges.size());
  for (const auto& e : edges) pairs.push_back({e.user, e.item});
  return pairs;
}

}  // namespace

AdamState AdamState::zeros_like(std::span<const DenseMatrix* const> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const DenseMatrix* p : params) {
    s.first_moment.emplace_back(p->rows(), p->cols());
    s.second_moment.emplace_back(p->rows(), p->cols());
  }
  return s;
}

AdamState AdamState::zeros_like(const ModelParams& params, AdamConfig config) {
  const auto tensors = const_tensors(params);
  return zeros_like(tensors, config);
}

void adam_step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix* const> grads,
               AdamState& state, std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ContractViolation("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_shape(*grads[k]) || !params[k]->same_shape(state.first_moment[k])) {
      throw ContractViolation("adam_step: shape mismatch in tensor " + std::to_string(k));
    }
    const auto g = grads[k]->values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        const std::string name = k < names.size() ? names[k] : "#" + std::to_string(k);
        throw DivergenceError("non-finite gradient in " + name + " at entry " + std::to_string(i) +
                              " (step " + std::to_string(state.step + 1) + ")");
      }
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->values();
    const auto g = grads[k]->values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      w[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state) {
  std::vector<DenseMatrix*> p;
  std::vector<std::string> names;
  for (auto& [name, t] : params.named()) {
    p.push_back(t);
    names.push_back(name);
  }
  const auto g = const_tensors(grads);
  adam_step(p, g, state, names);
}

void ema_update(EmaParams& ema, const ModelParams& params) {
  auto shadow = ema.shadow.named();
  const auto live = params.named();
  if (shadow.size() != live.size()) throw ContractViolation("ema_update: tensor count mismatch");
  const double d = ema.decay;
  for (std::size_t k = 0; k < shadow.size(); ++k) {
    if (!shadow[k].second->same_shape(*live[k].second)) {
      throw ContractViolation("ema_update: shape mismatch in " + live[k].first);
    }
    auto s = shadow[k].second->values();
    const auto x = live[k].second->values();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = d * s[i] + (1.0 - d) * x[i];
  }
}

std::vector<Minibatch> sample_minibatches(std::span<const LabeledEdge> edges,
                                          std::size_t batch_size, Rng& rng) {
  if (batch_size == 0 || batch_size > edges.size()) {
    throw ConfigError("batch_size must lie in [1, " + std::to_string(edges.size()) + "], got " +
                      std::to_string(batch_size));
  }
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<Minibatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    Minibatch b;
    b.edges.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<NodePair> pairs;
    pairs.reserve(b.edges.size());
    for (std::size_t e : b.edges) pairs.push_back({edges[e].user, edges[e].item});
    b.active = ActiveNodes::from_pairs(pairs);
    batches.push_back(std::move(b));
  }
  return batches;
}

void TrainConfig::validate(std::size_t num_train_edges) const {
  model.validate();
  if (num_train_edges == 0) throw ConfigError("no training edges");
  if (batch_size > num_train_edges) {
    throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds the " +
                      std::to_string(num_train_edges) + " training edges");
  }
  const AdamConfig& a = adam;
  if (!(a.learning_rate > 0.0) || !std::isfinite(a.learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!(a.beta1 >= 0.0 && a.beta1 < 1.0) || !(a.beta2 >= 0.0 && a.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(a.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("ema_decay must lie in [0, 1]");
}

TrainResult train(const GcmcModel& model, const TrainConfig& config,
                  std::span<const LabeledEdge> train_edges, std::span<const LabeledEdge> validation,
                  const EpochCallback& on_epoch) {
  config.validate(train_edges.size());
  if (config.model.num_levels != model.config().num_levels) {
    throw ContractViolation("train: config and model disagree on the level count");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto seconds_since_start = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  Rng rng(config.seed);
  TrainResult result;
  result.params = model.init_params(rng);
  result.report.seed = config.seed;
  EmaParams ema{result.params, config.ema_decay};
  AdamState adam = AdamState::zeros_like(result.params, config.adam);

  const auto level_values = model.level_values();
  const auto all_pairs = pairs_of(train_edges);
  std::vector<std::size_t> all_targets;
  std::vector<double> all_truth;
  for (const auto& e : train_edges) {
    all_targets.push_back(e.level);
    all_truth.push_back(level_values[e.level]);
  }
  const bool full_batch = config.batch_size == 0 || config.batch_size == train_edges.size();
  const ActiveNodes full_active = ActiveNodes::from_pairs(all_pairs);

  double best_val = std::numeric_limits<double>::infinity();
  ModelParams last_good = result.params;
  EmaParams last_good_ema = ema;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    double squared_error = 0.0;
    try {
      std::vector<Minibatch> batches;
      if (!full_batch) batches = sample_minibatches(train_edges, config.batch_size, rng);
      const std::size_t steps = full_batch ? 1 : batches.size();
      for (std::size_t step = 0; step < steps; ++step) {
        std::vector<NodePair> pairs;
        std::vector<std::size_t> targets;
        const ActiveNodes* active = &full_active;
        if (full_batch) {
          pairs = all_pairs;
          targets = all_targets;
        } else {
          for (std::size_t e : batches[step].edges) {
            pairs.push_back(all_pairs[e]);
            targets.push_back(all_targets[e]);
          }
          active = &batches[step].active;
        }
        const DropoutState dropout = model.sample_dropout(*active, rng);
        const ForwardTrace trace = model.forward(result.params, pairs, &dropout);
        const double loss = nll_loss(trace.probabilities, targets);
        if (!std::isfinite(loss)) {
          throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
        }
        record.train_loss += loss;
        const auto expected = expected_ratings(trace.probabilities, level_values);
        for (std::size_t e = 0; e < expected.size(); ++e) {
          const double d = expected[e] - level_values[targets[e]];
          squared_error += d * d;
        }
        const ModelParams grads = model.backward(trace, result.params, targets);
        adam_step(result.params, grads, adam);
        if (config.use_ema) ema_update(ema, result.params);
      }
      if (!result.params.all_finite()) {
        throw DivergenceError("non-finite parameters after epoch " + std::to_string(epoch));
      }
    } catch (const DivergenceError& e) {
      result.params = std::move(last_good);
      ema = std::move(last_good_ema);
      result.divergence = e.what();
      break;
    }
    record.train_rmse = std::sqrt(squared_error / static_cast<double>(train_edges.size()));

    const ModelParams& eval_params = config.use_ema ? ema.shadow : result.params;
    const bool cadence = config.eval_every > 0 && epoch % config.eval_every == 0;
    if (!validation.empty() && (cadence || epoch == config.epochs)) {
      const double v = score_rmse(model, eval_params, validation);
      record.val_rmse = v;
      if (v < best_val) {
        best_val = v;
        result.best_val_params = eval_params;
        result.report.best_val_epoch = epoch;
      }
    }
    record.elapsed_seconds = seconds_since_start();
    result.report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    last_good = result.params;
    last_good_ema = ema;
  }

  result.eval_params = config.use_ema ? ema.shadow : result.params;
  if (!validation.empty()) {
    result.report.val_rmse = score_rmse(model, result.eval_params, validation);
    if (!result.best_val_params) result.best_val_params = result.eval_params;
  }
  result.report.wall_clock_seconds = seconds_since_start();
  return result;
}

}  // namespace gcmc
