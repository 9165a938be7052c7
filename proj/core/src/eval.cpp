#include "gcmc/eval.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_set>

#include "gcmc/error.hpp"

namespace gcmc {
namespace {

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t pair_key(std::size_t user, std::size_t item) {
  return (static_cast<std::uint64_t>(user) << 32) ^ static_cast<std::uint64_t>(item);
}

}  // namespace

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.empty()) throw ContractViolation("rmse: empty input");
  if (predicted.size() != truth.size()) throw ContractViolation("rmse: length mismatch");
  double sum = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const double d = predicted[k] - truth[k];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(predicted.size()));
}

std::vector<double> predict_ratings(const GcmcModel& model, const ModelParams& params,
                                    std::span<const LabeledEdge> edges) {
  std::vector<NodePair> pairs;
  pairs.reserve(edges.size());
  for (const auto& e : edges) pairs.push_back({e.user, e.item});
  const ForwardTrace t = model.forward(params, pairs, nullptr);
  return expected_ratings(t.probabilities, model.level_values());
}

double score_rmse(const GcmcModel& model, const ModelParams& params,
                  std::span<const LabeledEdge> edges) {
  const auto predicted = predict_ratings(model, params, edges);
  std::vector<double> truth;
  truth.reserve(edges.size());
  for (const auto& e : edges) truth.push_back(model.level_values()[e.level]);
  return rmse(predicted, truth);
}

void require_disjoint(const RatingGraph& graph, std::span<const LabeledEdge> held_out) {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(graph.num_edges());
  for (const auto& e : graph.edges()) seen.insert(pair_key(e.user, e.item));
  for (const auto& e : held_out) {
    if (seen.contains(pair_key(e.user, e.item))) {
      throw ContractViolation("evaluate: held-out pair (" + std::to_string(e.user) + ", " +
                              std::to_string(e.item) + ") is a training edge");
    }
  }
}

double evaluate(const GcmcModel& model, const ModelParams& params,
                std::span<const LabeledEdge> held_out) {
  require_disjoint(model.graph(), held_out);
  return score_rmse(model, params, held_out);
}

std::vector<LabeledEdge> edges_of(const RatingDataset& ds, std::span<const std::size_t> indices) {
  std::vector<LabeledEdge> out;
  out.reserve(indices.size());
  for (std::size_t k : indices) {
    if (k >= ds.triples.size()) throw ContractViolation("edges_of: rating index out of range");
    const Rating& r = ds.triples[k];
    out.push_back({r.user, r.item, r.level});
  }
  return out;
}

GcmcModel build_model(const RatingDataset& ds, std::span<const std::size_t> train,
                      const ModelConfig& config) {
  if (config.num_levels != ds.num_levels()) {
    throw ConfigError("model has " + std::to_string(config.num_levels) + " rating levels, data has " +
                      std::to_string(ds.num_levels()));
  }
  std::optional<FeatureSet> side;
  if (config.encoder.side_info) side = build_side_features(ds);
  return GcmcModel(config, build_rating_graph(ds, train), identity_features(ds), std::move(side),
                   ds.level_values);
}

ExperimentOutcome run_experiment(const RatingDataset& ds, const SplitSpec& split,
                                 const TrainConfig& config, const EpochCallback& on_epoch) {
  const GcmcModel model = build_model(ds, split.train, config.model);
  const auto train_edges = edges_of(ds, split.train);
  const auto val_edges = edges_of(ds, split.validation);
  const auto test_edges = edges_of(ds, split.test);
  require_disjoint(model.graph(), val_edges);
  require_disjoint(model.graph(), test_edges);

  ExperimentOutcome out;
  out.training = train(model, config, train_edges, val_edges, on_epoch);
  if (!test_edges.empty()) {
    out.test_rmse = score_rmse(model, out.training.eval_params, test_edges);
    out.training.report.test_rmse = out.test_rmse;
    if (out.training.best_val_params) {
      out.best_val_test_rmse = score_rmse(model, *out.training.best_val_params, test_edges);
      out.training.report.best_val_test_rmse = out.best_val_test_rmse;
    }
  }
  return out;
}

double ColdStartCell::mean() const {
  if (test_rmse.empty()) return 0.0;
  double s = 0.0;
  for (double v : test_rmse) s += v;
  return s / static_cast<double>(test_rmse.size());
}

double ColdStartCell::standard_error() const {
  const std::size_t n = test_rmse.size();
  if (n < 2) return 0.0;
  const double m = mean();
  double ss = 0.0;
  for (double v : test_rmse) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

ColdStartReport coldstart_experiment(const RatingDataset& ds, const SplitSpec& split,
                                     const TrainConfig& base, const ColdStartGrid& grid,
                                     std::size_t jobs, const ColdStartLookup& lookup) {
  if (grid.num_users.empty() || grid.keep_ratings.empty() || grid.features.empty() ||
      grid.seeds.empty()) {
    throw ConfigError("cold-start grid has an empty axis");
  }
  // One run per distinct (n_c, n_r, features, seed); n_r is irrelevant at n_c = 0.
  using RunKey = std::tuple<std::size_t, std::size_t, bool, std::uint64_t>;
  std::map<RunKey, double> results;
  std::vector<RunKey> pending;
  ColdStartReport report;
  for (std::size_t n_c : grid.num_users) {
    for (std::size_t n_r : grid.keep_ratings) {
      for (bool features : grid.features) {
        report.cells.push_back({n_c, n_r, features, {}});
        for (std::uint64_t seed : grid.seeds) {
          const RunKey key{n_c, n_c == 0 ? 0 : n_r, features, seed};
          if (results.contains(key)) continue;
          results[key] = std::numeric_limits<double>::quiet_NaN();
          std::optional<double> known;
          if (lookup) known = lookup(n_c, n_r, features, seed);
          if (known) {
            results[key] = *known;
          } else {
            pending.push_back(key);
          }
        }
      }
    }
  }

  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> filtered;
  for (const auto& [n_c, n_r, features, seed] : pending) {
    auto& train = filtered[{n_c, n_r}];
    if (train.empty()) {
      train = n_c == 0 ? split.train
                       : coldstart_filter(ds, split.train, n_c, n_r, grid.surgery_seed);
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  const auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= pending.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      const auto& [n_c, n_r, features, seed] = pending[k];
      try {
        TrainConfig cfg = base;
        cfg.model.encoder.side_info = features;
        cfg.seed = seed;
        SplitSpec cell{filtered.at({n_c, n_r}), {}, split.test, split.seed};
        const ExperimentOutcome o = run_experiment(ds, cell, cfg);
        if (o.training.divergence) throw DivergenceError(*o.training.divergence);
        std::lock_guard lock(mu);
        results[pending[k]] = o.test_rmse;
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, pending.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& cell : report.cells) {
    for (std::uint64_t seed : grid.seeds) {
      cell.test_rmse.push_back(
          results.at({cell.num_users, cell.num_users == 0 ? 0 : cell.keep_ratings, cell.features, seed}));
    }
  }
  return report;
}

void write_metrics_csv(const MetricsReport& report, std::ostream& out, bool include_elapsed) {
  out << "epoch,train_loss,train_rmse,val_rmse,elapsed_seconds\n";
  for (const auto& r : report.epochs) {
    out << r.epoch << ',' << shortest(r.train_loss) << ',' << shortest(r.train_rmse) << ',';
    if (r.val_rmse) out << shortest(*r.val_rmse);
    out << ',';
    if (include_elapsed) out << shortest(r.elapsed_seconds);
    out << '\n';
  }
}

void write_coldstart_csv(const ColdStartReport& report, std::ostream& out) {
  out << "n_c,n_r,features,mean_rmse,stderr,runs\n";
  for (const auto& c : report.cells) {
    out << c.num_users << ',' << c.keep_ratings << ',' << (c.features ? "on" : "off") << ','
        << shortest(c.mean()) << ',' << shortest(c.standard_error()) << ',' << c.test_rmse.size()
        << '\n';
  }
}

}  // namespace gcmc
