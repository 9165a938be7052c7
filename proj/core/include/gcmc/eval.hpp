#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "gcmc/graph_data.hpp"
#include "gcmc/model.hpp"
#include "gcmc/training.hpp"

namespace gcmc {

/// sqrt(mean((predicted - truth)^2)). Throws ContractViolation on empty or
/// unequal inputs.
double rmse(std::span<const double> predicted, std::span<const double> truth);

/// Expected ratings for the given edges, no dropout, messages over the
/// model's training graph.
std::vector<double> predict_ratings(const GcmcModel& model, const ModelParams& params,
                                    std::span<const LabeledEdge> edges);

/// RMSE of predict_ratings against the edges' rating values.
double score_rmse(const GcmcModel& model, const ModelParams& params,
                  std::span<const LabeledEdge> edges);

/// Throws ContractViolation if any held-out (user, item) pair is an edge of `graph`.
void require_disjoint(const RatingGraph& graph, std::span<const LabeledEdge> held_out);

/// score_rmse for held-out edges. Throws ContractViolation if any edge's
/// (user, item) pair is also an edge of the model's training graph.
double evaluate(const GcmcModel& model, const ModelParams& params,
                std::span<const LabeledEdge> held_out);

std::vector<LabeledEdge> edges_of(const RatingDataset& ds, std::span<const std::size_t> indices);

/// Graph over `train` indices, identity input features, and ML-100K side
/// features when config.encoder.side_info is set.
GcmcModel build_model(const RatingDataset& ds, std::span<const std::size_t> train,
                      const ModelConfig& config);

struct ExperimentOutcome {
  TrainResult training;
  double test_rmse = 0.0;                    // eval parameters after the last epoch
  std::optional<double> best_val_test_rmse;  // best-validation snapshot
};

/// Builds the model, trains, and evaluates on `split.test`. The outcome's
/// report has its test fields filled in.
ExperimentOutcome run_experiment(const RatingDataset& ds, const SplitSpec& split,
                                 const TrainConfig& config, const EpochCallback& on_epoch = {});

struct ColdStartGrid {
  std::vector<std::size_t> num_users{0, 50, 100, 150};
  std::vector<std::size_t> keep_ratings{1, 5, 10};
  std::vector<bool> features{false, true};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::uint64_t surgery_seed = 1234;
};

struct ColdStartCell {
  std::size_t num_users = 0;
  std::size_t keep_ratings = 0;
  bool features = false;
  std::vector<double> test_rmse;  // one per seed, in grid seed order

  double mean() const;
  /// Sample standard deviation over sqrt(runs); 0 for a single run.
  double standard_error() const;
};

struct ColdStartReport {
  std::vector<ColdStartCell> cells;  // num_users-major, then keep_ratings, then features
};

/// Optional source of already known run results, keyed by cell and seed.
using ColdStartLookup =
    std::function<std::optional<double>(std::size_t num_users, std::size_t keep_ratings,
                                        bool features, std::uint64_t seed)>;

/// For every cell: cold-start surgery on split.train (shared surgery seed),
/// one training run per seed, test RMSE on split.test. Cells with
/// num_users = 0 do not depend on keep_ratings and are trained once.
/// Runs are spread over `jobs` threads; the report does not depend on it.
ColdStartReport coldstart_experiment(const RatingDataset& ds, const SplitSpec& split,
                                     const TrainConfig& base, const ColdStartGrid& grid,
                                     std::size_t jobs = 1, const ColdStartLookup& lookup = {});

/// `epoch,train_loss,train_rmse,val_rmse,elapsed_seconds`. With
/// include_elapsed false the last column is left empty, which makes the file
/// a pure function of config, seed and data.
void write_metrics_csv(const MetricsReport& report, std::ostream& out, bool include_elapsed);

/// `n_c,n_r,features,mean_rmse,stderr,runs`
void write_coldstart_csv(const ColdStartReport& report, std::ostream& out);

}  // namespace gcmc
