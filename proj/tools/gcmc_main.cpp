// gcmc: train, evaluate, predict and cold-start sweeps from the command line.
//
//   gcmc train|evaluate|predict|coldstart [--config <file>] [--out <dir>] [--key value ...]
//
// Exit codes: 0 ok, 1 internal error, 2 bad configuration, 3 bad data,
// 4 training diverged, 5 unreadable checkpoint.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gcmc/checkpoint.hpp"
#include "gcmc/config.hpp"
#include "gcmc/error.hpp"
#include "gcmc/eval.hpp"

namespace fs = std::filesystem;
using namespace gcmc;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kDiverged = 4, kCheckpoint = 5 };

struct Options {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string pairs;
  std::size_t jobs = 1;
  bool quiet = false;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const Options& opt, RunConfig base = {}) {
  if (!opt.config.empty()) base.apply_file(opt.config);
  const auto& ov = opt.overrides;
  for (std::size_t k = 0; k < ov.size(); ++k) {
    std::string key = ov[k];
    if (key.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + key + "'");
    key = key.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (k + 1 >= ov.size()) throw ConfigError("missing value for --" + key);
      value = ov[++k];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    base.set(key, value);
  }
  if (!opt.out.empty()) base.out_dir = opt.out;
  return base;
}

fs::path ensure_out_dir(const RunConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

int cmd_train(const Options& opt) {
  const RunConfig cfg = resolve_config(opt);
  PreparedData data = prepare_data(cfg);
  const TrainConfig tc = cfg.train_config(data.dataset.num_levels());
  tc.validate(data.split.train.size());
  const fs::path dir = ensure_out_dir(cfg);
  const std::string fp = cfg.fingerprint();
  if (!opt.quiet) {
    std::cerr << "gcmc train: " << data.split.train.size() << " train / " << data.split.validation.size()
              << " validation / " << data.split.test.size() << " test ratings, fingerprint " << fp << "\n";
  }

  const auto progress = [&](const EpochRecord& r) {
    if (opt.quiet || !r.val_rmse) return;
    std::fprintf(stderr, "epoch %zu  loss %.4f  train_rmse %.4f  val_rmse %.4f  (%.1fs)\n", r.epoch,
                 r.train_loss, r.train_rmse, *r.val_rmse, r.elapsed_seconds);
  };
  ExperimentOutcome outcome = run_experiment(data.dataset, data.split, tc, progress);
  MetricsReport& report = outcome.training.report;
  report.fingerprint = fp;

  {
    auto out = open_output(dir / "metrics.csv");
    write_metrics_csv(report, out, cfg.record_elapsed);
  }
  const GcmcModel model = build_model(data.dataset, data.split.train, tc.model);
  save_checkpoint(make_checkpoint(cfg, data.dataset, model, outcome.training.eval_params),
                  dir / "model.ckpt");
  if (outcome.training.best_val_params) {
    save_checkpoint(make_checkpoint(cfg, data.dataset, model, *outcome.training.best_val_params),
                    dir / "model_best_val.ckpt");
  }
  {
    auto out = open_output(dir / "summary.txt");
    out << "fingerprint = " << fp << "\n";
    out << "seed = " << report.seed << "\n";
    out << "data_seed = " << cfg.data_seed << "\n";
    out << "epochs_completed = " << report.epochs.size() << "\n";
    if (!data.split.test.empty()) out << "test_rmse = " << number(outcome.test_rmse) << "\n";
    if (report.val_rmse) out << "val_rmse = " << number(*report.val_rmse) << "\n";
    if (report.best_val_epoch) out << "best_val_epoch = " << *report.best_val_epoch << "\n";
    if (outcome.best_val_test_rmse) out << "best_val_test_rmse = " << number(*outcome.best_val_test_rmse) << "\n";
    if (cfg.record_elapsed) out << "wall_clock_seconds = " << number(report.wall_clock_seconds) << "\n";
    if (outcome.training.divergence) out << "diverged = " << *outcome.training.divergence << "\n";
  }
  if (outcome.training.divergence) {
    std::cerr << "gcmc train: training diverged: " << *outcome.training.divergence
              << "\n  last finite parameters written to " << (dir / "model.ckpt").string() << "\n";
    return kDiverged;
  }
  if (!data.split.test.empty()) std::cout << "test_rmse " << number(outcome.test_rmse) << "\n";
  if (outcome.best_val_test_rmse) {
    std::cout << "best_val_test_rmse " << number(*outcome.best_val_test_rmse) << "\n";
  }
  return kOk;
}

std::map<std::int64_t, std::size_t> index_of(const std::vector<std::int64_t>& ids) {
  std::map<std::int64_t, std::size_t> m;
  for (std::size_t k = 0; k < ids.size(); ++k) m[ids[k]] = k;
  return m;
}

int cmd_evaluate(const Options& opt) {
  if (opt.checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint");
  RestoredModel restored = restore_model(load_checkpoint(opt.checkpoint));
  const RunConfig cfg = resolve_config(opt, restored.config);
  PreparedData data = prepare_data(cfg);
  const auto users = index_of(restored.user_ids);
  const auto items = index_of(restored.item_ids);
  const auto levels = restored.model.level_values();
  if (data.dataset.num_levels() != levels.size()) {
    throw ConfigError("dataset and checkpoint disagree on the rating levels");
  }

  std::vector<LabeledEdge> held_out;
  std::size_t skipped = 0;
  for (const LabeledEdge& e : edges_of(data.dataset, data.split.test)) {
    const auto u = users.find(data.dataset.user_ids[e.user]);
    const auto i = items.find(data.dataset.item_ids[e.item]);
    if (u == users.end() || i == items.end()) {
      ++skipped;
      continue;
    }
    held_out.push_back({u->second, i->second, e.level});
  }
  if (held_out.empty()) throw DataError("no test rating has a user and item known to the checkpoint");
  const double value = evaluate(restored.model, restored.params, held_out);

  const fs::path dir = ensure_out_dir(cfg);
  auto out = open_output(dir / "evaluation.txt");
  out << "fingerprint = " << restored.config.fingerprint() << "\n";
  out << "test_ratings = " << held_out.size() << "\n";
  out << "skipped_unknown_ids = " << skipped << "\n";
  out << "test_rmse = " << number(value) << "\n";
  if (skipped) std::cerr << "gcmc evaluate: skipped " << skipped << " ratings with unknown ids\n";
  std::cout << "test_rmse " << number(value) << "\n";
  return kOk;
}

int cmd_predict(const Options& opt) {
  if (opt.checkpoint.empty()) throw ConfigError("predict needs --checkpoint");
  if (opt.pairs.empty()) throw ConfigError("predict needs --pairs");
  const RestoredModel restored = restore_model(load_checkpoint(opt.checkpoint));
  RunConfig cfg = restored.config;
  cfg.out_dir = opt.out.empty() ? "out" : opt.out;

  std::ifstream in(opt.pairs);
  if (!in) throw DataError("cannot read pairs file " + opt.pairs);
  struct Row {
    std::string user, item;
    std::optional<NodePair> pair;
    std::string error;
  };
  const auto users = index_of(restored.user_ids);
  const auto items = index_of(restored.item_ids);
  std::vector<Row> rows;
  std::string line;
  std::size_t number_of_line = 0;
  while (std::getline(in, line)) {
    ++number_of_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(line);
    Row row;
    std::string extra;
    if (!(fields >> row.user >> row.item) || (fields >> extra)) {
      throw ParseError(opt.pairs, number_of_line, "expected 'user<TAB>item'");
    }
    try {
      const auto u = users.find(std::stoll(row.user));
      const auto i = items.find(std::stoll(row.item));
      if (u == users.end()) {
        row.error = "unknown user id";
      } else if (i == items.end()) {
        row.error = "unknown item id";
      } else {
        row.pair = NodePair{u->second, i->second};
      }
    } catch (const std::logic_error&) {
      row.error = "non-numeric id";
    }
    rows.push_back(std::move(row));
  }

  std::vector<NodePair> pairs;
  for (const auto& r : rows) {
    if (r.pair) pairs.push_back(*r.pair);
  }
  std::vector<EdgePrediction> predictions;
  if (!pairs.empty()) predictions = restored.model.predict(restored.params, pairs);

  const std::size_t levels = restored.model.level_values().size();
  const fs::path dir = ensure_out_dir(cfg);
  auto out = open_output(dir / "predictions.csv");
  out << "user,item,expected_rating";
  for (std::size_t r = 1; r <= levels; ++r) out << ",p_" << r;
  out << "\n";
  std::size_t next = 0;
  std::size_t errors = 0;
  for (const auto& r : rows) {
    out << r.user << ',' << r.item << ',';
    if (!r.pair) {
      ++errors;
      out << "error: " << r.error;
      for (std::size_t k = 0; k < levels; ++k) out << ',';
    } else {
      const EdgePrediction& p = predictions[next++];
      out << number(p.expected_rating);
      for (double q : p.probabilities) out << ',' << number(q);
    }
    out << "\n";
  }
  if (errors) std::cerr << "gcmc predict: warning: " << errors << " pair(s) with unknown ids\n";
  std::cerr << "gcmc predict: wrote " << rows.size() << " rows to " << (dir / "predictions.csv").string()
            << " (checkpoint fingerprint " << restored.config.fingerprint() << ")\n";
  return kOk;
}

int cmd_coldstart(const Options& opt) {
  const RunConfig cfg = resolve_config(opt);
  PreparedData data = prepare_data(cfg);
  const TrainConfig tc = cfg.train_config(data.dataset.num_levels());
  tc.validate(data.split.train.size());
  if (opt.jobs == 0) throw ConfigError("--jobs must be at least 1");
  const fs::path dir = ensure_out_dir(cfg);
  ColdStartGrid grid = cfg.coldstart;
  grid.surgery_seed = cfg.data_seed;
  const ColdStartReport report = coldstart_experiment(data.dataset, data.split, tc, grid, opt.jobs);
  {
    auto out = open_output(dir / "coldstart.csv");
    write_coldstart_csv(report, out);
  }
  auto out = open_output(dir / "coldstart_summary.txt");
  out << "fingerprint = " << cfg.fingerprint() << "\n";
  out << "cells = " << report.cells.size() << "\n";
  write_coldstart_csv(report, std::cout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph convolutional matrix completion"};
  app.require_subcommand(1);
  Options opt;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "key = value config file");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_flag("--quiet", opt.quiet, "no progress output");
    sub->allow_extras();
    return sub;
  };
  auto* train_cmd = add_common(app.add_subcommand("train", "train a model and evaluate it on the test split"));
  auto* eval_cmd = add_common(app.add_subcommand("evaluate", "test RMSE of a checkpoint"));
  eval_cmd->add_option("--checkpoint", opt.checkpoint, "checkpoint file");
  auto* predict_cmd = add_common(app.add_subcommand("predict", "rating predictions for user/item pairs"));
  predict_cmd->add_option("--checkpoint", opt.checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--pairs", opt.pairs, "file with one 'user<TAB>item' per line")->required();
  auto* cold_cmd = add_common(app.add_subcommand("coldstart", "cold-start sweep"));
  cold_cmd->add_option("--jobs", opt.jobs, "parallel training runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) opt.overrides = sub->remaining();
    if (train_cmd->parsed()) return cmd_train(opt);
    if (eval_cmd->parsed()) return cmd_evaluate(opt);
    if (predict_cmd->parsed()) return cmd_predict(opt);
    if (cold_cmd->parsed()) return cmd_coldstart(opt);
  } catch (const ConfigError& e) {
    std::cerr << "gcmc: configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "gcmc: data error: " << e.what() << "\n";
    return kData;
  } catch (const DivergenceError& e) {
    std::cerr << "gcmc: training diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const CheckpointError& e) {
    std::cerr << "gcmc: checkpoint error: " << e.what() << "\n";
    return kCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "gcmc: error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
