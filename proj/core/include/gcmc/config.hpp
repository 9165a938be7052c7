#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gcmc/eval.hpp"
#include "gcmc/graph_data.hpp"
#include "gcmc/training.hpp"

namespace gcmc {

/// Everything a run needs, resolved from `key = value` lines. Defaults are
/// the feature-free ML-100K recipe.
struct RunConfig {
  // data
  DatasetFormat format = DatasetFormat::kMl100k;
  std::string data_dir;  // empty: $GCMC_DATA_DIR, else ./data
  std::string ratings_file;
  std::string train_file = "ml-100k/u1.base";
  std::string test_file = "ml-100k/u1.test";
  std::string users_file = "ml-100k/u.user";
  std::string items_file = "ml-100k/u.item";
  double test_fraction = 0.1;        // used only without test_file
  double validation_fraction = 0.0;  // carved out of the training ratings
  std::uint64_t data_seed = 1234;

  // model + optimization
  EncoderConfig encoder;
  std::optional<std::size_t> num_basis;  // nullopt: max(1, 2R/5)
  std::size_t epochs = 1000;
  std::size_t batch_size = 0;
  AdamConfig adam;
  double ema_decay = 0.995;
  bool use_ema = true;
  std::size_t eval_every = 10;
  std::uint64_t seed = 1;

  // outputs
  std::string out_dir = "out";
  bool record_elapsed = true;

  // cold-start sweep
  ColdStartGrid coldstart;

  /// Sets one key. Throws ConfigError for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  /// Applies a `key = value` file (blank lines and `#` comments allowed).
  /// Throws ConfigError naming path:line.
  void apply_file(const std::filesystem::path& path);
  static RunConfig from_file(const std::filesystem::path& path);

  /// Every key with its canonical value, sorted by key.
  std::vector<std::pair<std::string, std::string>> resolved() const;
  /// FNV-1a 64 over the resolved lines, excluding output-only keys; 16 hex digits.
  std::string fingerprint() const;

  /// Cross-field validation for `num_levels` rating levels. Throws ConfigError.
  void validate(std::size_t num_levels) const;
  TrainConfig train_config(std::size_t num_levels) const;

  /// Relative data paths are taken relative to data_dir, then
  /// $GCMC_DATA_DIR, then ./data.
  std::filesystem::path data_path(const std::string& file) const;
};

/// Keys that do not change results and are left out of the fingerprint.
bool is_output_only_key(std::string_view key);

struct PreparedData {
  RatingDataset dataset;
  SplitSpec split;
};

/// Loads the configured files and builds train / validation / test index sets.
/// With test_file set, train_file and test_file are the split; otherwise
/// ratings_file is split with test_fraction. validation_fraction > 0 moves
/// that share of the training ratings into validation. Both shuffles use
/// data_seed.
PreparedData prepare_data(const RunConfig& config);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace gcmc
