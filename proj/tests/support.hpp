#pragma once

// Random instance generators shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "gcmc/graph_data.hpp"
#include "gcmc/model.hpp"
#include "gcmc/rng.hpp"
#include "gcmc/tensor.hpp"

namespace gcmc::testing {

inline DenseMatrix random_dense(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                                double hi = 1.0) {
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

inline SparseMatrix random_sparse(std::size_t rows, std::size_t cols, double density, Rng& rng) {
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (rng.bernoulli(density)) t.push_back({r, c, rng.uniform(-2.0, 2.0)});
    }
  }
  return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

/// Each (user, item) pair is rated with probability `density` at a uniform
/// level. Every user and item gets at least one rating.
inline RatingDataset random_dataset(std::size_t num_users, std::size_t num_items,
                                    std::size_t num_levels, double density, Rng& rng) {
  RatingDataset ds;
  ds.num_users = num_users;
  ds.num_items = num_items;
  for (std::size_t l = 0; l < num_levels; ++l) ds.level_values.push_back(static_cast<double>(l + 1));
  std::set<std::pair<std::size_t, std::size_t>> used;
  const auto add = [&](std::size_t u, std::size_t i) {
    if (!used.insert({u, i}).second) return;
    ds.triples.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i),
                          static_cast<std::uint32_t>(rng.below(num_levels))});
  };
  for (std::size_t u = 0; u < num_users; ++u) {
    for (std::size_t i = 0; i < num_items; ++i) {
      if (rng.bernoulli(density)) add(u, i);
    }
  }
  for (std::size_t u = 0; u < num_users; ++u) add(u, rng.below(num_items));
  for (std::size_t i = 0; i < num_items; ++i) add(rng.below(num_users), i);
  for (std::size_t u = 0; u < num_users; ++u) ds.user_ids.push_back(static_cast<std::int64_t>(u + 1));
  for (std::size_t i = 0; i < num_items; ++i) ds.item_ids.push_back(static_cast<std::int64_t>(i + 1));
  return ds;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

inline RatingGraph full_graph(const RatingDataset& ds) {
  return build_rating_graph(ds, all_indices(ds.triples.size()));
}

inline std::vector<LabeledEdge> labeled_edges(const RatingDataset& ds) {
  std::vector<LabeledEdge> out;
  for (const auto& r : ds.triples) out.push_back({r.user, r.item, r.level});
  return out;
}

inline FeatureSet random_side_features(const RatingDataset& ds, std::size_t user_dim,
                                       std::size_t item_dim, Rng& rng) {
  return FeatureSet::side_info(random_dense(ds.num_users, user_dim, rng, 0.0, 1.0),
                               random_dense(ds.num_items, item_dim, rng, 0.0, 1.0));
}

/// Small configuration whose stacked hidden layer splits evenly over the levels.
inline ModelConfig small_config(std::size_t num_levels, std::size_t num_basis) {
  ModelConfig c;
  c.num_levels = num_levels;
  c.num_basis = num_basis;
  c.encoder.hidden_dim = 2 * num_levels;
  c.encoder.embed_dim = 3;
  c.encoder.side_hidden_dim = 2;
  c.encoder.node_dropout = 0.0;
  c.encoder.unit_dropout = 0.0;
  return c;
}

inline GcmcModel make_model(const RatingDataset& ds, const ModelConfig& cfg,
                            std::optional<FeatureSet> side = std::nullopt) {
  return GcmcModel(cfg, full_graph(ds), identity_features(ds), std::move(side), ds.level_values);
}

/// Directory holding ml-100k/: $GCMC_DATA_DIR, else the source tree's data/.
inline std::filesystem::path data_root() {
  if (const char* env = std::getenv("GCMC_DATA_DIR"); env && *env) return env;
  return GCMC_SOURCE_DATA_DIR;
}

inline bool have_ml100k() {
  return std::filesystem::exists(data_root() / "ml-100k" / "u1.base") &&
         std::filesystem::exists(data_root() / "ml-100k" / "u.user");
}

/// Fresh scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("gcmc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path write(const std::string& name, const std::string& contents) const {
    const auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << contents;
    return p;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace gcmc::testing
