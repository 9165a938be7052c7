#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcmc/tensor.hpp"

namespace gcmc {

enum class DatasetFormat { kMl100k, kMl1m, kMl10m };

DatasetFormat parse_dataset_format(std::string_view name);
std::string_view to_string(DatasetFormat format);

/// Rating values for a format: 1..5 for ml100k/ml1m, 0.5..5 in half steps for ml10m.
std::vector<double> level_values_for(DatasetFormat format);

/// One observed rating, stored as dense 0-based indices. `level` indexes
/// RatingDataset::level_values.
struct Rating {
  std::uint32_t user;
  std::uint32_t item;
  std::uint32_t level;

  friend bool operator==(const Rating&, const Rating&) = default;
};

struct UserMeta {
  int age = 0;
  std::string gender;
  std::string occupation;
};

struct ItemMeta {
  std::vector<std::uint8_t> genres;  // 19 flags in u.item column order
};

struct RatingDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Rating> triples;
  std::vector<double> level_values;
  /// Original (file) ids, indexed by dense index.
  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;
  std::optional<std::vector<UserMeta>> user_meta;
  std::optional<std::vector<ItemMeta>> item_meta;

  std::size_t num_levels() const { return level_values.size(); }
  double value_of(const Rating& r) const { return level_values[r.level]; }

  /// Checks index ranges, level ordering and pair uniqueness. Throws DataError.
  void validate() const;
};

/// Reads a MovieLens ratings file (plus optional ml100k u.user / u.item).
/// Ids are densified in increasing id order. Throws ParseError for malformed
/// lines, DataError for unknown rating values or duplicate pairs.
RatingDataset load_movielens(const std::filesystem::path& ratings,
                             const std::optional<std::filesystem::path>& users,
                             const std::optional<std::filesystem::path>& items,
                             DatasetFormat format);

struct LoadedSplit {
  RatingDataset dataset;
  std::vector<std::size_t> train;  // indices into dataset.triples
  std::vector<std::size_t> test;
};

/// Loads a predefined train/test pair (e.g. u1.base / u1.test) into one
/// dataset so both files share the same dense id space.
LoadedSplit load_movielens_split(const std::filesystem::path& train_ratings,
                                 const std::filesystem::path& test_ratings,
                                 const std::optional<std::filesystem::path>& users,
                                 const std::optional<std::filesystem::path>& items,
                                 DatasetFormat format);

struct LabeledEdge {
  std::size_t user;
  std::size_t item;
  std::size_t level;

  friend bool operator==(const LabeledEdge&, const LabeledEdge&) = default;
};

/// A (user, item) position in the rating matrix, by dense index.
struct NodePair {
  std::size_t user;
  std::size_t item;

  friend bool operator==(const NodePair&, const NodePair&) = default;
};

/// Bipartite rating graph: one 0/1 adjacency matrix per rating level plus
/// total (all-level) node degrees and the labeled edge list.
class RatingGraph {
 public:
  RatingGraph(std::size_t num_users, std::size_t num_items,
              std::vector<SparseMatrix> adjacency, std::vector<LabeledEdge> edges);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_levels() const { return adjacency_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  /// N_u x N_v matrix with a 1 for each observed rating at `level`.
  const SparseMatrix& adjacency(std::size_t level) const { return adjacency_[level]; }
  std::span<const std::size_t> user_degrees() const { return user_degrees_; }
  std::span<const std::size_t> item_degrees() const { return item_degrees_; }
  std::span<const LabeledEdge> edges() const { return edges_; }

  /// Level of the observed rating for (user, item), if any.
  std::optional<std::size_t> level_of(std::size_t user, std::size_t item) const;

 private:
  std::size_t num_users_;
  std::size_t num_items_;
  std::vector<SparseMatrix> adjacency_;
  std::vector<std::size_t> user_degrees_;
  std::vector<std::size_t> item_degrees_;
  std::vector<LabeledEdge> edges_;
};

/// Throws DataError if `include` names the same (user, item) pair twice.
RatingGraph build_rating_graph(const RatingDataset& ds, std::span<const std::size_t> include);

enum class Side { kUser, kItem };

/// Per-node input features for users and items. The identity kind is kept
/// implicit so one-hot inputs never materialize an N x N matrix.
class FeatureSet {
 public:
  enum class Kind { kIdentityOneHot, kSideInfo };

  static FeatureSet identity(std::size_t num_users, std::size_t num_items);
  static FeatureSet side_info(DenseMatrix users, DenseMatrix items);

  Kind kind() const { return kind_; }
  std::size_t count(Side side) const;
  std::size_t dim(Side side) const;

  /// Explicit feature matrix; builds the identity for the one-hot kind.
  DenseMatrix dense(Side side) const;

  /// X_side * weight[offset : offset + dim(side), :]
  DenseMatrix project(Side side, const DenseMatrix& weight, std::size_t offset) const;
  /// grad[offset : offset + dim(side), :] += X_side^T * upstream
  void project_adjoint(Side side, const DenseMatrix& upstream, DenseMatrix& grad,
                       std::size_t offset) const;

 private:
  Kind kind_ = Kind::kIdentityOneHot;
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  DenseMatrix users_;
  DenseMatrix items_;
};

FeatureSet identity_features(const RatingDataset& ds);

/// ML-100K side-feature encoding, version "ml100k-v1":
///   user (24): [age / 100] ++ gender one-hot [M, F] ++ occupation one-hot over
///              the 21 u.occupation entries in alphabetical order
///   item (19): genre multi-hot in u.item column order
/// Throws ConfigError when metadata is missing, DataError for unknown values.
FeatureSet build_side_features(const RatingDataset& ds);

inline constexpr std::string_view kSideFeatureEncoding = "ml100k-v1";
std::span<const std::string_view> ml100k_occupations();

struct SplitSpec {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

/// Shuffles `train_indices` with `seed` and keeps round(fraction * n) for
/// training, the rest for validation. Throws ConfigError unless 0 < fraction < 1.
SplitSpec split_train_val(std::span<const std::size_t> train_indices, double fraction,
                          std::uint64_t seed);

/// Cold-start surgery: picks `num_users` users (uniformly, among users that
/// have training ratings) and keeps only `keep_ratings` randomly chosen
/// training ratings for each. Users with fewer ratings than `keep_ratings`
/// keep all of theirs. Surviving indices retain their input order.
std::vector<std::size_t> coldstart_filter(const RatingDataset& ds,
                                          std::span<const std::size_t> train_indices,
                                          std::size_t num_users, std::size_t keep_ratings,
                                          std::uint64_t seed);

}  // namespace gcmc
