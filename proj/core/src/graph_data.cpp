#include "gcmc/graph_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_set>

#include "gcmc/error.hpp"
#include "gcmc/rng.hpp"

namespace gcmc {
namespace {

constexpr std::size_t kGenreCount = 19;

constexpr std::array<std::string_view, 21> kOccupations = {
    "administrator", "artist",    "doctor",  "educator",   "engineer",   "entertainment",
    "executive",     "healthcare", "homemaker", "lawyer",   "librarian",  "marketing",
    "none",          "other",     "programmer", "retired",  "salesman",   "scientist",
    "student",       "technician", "writer"};

std::uint64_t pair_key(std::size_t user, std::size_t item) {
  return (static_cast<std::uint64_t>(user) << 32) | static_cast<std::uint64_t>(item);
}

std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return value;
}

// Reads all lines; a single trailing newline is fine, anything else that
// leaves an empty line is reported by the caller as malformed.
std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  return lines;
}

struct RawRating {
  std::int64_t user;
  std::int64_t item;
  std::size_t level;
  std::size_t line;
};

std::vector<RawRating> parse_ratings(const std::filesystem::path& path, DatasetFormat format,
                                     std::span<const double> levels) {
  const std::string_view sep = format == DatasetFormat::kMl100k ? "\t" : "::";
  std::vector<RawRating> out;
  const auto lines = read_lines(path);
  out.reserve(lines.size());
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t lineno = n + 1;
    const auto fields = split(lines[n], sep);
    if (fields.size() != 4) {
      throw ParseError(path.string(), lineno,
                       "expected 4 fields separated by '" +
                           std::string(sep == "\t" ? "\\t" : sep) + "', got " +
                           std::to_string(fields.size()));
    }
    const auto user = parse_number<std::int64_t>(fields[0]);
    const auto item = parse_number<std::int64_t>(fields[1]);
    const auto value = parse_number<double>(fields[2]);
    const auto stamp = parse_number<std::int64_t>(fields[3]);
    if (!user || !item || !value || !stamp) {
      throw ParseError(path.string(), lineno, "non-numeric field");
    }
    const auto it = std::find(levels.begin(), levels.end(), *value);
    if (it == levels.end()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": rating " +
                      std::string(fields[2]) + " outside the declared levels for " +
                      std::string(to_string(format)));
    }
    out.push_back({*user, *item, static_cast<std::size_t>(it - levels.begin()), lineno});
  }
  return out;
}

std::map<std::int64_t, UserMeta> parse_users(const std::filesystem::path& path) {
  std::map<std::int64_t, UserMeta> out;
  const auto lines = read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto fields = split(lines[n], "|");
    if (fields.size() != 5) {
      throw ParseError(path.string(), n + 1, "expected 5 '|'-separated fields");
    }
    const auto id = parse_number<std::int64_t>(fields[0]);
    const auto age = parse_number<int>(fields[1]);
    if (!id || !age) throw ParseError(path.string(), n + 1, "non-numeric id or age");
    out[*id] = UserMeta{*age, std::string(fields[2]), std::string(fields[3])};
  }
  return out;
}

std::map<std::int64_t, ItemMeta> parse_items(const std::filesystem::path& path) {
  std::map<std::int64_t, ItemMeta> out;
  const auto lines = read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto fields = split(lines[n], "|");
    if (fields.size() != 5 + kGenreCount) {
      throw ParseError(path.string(), n + 1,
                       "expected " + std::to_string(5 + kGenreCount) + " '|'-separated fields");
    }
    const auto id = parse_number<std::int64_t>(fields[0]);
    if (!id) throw ParseError(path.string(), n + 1, "non-numeric item id");
    ItemMeta meta;
    meta.genres.reserve(kGenreCount);
    for (std::size_t g = 0; g < kGenreCount; ++g) {
      const auto flag = fields[5 + g];
      if (flag != "0" && flag != "1") {
        throw ParseError(path.string(), n + 1, "genre flag must be 0 or 1");
      }
      meta.genres.push_back(flag == "1" ? 1 : 0);
    }
    out[*id] = std::move(meta);
  }
  return out;
}

std::vector<std::int64_t> sorted_unique(std::vector<std::int64_t> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::size_t dense_index(std::span<const std::int64_t> ids, std::int64_t id) {
  return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
}

// Assembles a dataset from one or more parsed rating files. Returns, per file,
// the triple indices that came from it.
std::vector<std::vector<std::size_t>> assemble(
    RatingDataset& ds, const std::vector<std::pair<std::filesystem::path, std::vector<RawRating>>>& files,
    const std::optional<std::filesystem::path>& users,
    const std::optional<std::filesystem::path>& items) {
  std::vector<std::int64_t> uids;
  std::vector<std::int64_t> iids;
  for (const auto& [path, raw] : files) {
    for (const auto& r : raw) {
      uids.push_back(r.user);
      iids.push_back(r.item);
    }
  }
  ds.user_ids = sorted_unique(std::move(uids));
  ds.item_ids = sorted_unique(std::move(iids));
  ds.num_users = ds.user_ids.size();
  ds.num_items = ds.item_ids.size();

  std::vector<std::vector<std::size_t>> origin;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& [path, raw] : files) {
    auto& idx = origin.emplace_back();
    idx.reserve(raw.size());
    for (const auto& r : raw) {
      const auto u = dense_index(ds.user_ids, r.user);
      const auto i = dense_index(ds.item_ids, r.item);
      if (!seen.insert(pair_key(u, i)).second) {
        throw DataError(path.string() + ":" + std::to_string(r.line) + ": duplicate rating for user " +
                        std::to_string(r.user) + ", item " + std::to_string(r.item));
      }
      idx.push_back(ds.triples.size());
      ds.triples.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(i),
                            static_cast<std::uint32_t>(r.level)});
    }
  }

  if (users) {
    const auto meta = parse_users(*users);
    std::vector<UserMeta> dense(ds.num_users);
    for (std::size_t u = 0; u < ds.num_users; ++u) {
      const auto it = meta.find(ds.user_ids[u]);
      if (it == meta.end()) {
        throw DataError(users->string() + ": no metadata for user " + std::to_string(ds.user_ids[u]));
      }
      dense[u] = it->second;
    }
    ds.user_meta = std::move(dense);
  }
  if (items) {
    const auto meta = parse_items(*items);
    std::vector<ItemMeta> dense(ds.num_items);
    for (std::size_t i = 0; i < ds.num_items; ++i) {
      const auto it = meta.find(ds.item_ids[i]);
      if (it == meta.end()) {
        throw DataError(items->string() + ": no metadata for item " + std::to_string(ds.item_ids[i]));
      }
      dense[i] = it->second;
    }
    ds.item_meta = std::move(dense);
  }
  return origin;
}

void require_metadata_support(DatasetFormat format,
                              const std::optional<std::filesystem::path>& users,
                              const std::optional<std::filesystem::path>& items) {
  if ((users || items) && format != DatasetFormat::kMl100k) {
    throw ConfigError("user/item metadata files are only supported for the ml100k format");
  }
}

}  // namespace

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "ml100k") return DatasetFormat::kMl100k;
  if (name == "ml1m") return DatasetFormat::kMl1m;
  if (name == "ml10m") return DatasetFormat::kMl10m;
  throw ConfigError("unknown dataset format '" + std::string(name) +
                    "' (expected ml100k, ml1m or ml10m)");
}

std::string_view to_string(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::kMl100k: return "ml100k";
    case DatasetFormat::kMl1m: return "ml1m";
    case DatasetFormat::kMl10m: return "ml10m";
  }
  return "?";
}

std::vector<double> level_values_for(DatasetFormat format) {
  if (format == DatasetFormat::kMl10m) {
    std::vector<double> v;
    for (int k = 1; k <= 10; ++k) v.push_back(0.5 * k);
    return v;
  }
  return {1.0, 2.0, 3.0, 4.0, 5.0};
}

void RatingDataset::validate() const {
  for (std::size_t k = 1; k < level_values.size(); ++k) {
    if (!(level_values[k] > level_values[k - 1])) {
      throw DataError("level values must be strictly increasing");
    }
  }
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(triples.size());
  for (const auto& t : triples) {
    if (t.user >= num_users || t.item >= num_items || t.level >= level_values.size()) {
      throw DataError("rating triple index out of range");
    }
    if (!seen.insert(pair_key(t.user, t.item)).second) {
      throw DataError("duplicate (user, item) pair in dataset");
    }
  }
}

RatingDataset load_movielens(const std::filesystem::path& ratings,
                             const std::optional<std::filesystem::path>& users,
                             const std::optional<std::filesystem::path>& items,
                             DatasetFormat format) {
  require_metadata_support(format, users, items);
  RatingDataset ds;
  ds.level_values = level_values_for(format);
  std::vector<std::pair<std::filesystem::path, std::vector<RawRating>>> files;
  files.emplace_back(ratings, parse_ratings(ratings, format, ds.level_values));
  assemble(ds, files, users, items);
  return ds;
}

LoadedSplit load_movielens_split(const std::filesystem::path& train_ratings,
                                 const std::filesystem::path& test_ratings,
                                 const std::optional<std::filesystem::path>& users,
                                 const std::optional<std::filesystem::path>& items,
                                 DatasetFormat format) {
  require_metadata_support(format, users, items);
  LoadedSplit out;
  out.dataset.level_values = level_values_for(format);
  std::vector<std::pair<std::filesystem::path, std::vector<RawRating>>> files;
  files.emplace_back(train_ratings, parse_ratings(train_ratings, format, out.dataset.level_values));
  files.emplace_back(test_ratings, parse_ratings(test_ratings, format, out.dataset.level_values));
  auto origin = assemble(out.dataset, files, users, items);
  out.train = std::move(origin[0]);
  out.test = std::move(origin[1]);
  return out;
}

RatingGraph::RatingGraph(std::size_t num_users, std::size_t num_items,
                         std::vector<SparseMatrix> adjacency, std::vector<LabeledEdge> edges)
    : num_users_(num_users),
      num_items_(num_items),
      adjacency_(std::move(adjacency)),
      user_degrees_(num_users, 0),
      item_degrees_(num_items, 0),
      edges_(std::move(edges)) {
  for (const auto& m : adjacency_) {
    if (m.rows() != num_users_ || m.cols() != num_items_) {
      throw ContractViolation("RatingGraph: adjacency shape does not match node counts");
    }
    for (std::size_t u = 0; u < num_users_; ++u) {
      user_degrees_[u] += m.row_nnz(u);
      for (std::size_t i : m.row_cols(u)) ++item_degrees_[i];
    }
  }
}

std::optional<std::size_t> RatingGraph::level_of(std::size_t user, std::size_t item) const {
  if (user >= num_users_ || item >= num_items_) return std::nullopt;
  for (std::size_t r = 0; r < adjacency_.size(); ++r) {
    const auto cols = adjacency_[r].row_cols(user);
    if (std::binary_search(cols.begin(), cols.end(), item)) return r;
  }
  return std::nullopt;
}

RatingGraph build_rating_graph(const RatingDataset& ds, std::span<const std::size_t> include) {
  const std::size_t levels = ds.num_levels();
  std::vector<std::vector<Triplet>> per_level(levels);
  std::vector<LabeledEdge> edges;
  edges.reserve(include.size());
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(include.size());
  for (std::size_t idx : include) {
    if (idx >= ds.triples.size()) throw ContractViolation("build_rating_graph: triple index out of range");
    const Rating& t = ds.triples[idx];
    if (t.user >= ds.num_users || t.item >= ds.num_items || t.level >= levels) {
      throw ContractViolation("build_rating_graph: triple refers to unknown node or level");
    }
    if (!seen.insert(pair_key(t.user, t.item)).second) {
      throw DataError("build_rating_graph: duplicate (user, item) pair (" + std::to_string(t.user) +
                      ", " + std::to_string(t.item) + ")");
    }
    per_level[t.level].push_back({t.user, t.item, 1.0});
    edges.push_back({t.user, t.item, t.level});
  }
  std::vector<SparseMatrix> adjacency;
  adjacency.reserve(levels);
  for (auto& triplets : per_level) {
    adjacency.push_back(SparseMatrix::from_triplets(ds.num_users, ds.num_items, std::move(triplets)));
  }
  return RatingGraph(ds.num_users, ds.num_items, std::move(adjacency), std::move(edges));
}

FeatureSet FeatureSet::identity(std::size_t num_users, std::size_t num_items) {
  FeatureSet f;
  f.kind_ = Kind::kIdentityOneHot;
  f.num_users_ = num_users;
  f.num_items_ = num_items;
  return f;
}

FeatureSet FeatureSet::side_info(DenseMatrix users, DenseMatrix items) {
  if (!users.all_finite() || !items.all_finite()) {
    throw DataError("side features must be finite");
  }
  FeatureSet f;
  f.kind_ = Kind::kSideInfo;
  f.num_users_ = users.rows();
  f.num_items_ = items.rows();
  f.users_ = std::move(users);
  f.items_ = std::move(items);
  return f;
}

std::size_t FeatureSet::count(Side side) const {
  return side == Side::kUser ? num_users_ : num_items_;
}

std::size_t FeatureSet::dim(Side side) const {
  if (kind_ == Kind::kIdentityOneHot) return count(side);
  return side == Side::kUser ? users_.cols() : items_.cols();
}

DenseMatrix FeatureSet::dense(Side side) const {
  if (kind_ == Kind::kIdentityOneHot) return DenseMatrix::identity(count(side));
  return side == Side::kUser ? users_ : items_;
}

DenseMatrix FeatureSet::project(Side side, const DenseMatrix& weight, std::size_t offset) const {
  const std::size_t d = dim(side);
  if (offset + d > weight.rows()) throw ContractViolation("FeatureSet::project: weight too small");
  if (kind_ == Kind::kIdentityOneHot) {
    DenseMatrix out(d, weight.cols());
    for (std::size_t n = 0; n < d; ++n) {
      auto src = weight.row(offset + n);
      std::copy(src.begin(), src.end(), out.row(n).begin());
    }
    return out;
  }
  const DenseMatrix& x = side == Side::kUser ? users_ : items_;
  DenseMatrix out(x.rows(), weight.cols());
  for (std::size_t n = 0; n < x.rows(); ++n) {
    auto dst = out.row(n);
    for (std::size_t k = 0; k < d; ++k) {
      const double v = x(n, k);
      if (v == 0.0) continue;
      auto src = weight.row(offset + k);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += v * src[c];
    }
  }
  return out;
}

void FeatureSet::project_adjoint(Side side, const DenseMatrix& upstream, DenseMatrix& grad,
                                 std::size_t offset) const {
  const std::size_t d = dim(side);
  if (offset + d > grad.rows() || upstream.rows() != count(side) || upstream.cols() != grad.cols()) {
    throw ContractViolation("FeatureSet::project_adjoint: shape mismatch");
  }
  if (kind_ == Kind::kIdentityOneHot) {
    for (std::size_t n = 0; n < d; ++n) {
      auto src = upstream.row(n);
      auto dst = grad.row(offset + n);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    return;
  }
  const DenseMatrix& x = side == Side::kUser ? users_ : items_;
  for (std::size_t n = 0; n < x.rows(); ++n) {
    auto src = upstream.row(n);
    for (std::size_t k = 0; k < d; ++k) {
      const double v = x(n, k);
      if (v == 0.0) continue;
      auto dst = grad.row(offset + k);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += v * src[c];
    }
  }
}

FeatureSet identity_features(const RatingDataset& ds) {
  return FeatureSet::identity(ds.num_users, ds.num_items);
}

std::span<const std::string_view> ml100k_occupations() { return kOccupations; }

FeatureSet build_side_features(const RatingDataset& ds) {
  if (!ds.user_meta || !ds.item_meta) {
    throw ConfigError("side features need both user and item metadata (u.user and u.item)");
  }
  const std::size_t user_dim = 1 + 2 + kOccupations.size();
  DenseMatrix users(ds.num_users, user_dim);
  for (std::size_t u = 0; u < ds.num_users; ++u) {
    const UserMeta& m = (*ds.user_meta)[u];
    users(u, 0) = m.age / 100.0;
    if (m.gender == "M") {
      users(u, 1) = 1.0;
    } else if (m.gender == "F") {
      users(u, 2) = 1.0;
    } else {
      throw DataError("unknown gender '" + m.gender + "' for user " + std::to_string(ds.user_ids[u]));
    }
    const auto it = std::find(kOccupations.begin(), kOccupations.end(), m.occupation);
    if (it == kOccupations.end()) {
      throw DataError("unknown occupation '" + m.occupation + "' for user " +
                      std::to_string(ds.user_ids[u]));
    }
    users(u, 3 + static_cast<std::size_t>(it - kOccupations.begin())) = 1.0;
  }
  DenseMatrix items(ds.num_items, kGenreCount);
  for (std::size_t i = 0; i < ds.num_items; ++i) {
    const auto& genres = (*ds.item_meta)[i].genres;
    if (genres.size() != kGenreCount) throw DataError("item metadata must carry 19 genre flags");
    for (std::size_t g = 0; g < kGenreCount; ++g) items(i, g) = genres[g];
  }
  return FeatureSet::side_info(std::move(users), std::move(items));
}

SplitSpec split_train_val(std::span<const std::size_t> train_indices, double fraction,
                          std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
  std::vector<std::size_t> shuffled(train_indices.begin(), train_indices.end());
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(shuffled));
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(shuffled.size())));
  SplitSpec out;
  out.seed = seed;
  out.train.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(keep));
  out.validation.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(keep), shuffled.end());
  return out;
}

std::vector<std::size_t> coldstart_filter(const RatingDataset& ds,
                                          std::span<const std::size_t> train_indices,
                                          std::size_t num_users, std::size_t keep_ratings,
                                          std::uint64_t seed) {
  if (keep_ratings < 1) throw ConfigError("cold-start users must keep at least one rating");
  if (num_users == 0) return {train_indices.begin(), train_indices.end()};

  std::vector<std::vector<std::size_t>> by_user(ds.num_users);
  for (std::size_t pos = 0; pos < train_indices.size(); ++pos) {
    by_user.at(ds.triples.at(train_indices[pos]).user).push_back(pos);
  }
  std::vector<std::size_t> candidates;
  for (std::size_t u = 0; u < ds.num_users; ++u) {
    if (!by_user[u].empty()) candidates.push_back(u);
  }
  if (num_users > candidates.size()) {
    throw ConfigError("cannot select " + std::to_string(num_users) + " cold-start users out of " +
                      std::to_string(candidates.size()) + " users with training ratings");
  }

  Rng rng(seed);
  // Partial Fisher-Yates: the first num_users slots become the selection.
  for (std::size_t k = 0; k < num_users; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(candidates.size() - k));
    std::swap(candidates[k], candidates[j]);
  }
  std::vector<std::size_t> chosen(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(num_users));
  std::sort(chosen.begin(), chosen.end());

  std::vector<bool> drop(train_indices.size(), false);
  for (std::size_t u : chosen) {
    auto& positions = by_user[u];
    if (positions.size() <= keep_ratings) continue;
    rng.shuffle(std::span<std::size_t>(positions));
    for (std::size_t k = keep_ratings; k < positions.size(); ++k) drop[positions[k]] = true;
  }
  std::vector<std::size_t> out;
  out.reserve(train_indices.size());
  for (std::size_t pos = 0; pos < train_indices.size(); ++pos) {
    if (!drop[pos]) out.push_back(train_indices[pos]);
  }
  return out;
}

}  // namespace gcmc
