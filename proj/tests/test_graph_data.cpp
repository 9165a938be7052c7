#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "gcmc/error.hpp"
#include "gcmc/graph_data.hpp"
#include "support.hpp"

namespace gcmc {
namespace {

using testing::all_indices;
using testing::random_dataset;
using testing::TempDir;

std::string item_line(int id, std::initializer_list<int> genres) {
  std::string line = std::to_string(id) + "|Movie " + std::to_string(id) + "|01-Jan-1995||http://x";
  for (int g = 0; g < 19; ++g) {
    line += std::find(genres.begin(), genres.end(), g) != genres.end() ? "|1" : "|0";
  }
  return line + "\n";
}

TEST(LoadMovielens, Ml100kLineBecomesDenseTriple) {
  TempDir dir;
  const auto ratings = dir.write("u.data", "1\t1\t5\t874965758\n");
  const RatingDataset ds = load_movielens(ratings, std::nullopt, std::nullopt, DatasetFormat::kMl100k);
  ASSERT_EQ(ds.triples.size(), 1u);
  EXPECT_EQ(ds.triples[0], (Rating{0, 0, 4}));
  EXPECT_EQ(ds.num_levels(), 5u);
  EXPECT_EQ(ds.value_of(ds.triples[0]), 5.0);
}

TEST(LoadMovielens, IdsAreDensifiedInIdOrder) {
  TempDir dir;
  const auto ratings = dir.write("u.data", "30\t7\t1\t0\n10\t9\t2\t0\n30\t9\t3\t0\n");
  const RatingDataset ds = load_movielens(ratings, std::nullopt, std::nullopt, DatasetFormat::kMl100k);
  EXPECT_EQ(ds.num_users, 2u);
  EXPECT_EQ(ds.num_items, 2u);
  EXPECT_EQ(ds.user_ids, (std::vector<std::int64_t>{10, 30}));
  EXPECT_EQ(ds.item_ids, (std::vector<std::int64_t>{7, 9}));
  EXPECT_EQ(ds.triples[0], (Rating{1, 0, 0}));
  EXPECT_EQ(ds.triples[1], (Rating{0, 1, 1}));
}

TEST(LoadMovielens, RatingOutsideTheLevelsIsADataError) {
  TempDir dir;
  const auto ratings = dir.write("u.data", "1\t1\t5\t0\n1\t2\t6\t0\n");
  try {
    load_movielens(ratings, std::nullopt, std::nullopt, DatasetFormat::kMl100k);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(LoadMovielens, MalformedLineReportsItsLineNumber) {
  TempDir dir;
  const auto ratings = dir.write("u.data", "1\t1\t5\t0\n2\t2\t4\t0\n3\t3\n");
  try {
    load_movielens(ratings, std::nullopt, std::nullopt, DatasetFormat::kMl100k);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadMovielens, DuplicatePairIsADataError) {
  TempDir dir;
  const auto ratings = dir.write("u.data", "1\t1\t5\t0\n1\t1\t4\t1\n");
  EXPECT_THROW(load_movielens(ratings, std::nullopt, std::nullopt, DatasetFormat::kMl100k), DataError);
}

TEST(LoadMovielens, MissingFileIsADataErrorNamingThePath) {
  try {
    load_movielens("/nonexistent/u.data", std::nullopt, std::nullopt, DatasetFormat::kMl100k);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/u.data"), std::string::npos);
  }
}

TEST(LoadMovielens, DoubleColonFormatsAndHalfStars) {
  TempDir dir;
  const auto m1 = dir.write("ratings.dat", "1::10::3::978300760\n2::10::5::978300761\n");
  const RatingDataset a = load_movielens(m1, std::nullopt, std::nullopt, DatasetFormat::kMl1m);
  EXPECT_EQ(a.triples.size(), 2u);
  EXPECT_EQ(a.triples[1].level, 4u);
  const auto m10 = dir.write("r10.dat", "1::10::3.5::978300760\n2::10::0.5::978300761\n");
  const RatingDataset b = load_movielens(m10, std::nullopt, std::nullopt, DatasetFormat::kMl10m);
  EXPECT_EQ(b.num_levels(), 10u);
  EXPECT_EQ(b.value_of(b.triples[0]), 3.5);
  EXPECT_EQ(b.triples[1].level, 0u);
  // Tabs are not the ml1m separator.
  const auto bad = dir.write("bad.dat", "1\t10\t3\t0\n");
  EXPECT_THROW(load_movielens(bad, std::nullopt, std::nullopt, DatasetFormat::kMl1m), ParseError);
}

TEST(LoadMovielens, ToleratesTrailingNewlineOnly) {
  TempDir dir;
  const auto ok = dir.write("ok", "1\t1\t5\t0\n");
  EXPECT_NO_THROW(load_movielens(ok, std::nullopt, std::nullopt, DatasetFormat::kMl100k));
  const auto blank = dir.write("blank", "1\t1\t5\t0\n\n2\t2\t3\t0\n");
  EXPECT_THROW(load_movielens(blank, std::nullopt, std::nullopt, DatasetFormat::kMl100k), ParseError);
}

TEST(LoadMovielensSplit, SharesOneIdSpace) {
  TempDir dir;
  const auto train = dir.write("base", "1\t1\t5\t0\n2\t2\t3\t0\n");
  const auto test = dir.write("test", "1\t2\t4\t0\n3\t1\t1\t0\n");
  const LoadedSplit s = load_movielens_split(train, test, std::nullopt, std::nullopt, DatasetFormat::kMl100k);
  EXPECT_EQ(s.dataset.num_users, 3u);
  EXPECT_EQ(s.train, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(s.test, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(s.dataset.triples[2], (Rating{0, 1, 3}));
}

TEST(BuildRatingGraph, EmptyIncludeGivesEmptyGraph) {
  Rng rng(1);
  const RatingDataset ds = random_dataset(4, 3, 5, 0.5, rng);
  const RatingGraph g = build_rating_graph(ds, {});
  for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(g.adjacency(r).nnz(), 0u);
  for (auto d : g.user_degrees()) EXPECT_EQ(d, 0u);
  for (auto d : g.item_degrees()) EXPECT_EQ(d, 0u);
}

TEST(BuildRatingGraph, SingleTriple) {
  RatingDataset ds;
  ds.num_users = 2;
  ds.num_items = 2;
  ds.level_values = {1, 2, 3, 4, 5};
  ds.triples = {{0, 0, 2}};
  const std::vector<std::size_t> include{0};
  const RatingGraph g = build_rating_graph(ds, include);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(g.adjacency(r).nnz(), r == 2 ? 1u : 0u);
  EXPECT_EQ(g.user_degrees()[0], 1u);
  EXPECT_EQ(g.item_degrees()[0], 1u);
  EXPECT_EQ(g.level_of(0, 0), std::optional<std::size_t>(2));
  EXPECT_FALSE(g.level_of(1, 1));
}

TEST(BuildRatingGraph, DuplicateIncludeIsADataError) {
  Rng rng(2);
  const RatingDataset ds = random_dataset(3, 3, 5, 0.5, rng);
  const std::vector<std::size_t> include{0, 0};
  EXPECT_THROW(build_rating_graph(ds, include), DataError);
}

TEST(BuildRatingGraph, RoundTripDegreesAndMaskOnRandomGraphs) {
  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    const RatingDataset ds = random_dataset(1 + rng.below(10), 1 + rng.below(10), 1 + rng.below(5),
                                            rng.uniform(), rng);
    std::vector<std::size_t> include;
    for (std::size_t t = 0; t < ds.triples.size(); ++t) {
      if (rng.bernoulli(0.7)) include.push_back(t);
    }
    const RatingGraph g = build_rating_graph(ds, include);

    std::multiset<std::tuple<std::size_t, std::size_t, std::size_t>> expect, got, from_matrices;
    for (std::size_t t : include) {
      expect.insert({ds.triples[t].user, ds.triples[t].item, ds.triples[t].level});
    }
    for (const auto& e : g.edges()) got.insert({e.user, e.item, e.level});
    std::vector<std::size_t> ud(ds.num_users, 0), vd(ds.num_items, 0);
    std::size_t nnz = 0;
    for (std::size_t r = 0; r < ds.num_levels(); ++r) {
      const SparseMatrix& m = g.adjacency(r);
      nnz += m.nnz();
      for (std::size_t u = 0; u < m.rows(); ++u) {
        const auto cols = m.row_cols(u);
        const auto vals = m.row_values(u);
        for (std::size_t q = 0; q < cols.size(); ++q) {
          ASSERT_EQ(vals[q], 1.0);
          from_matrices.insert({u, cols[q], r});
          ++ud[u];
          ++vd[cols[q]];
        }
      }
    }
    ASSERT_EQ(got, expect);
    ASSERT_EQ(from_matrices, expect);
    ASSERT_EQ(nnz, include.size());
    ASSERT_TRUE(std::equal(ud.begin(), ud.end(), g.user_degrees().begin()));
    ASSERT_TRUE(std::equal(vd.begin(), vd.end(), g.item_degrees().begin()));
  }
}

TEST(IdentityFeatures, IsTheIdentity) {
  Rng rng(4);
  const RatingDataset ds = random_dataset(3, 4, 5, 0.5, rng);
  const FeatureSet f = identity_features(ds);
  EXPECT_EQ(f.kind(), FeatureSet::Kind::kIdentityOneHot);
  EXPECT_EQ(f.dense(Side::kUser), DenseMatrix::identity(3));
  EXPECT_EQ(f.dense(Side::kItem), DenseMatrix::identity(4));
}

TEST(IdentityFeatures, AdjacencyTimesIdentityReproducesTheAdjacency) {
  Rng rng(5);
  const RatingDataset ds = random_dataset(6, 7, 3, 0.4, rng);
  const RatingGraph g = testing::full_graph(ds);
  const FeatureSet f = identity_features(ds);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(spmm(g.adjacency(r), f.dense(Side::kItem)), g.adjacency(r).densify());
  }
}

TEST(FeatureSet, ProjectAndAdjointMatchDenseProducts) {
  Rng rng(6);
  const RatingDataset ds = random_dataset(4, 5, 2, 0.5, rng);
  const FeatureSet id = identity_features(ds);
  const FeatureSet side = testing::random_side_features(ds, 3, 2, rng);
  for (const FeatureSet* f : {&id, &side}) {
    const std::size_t offset = 2;
    const std::size_t dim = f->dim(Side::kItem);
    const DenseMatrix w = testing::random_dense(offset + dim + 1, 3, rng);
    std::vector<std::size_t> slice_rows;
    for (std::size_t k = 0; k < dim; ++k) slice_rows.push_back(offset + k);
    const DenseMatrix slice = gather_rows(w, slice_rows);
    const DenseMatrix x = f->dense(Side::kItem);
    EXPECT_LE(max_abs_diff(f->project(Side::kItem, w, offset), matmul(x, slice)), 1e-12);

    const DenseMatrix up = testing::random_dense(f->count(Side::kItem), 3, rng);
    DenseMatrix grad(w.rows(), w.cols());
    f->project_adjoint(Side::kItem, up, grad, offset);
    EXPECT_LE(max_abs_diff(gather_rows(grad, slice_rows), matmul_tn(x, up)), 1e-12);
    // Rows outside the slice are untouched.
    for (double v : grad.row(0)) EXPECT_EQ(v, 0.0);
    for (double v : grad.row(offset + dim)) EXPECT_EQ(v, 0.0);
  }
}

class SideFeaturesTest : public ::testing::Test {
 protected:
  TempDir dir;
  RatingDataset load(const std::string& users, const std::string& items) {
    const auto ratings = dir.write("u.data", "1\t1\t5\t0\n2\t2\t3\t0\n");
    return load_movielens(ratings, dir.write("u.user", users), dir.write("u.item", items),
                          DatasetFormat::kMl100k);
  }
};

TEST_F(SideFeaturesTest, UserAndItemEncoding) {
  const RatingDataset ds = load("1|24|M|technician|85711\n2|53|F|other|94043\n",
                                item_line(1, {1, 5}) + item_line(2, {}));
  const FeatureSet f = build_side_features(ds);
  EXPECT_EQ(f.kind(), FeatureSet::Kind::kSideInfo);
  const DenseMatrix u = f.dense(Side::kUser);
  ASSERT_EQ(u.cols(), 24u);
  EXPECT_DOUBLE_EQ(u(0, 0), 0.24);
  EXPECT_EQ(u(0, 1) + u(0, 2), 1.0);
  EXPECT_EQ(u(0, 1), 1.0);  // M first
  EXPECT_EQ(u(1, 2), 1.0);  // F second
  double occupation_ones = 0.0;
  for (std::size_t c = 3; c < 24; ++c) occupation_ones += u(0, c);
  EXPECT_EQ(occupation_ones, 1.0);
  const auto occ = ml100k_occupations();
  const auto tech = std::find(occ.begin(), occ.end(), "technician") - occ.begin();
  EXPECT_EQ(u(0, 3 + static_cast<std::size_t>(tech)), 1.0);

  const DenseMatrix v = f.dense(Side::kItem);
  ASSERT_EQ(v.cols(), 19u);
  double genre_ones = 0.0;
  for (double x : v.row(0)) genre_ones += x;
  EXPECT_EQ(genre_ones, 2.0);
  EXPECT_EQ(v(0, 1), 1.0);
  EXPECT_EQ(v(0, 5), 1.0);
}

TEST_F(SideFeaturesTest, MissingMetadataIsAConfigError) {
  Rng rng(1);
  EXPECT_THROW(build_side_features(random_dataset(2, 2, 5, 0.5, rng)), ConfigError);
}

TEST_F(SideFeaturesTest, UnknownOccupationIsADataError) {
  const RatingDataset ds = load("1|24|M|astronaut|85711\n2|53|F|other|94043\n",
                                item_line(1, {1}) + item_line(2, {}));
  EXPECT_THROW(build_side_features(ds), DataError);
}

TEST(SplitTrainVal, EightyTwenty) {
  const auto input = all_indices(100);
  const SplitSpec s = split_train_val(input, 0.8, 7);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.validation.size(), 20u);
  const SplitSpec again = split_train_val(input, 0.8, 7);
  EXPECT_EQ(s.train, again.train);
  EXPECT_EQ(s.validation, again.validation);
}

TEST(SplitTrainVal, DisjointUnionOnRandomInputs) {
  Rng rng(8);
  for (int k = 0; k < 100; ++k) {
    std::vector<std::size_t> input;
    for (std::size_t i = 0; i < 1 + rng.below(200); ++i) {
      if (rng.bernoulli(0.6)) input.push_back(i * 3);
    }
    if (input.empty()) input.push_back(5);
    const SplitSpec s = split_train_val(input, rng.uniform(0.05, 0.95), rng.next_u64());
    std::vector<std::size_t> merged = s.train;
    merged.insert(merged.end(), s.validation.begin(), s.validation.end());
    std::sort(merged.begin(), merged.end());
    ASSERT_EQ(merged, input);
  }
}

TEST(SplitTrainVal, FractionOutOfRangeIsAConfigError) {
  const auto input = all_indices(10);
  EXPECT_THROW(split_train_val(input, 0.0, 1), ConfigError);
  EXPECT_THROW(split_train_val(input, 1.0, 1), ConfigError);
}

std::map<std::size_t, std::size_t> ratings_per_user(const RatingDataset& ds, const std::vector<std::size_t>& idx) {
  std::map<std::size_t, std::size_t> m;
  for (std::size_t k : idx) ++m[ds.triples[k].user];
  return m;
}

TEST(ColdstartFilter, ZeroUsersLeavesTrainUnchanged) {
  Rng rng(9);
  const RatingDataset ds = random_dataset(20, 20, 5, 0.3, rng);
  const auto train = all_indices(ds.triples.size());
  EXPECT_EQ(coldstart_filter(ds, train, 0, 1, 3), train);
}

TEST(ColdstartFilter, SelectedUsersKeepExactlyNrAndOthersAreUntouched) {
  Rng rng(10);
  const RatingDataset ds = random_dataset(40, 30, 5, 0.4, rng);
  const auto train = all_indices(ds.triples.size());
  const auto before = ratings_per_user(ds, train);
  const auto filtered = coldstart_filter(ds, train, 10, 2, 4);
  EXPECT_TRUE(std::is_sorted(filtered.begin(), filtered.end()));
  const auto after = ratings_per_user(ds, filtered);
  std::size_t changed = 0;
  for (const auto& [user, n] : before) {
    const std::size_t now = after.count(user) ? after.at(user) : 0;
    if (now != n) {
      ++changed;
      EXPECT_EQ(now, 2u);
    }
  }
  EXPECT_EQ(changed, 10u);
  EXPECT_EQ(coldstart_filter(ds, train, 10, 2, 4), filtered);
  EXPECT_NE(coldstart_filter(ds, train, 10, 2, 5), filtered);
}

TEST(ColdstartFilter, UsersWithFewRatingsKeepAll) {
  RatingDataset ds;
  ds.num_users = 2;
  ds.num_items = 3;
  ds.level_values = {1, 2};
  ds.triples = {{0, 0, 0}, {1, 0, 1}, {1, 1, 0}, {1, 2, 1}};
  const auto train = all_indices(4);
  const auto out = coldstart_filter(ds, train, 2, 2, 1);
  const auto per_user = ratings_per_user(ds, out);
  EXPECT_EQ(per_user.at(0), 1u);
  EXPECT_EQ(per_user.at(1), 2u);
}

TEST(ColdstartFilter, BadArgumentsAreConfigErrors) {
  Rng rng(11);
  const RatingDataset ds = random_dataset(5, 5, 5, 0.5, rng);
  const auto train = all_indices(ds.triples.size());
  EXPECT_THROW(coldstart_filter(ds, train, 6, 1, 1), ConfigError);
  EXPECT_THROW(coldstart_filter(ds, train, 2, 0, 1), ConfigError);
}

TEST(Ml100k, TableOneCountsAndFeatureShapes) {
  if (!testing::have_ml100k()) GTEST_SKIP() << "ML-100K not found under " << testing::data_root();
  const auto dir = testing::data_root() / "ml-100k";
  const LoadedSplit s = load_movielens_split(dir / "u1.base", dir / "u1.test", dir / "u.user",
                                             dir / "u.item", DatasetFormat::kMl100k);
  EXPECT_EQ(s.dataset.num_users, 943u);
  EXPECT_EQ(s.dataset.num_items, 1682u);
  EXPECT_EQ(s.dataset.triples.size(), 100000u);
  EXPECT_EQ(s.dataset.num_levels(), 5u);
  EXPECT_EQ(s.train.size(), 80000u);
  EXPECT_EQ(s.test.size(), 20000u);

  const RatingGraph g = build_rating_graph(s.dataset, s.train);
  std::size_t nnz = 0;
  for (std::size_t r = 0; r < 5; ++r) nnz += g.adjacency(r).nnz();
  EXPECT_EQ(nnz, 80000u);

  const FeatureSet f = build_side_features(s.dataset);
  EXPECT_EQ(f.dense(Side::kUser).rows(), 943u);
  EXPECT_EQ(f.dense(Side::kUser).cols(), 24u);
  EXPECT_EQ(f.dense(Side::kItem).rows(), 1682u);
  EXPECT_EQ(f.dense(Side::kItem).cols(), 19u);
}

TEST(Ml100k, ColdstartFiftyUsersOneRating) {
  if (!testing::have_ml100k()) GTEST_SKIP() << "ML-100K not found under " << testing::data_root();
  const auto dir = testing::data_root() / "ml-100k";
  const LoadedSplit s = load_movielens_split(dir / "u1.base", dir / "u1.test", std::nullopt,
                                             std::nullopt, DatasetFormat::kMl100k);
  const auto filtered = coldstart_filter(s.dataset, s.train, 50, 1, 1234);
  std::size_t single = 0;
  for (const auto& [user, n] : ratings_per_user(s.dataset, filtered)) single += n == 1;
  // No user in u1.base has a single rating, so every single-rating user was selected.
  std::size_t single_before = 0;
  for (const auto& [user, n] : ratings_per_user(s.dataset, s.train)) single_before += n == 1;
  EXPECT_EQ(single_before, 0u);
  EXPECT_EQ(single, 50u);
}

}  // namespace
}  // namespace gcmc
