// Kernel and end-to-end timings on synthetic data shaped like ML-100K
// (943 users, 1682 items, 80000 ratings over 5 levels).

#include <benchmark/benchmark.h>

#include <set>

#include "gcmc/model.hpp"
#include "gcmc/training.hpp"

namespace {

using namespace gcmc;

constexpr std::size_t kUsers = 943;
constexpr std::size_t kItems = 1682;
constexpr std::size_t kRatings = 80000;

DenseMatrix random_dense(std::size_t rows, std::size_t cols, Rng& rng) {
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

const RatingDataset& synthetic() {
  static const RatingDataset ds = [] {
    Rng rng(7);
    RatingDataset d;
    d.num_users = kUsers;
    d.num_items = kItems;
    d.level_values = {1, 2, 3, 4, 5};
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    while (d.triples.size() < kRatings) {
      const auto u = static_cast<std::uint32_t>(rng.below(kUsers));
      const auto i = static_cast<std::uint32_t>(rng.below(kItems));
      if (seen.insert({u, i}).second) d.triples.push_back({u, i, static_cast<std::uint32_t>(rng.below(5))});
    }
    return d;
  }();
  return ds;
}

std::vector<std::size_t> all_ratings() {
  std::vector<std::size_t> v(kRatings);
  for (std::size_t k = 0; k < kRatings; ++k) v[k] = k;
  return v;
}

void BM_Spmm(benchmark::State& state) {
  const RatingGraph g = build_rating_graph(synthetic(), all_ratings());
  Rng rng(1);
  const DenseMatrix b = random_dense(kItems, static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(spmm(g.adjacency(3), b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.adjacency(3).nnz()) * state.range(0));
}
BENCHMARK(BM_Spmm)->Arg(100)->Arg(500);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const DenseMatrix a = random_dense(n, 500, rng);
  const DenseMatrix b = random_dense(500, 75, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 500 * 75));
}
BENCHMARK(BM_Matmul)->Arg(943)->Arg(1682);

void BM_RowSoftmax(benchmark::State& state) {
  Rng rng(3);
  const DenseMatrix logits = random_dense(kRatings, 5, rng);
  for (auto _ : state) benchmark::DoNotOptimize(row_softmax(logits));
}
BENCHMARK(BM_RowSoftmax);

struct Fixture {
  GcmcModel model;
  ModelParams params;
  std::vector<NodePair> pairs;
  std::vector<std::size_t> targets;
};

Fixture make_fixture() {
  const RatingDataset& ds = synthetic();
  ModelConfig cfg;
  GcmcModel model(cfg, build_rating_graph(ds, all_ratings()), identity_features(ds), std::nullopt, ds.level_values);
  Rng rng(4);
  ModelParams params = model.init_params(rng);
  Fixture f{std::move(model), std::move(params), {}, {}};
  for (const auto& r : ds.triples) {
    f.pairs.push_back({r.user, r.item});
    f.targets.push_back(r.level);
  }
  return f;
}

void BM_Forward(benchmark::State& state) {
  const Fixture f = make_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(f.model.forward(f.params, f.pairs, nullptr));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_ForwardBackwardWithDropout(benchmark::State& state) {
  const Fixture f = make_fixture();
  Rng rng(5);
  const ActiveNodes active = ActiveNodes::from_pairs(f.pairs);
  for (auto _ : state) {
    const DropoutState d = f.model.sample_dropout(active, rng);
    const ForwardTrace trace = f.model.forward(f.params, f.pairs, &d);
    benchmark::DoNotOptimize(f.model.backward(trace, f.params, f.targets));
  }
}
BENCHMARK(BM_ForwardBackwardWithDropout)->Unit(benchmark::kMillisecond);

void BM_AdamStep(benchmark::State& state) {
  const Fixture f = make_fixture();
  ModelParams params = f.params;
  const ModelParams grads = f.params;
  AdamState adam = AdamState::zeros_like(params, AdamConfig{});
  for (auto _ : state) adam_step(params, grads, adam);
}
BENCHMARK(BM_AdamStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
