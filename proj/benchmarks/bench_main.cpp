#include <filesystem>

#include <benchmark/benchmark.h>

#include "cpr/labeling.hpp"
#include "cpr/npy.hpp"
#include "cpr/refine.hpp"
#include "cpr/simhead.hpp"
#include "cpr/synthgen.hpp"

namespace {

cpr::FeatureMap random_features(std::size_t side, std::size_t depth, cpr::Rng& rng) {
  cpr::Tensor t(cpr::Shape{side, side, depth});
  for (float& x : t.data()) x = static_cast<float>(rng.normal());
  return cpr::FeatureMap(std::move(t));
}

void BM_Similarities(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  cpr::Rng rng(1);
  const auto feat = random_features(side, 8, rng);
  const auto params = cpr::SimHeadParams::random(2, 8, 16, true, rng);
  const cpr::NeighborhoodSpec spec(4.0);
  for (auto _ : state) benchmark::DoNotOptimize(cpr::compute_similarities(feat, params, spec));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * side * side));
}
BENCHMARK(BM_Similarities)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Refine(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  cpr::Rng rng(2);
  const auto feat = random_features(side, 8, rng);
  const auto field = cpr::compute_similarities(feat, cpr::SimHeadParams::random(2, 8, 16, true, rng),
                                               cpr::NeighborhoodSpec(4.0));
  cpr::Tensor p(cpr::Shape{side, side, 2});
  for (float& x : p.data()) x = static_cast<float>(rng.uniform());
  const cpr::ProbMap prob(std::move(p));
  for (auto _ : state) benchmark::DoNotOptimize(cpr::refine(prob, field, {}));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * side * side));
}
BENCHMARK(BM_Refine)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_HeadGradient(benchmark::State& state) {
  const auto scenario = cpr::generate(cpr::ScenarioConfig::under_confident(3));
  const auto agg = cpr::aggregate_passes(scenario.stack, {});
  const auto protos = cpr::compute_prototypes(scenario.features, agg.prob, agg.uncertainty, agg.labels, {});
  const auto rel = cpr::reliability_mask(scenario.features, protos, agg.uncertainty, agg.labels, {});
  const cpr::NeighborhoodSpec spec(4.0);
  const auto pairs = cpr::pair_labels(agg.labels, rel.mask, spec, 0);
  cpr::Rng rng(3);
  const auto params = cpr::SimHeadParams::random(2, scenario.features.depth(), 16, true, rng);
  for (auto _ : state) benchmark::DoNotOptimize(cpr::loss_gradient(scenario.features, params.heads[0], pairs, spec));
  state.counters["pairs"] = static_cast<double>(pairs.total());
}
BENCHMARK(BM_HeadGradient)->Unit(benchmark::kMillisecond);

void BM_NpyRoundTrip(benchmark::State& state) {
  cpr::Rng rng(4);
  const auto feat = random_features(static_cast<std::size_t>(state.range(0)), 8, rng);
  const auto path = std::filesystem::temp_directory_path() / "cpr_bench.npy";
  for (auto _ : state) {
    cpr::save_tensor(feat.tensor(), path);
    benchmark::DoNotOptimize(cpr::load_tensor(path));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * feat.tensor().size() * sizeof(float) * 2));
  std::filesystem::remove(path);
}
BENCHMARK(BM_NpyRoundTrip)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
