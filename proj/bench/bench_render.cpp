#include <benchmark/benchmark.h>

#include "disco/scene_io.hpp"

namespace {

const disco::SceneDocument& sparse_scene() {
  static const disco::SceneDocument doc =
      disco::load_scene(std::filesystem::path(DISCO_SOURCE_DIR) / "scenes/bench_sparse.json");
  return doc;
}

void BM_RenderPruned(benchmark::State& state) {
  const auto& doc = sparse_scene();
  disco::set_render_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(disco::render_scene(doc.state, doc.render));
  disco::set_render_threads(0);
}

void BM_RenderNaive(benchmark::State& state) {
  const auto& doc = sparse_scene();
  for (auto _ : state) benchmark::DoNotOptimize(disco::render_scene_naive(doc.state, doc.render));
}

void BM_RenderSsaa(benchmark::State& state) {
  auto doc = sparse_scene();
  doc.render.ssaa = 2;
  for (auto _ : state) benchmark::DoNotOptimize(disco::render_scene(doc.state, doc.render));
}

}  // namespace

BENCHMARK(BM_RenderPruned)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderNaive)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderSsaa)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
