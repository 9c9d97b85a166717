#include <benchmark/benchmark.h>

#include "../tests/fixtures.hpp"
#include "mixclus/dataset.hpp"
#include "mixclus/gaussnet.hpp"
#include "mixclus/mcem.hpp"
#include "mixclus/metrics.hpp"

using namespace mixclus;

namespace {

MixedDataset blob_dataset(int n) {
    fixtures::SyntheticData blob = fixtures::make_blob(n, 7);
    Schema schema = parse_schema(blob.schema);
    return load_dataset_text(blob.csv, schema);
}

void bm_gower_matrix(benchmark::State& state) {
    const MixedDataset ds = blob_dataset(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(gower_matrix(ds));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_gower_matrix)->Arg(100)->Arg(300)->Arg(600)->Complexity();

void bm_fill_path_moments(benchmark::State& state) {
    fixtures::Rng rng(3);
    Architecture arch;
    arch.mode = Mode::Ddgmm;
    arch.head_d = {{5, static_cast<int>(state.range(0))}};
    arch.tail = {{3, 2}, {2, 1}};
    std::vector<VarKind> kinds(6, VarKind::Binary);
    ModelParams params = fixtures::random_params(arch, 0, kinds, rng);
    Chain chain = build_chain(params, Head::D);
    for (auto _ : state) {
        PathTable table = enumerate_paths(chain);
        fill_path_moments(chain, table);
        benchmark::DoNotOptimize(table);
    }
}
BENCHMARK(bm_fill_path_moments)->Arg(2)->Arg(4)->Arg(8);

void bm_estep_draws(benchmark::State& state) {
    fixtures::Rng rng(5);
    Architecture arch;
    arch.mode = Mode::Ddgmm;
    arch.head_d = {{4, 2}};
    arch.tail = {{2, 2}, {1, 1}};
    std::vector<VarKind> kinds(5, VarKind::Binary);
    ModelParams params = fixtures::random_params(arch, 0, kinds, rng);
    Chain chain = build_chain(params, Head::D);
    PathTable table = enumerate_paths(chain);
    fill_path_moments(chain, table);
    const int n = static_cast<int>(state.range(0));

    GllvmObs obs;
    obs.codes.resize(n, 5);
    obs.values.resize(n, 0);
    obs.trials = {1, 1, 1, 1, 1};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 5; ++j) obs.codes(i, j) = rng.uniform() < 0.5 ? 0 : 1;

    std::uint64_t iter = 0;
    for (auto _ : state) {
        ChainEState es = draw_layer_latents(1, ++iter, chain, table, {16, 2, 2}, n, true, 256);
        latent_posterior_weights(es, chain, table, nullptr, &params.gllvm, &obs);
        head_path_posteriors(es, table);
        benchmark::DoNotOptimize(es);
    }
}
BENCHMARK(bm_estep_draws)->Arg(50)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
