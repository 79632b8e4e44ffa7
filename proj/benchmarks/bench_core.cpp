#include <benchmark/benchmark.h>

#include "protoscope/attacks.hpp"
#include "protoscope/data.hpp"
#include "protoscope/metrics.hpp"
#include "protoscope/nn.hpp"

namespace {

using namespace protoscope;

LabeledDataset bench_dataset() {
    GenConfig cfg;
    cfg.num_classes = 4;
    cfg.dims = 2;
    cfg.n_per_class = 250;
    cfg.class_separation = 6.0;
    cfg.seed = 1;
    return generate_mixture(cfg);
}

ModelCheckpoint bench_model(const LabeledDataset& ds) {
    ModelSpec spec;
    spec.input_dim = ds.dim;
    spec.num_classes = ds.num_classes;
    spec.hidden_widths = {32};
    TrainConfig tc;
    tc.epochs = 10;
    tc.batch_size = 32;
    tc.learning_rate = 0.1;
    tc.seed = 1;
    return train(spec, ds, tc);
}

void BM_Forward(benchmark::State& state) {
    auto ds = bench_dataset();
    auto model = bench_model(ds);
    int i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(model, ds.row(i)));
        i = (i + 1) % ds.size();
    }
}
BENCHMARK(BM_Forward);

void BM_LossAndGradients(benchmark::State& state) {
    auto ds = bench_dataset();
    auto model = bench_model(ds);
    Batch batch{&ds, {}};
    batch.indices.resize(static_cast<std::size_t>(state.range(0)));
    for (int k = 0; k < state.range(0); ++k) batch.indices[static_cast<std::size_t>(k)] = k;
    for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradients(model, batch));
}
BENCHMARK(BM_LossAndGradients)->Arg(32)->Arg(128);

void BM_AdvDistance(benchmark::State& state) {
    auto ds = bench_dataset();
    auto model = bench_model(ds);
    AttackConfig cfg;
    cfg.norm = Norm::linf;
    cfg.eps_upper = feature_box_diameter(ds, cfg.norm);
    int i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            adv_distance(model, ds.row(i), ds.labels[static_cast<std::size_t>(i)], cfg));
        i = (i + 1) % ds.size();
    }
}
BENCHMARK(BM_AdvDistance);

void BM_JsDivergence(benchmark::State& state) {
    ProbVector p{{0.7, 0.1, 0.1, 0.1}};
    ProbVector q{{0.2, 0.3, 0.4, 0.1}};
    for (auto _ : state) benchmark::DoNotOptimize(js_divergence(p, q));
}
BENCHMARK(BM_JsDivergence);

}  // namespace

BENCHMARK_MAIN();
