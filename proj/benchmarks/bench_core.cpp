#include <benchmark/benchmark.h>

#include "plab/augment.hpp"
#include "plab/loss_optim.hpp"
#include "plab/model.hpp"

using namespace plab;

namespace {

// OpenMIC-scale shapes: 128-dim embeddings, 64 units per direction, 20 classes
ModelConfig bench_config() {
    ModelConfig cfg;
    cfg.input_dim = 128;
    cfg.hidden = 64;
    cfg.num_classes = 20;
    return cfg;
}

FeatureSequence bench_features(std::size_t t, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    FeatureSequence f(t, d);
    for (double& v : f.data) v = rng.normal();
    return f;
}

void BM_ModelForwardEval(benchmark::State& state) {
    const ModelConfig cfg = bench_config();
    const ModelParams params = init_params(cfg, 1);
    const FeatureSequence f = bench_features(static_cast<std::size_t>(state.range(0)), 128, 2);
    for (auto _ : state) {
        const Predictions pred = model_forward(params, cfg, f, Mode::eval, nullptr);
        benchmark::DoNotOptimize(pred.clip_probs.data());
    }
}
BENCHMARK(BM_ModelForwardEval)->Arg(10)->Arg(20);

void BM_ForwardBackward(benchmark::State& state) {
    const ModelConfig cfg = bench_config();
    const ModelParams params = init_params(cfg, 1);
    const FeatureSequence f = bench_features(static_cast<std::size_t>(state.range(0)), 128, 3);
    LabelVector labels(cfg.num_classes);
    for (std::size_t c = 0; c < labels.size(); ++c) labels[c] = c % 2 ? 1 : -1;
    const TargetMask tm = map_labels_to_targets(labels);
    const LossConfig loss_cfg;
    ModelGrads grads(params.layout);
    for (auto _ : state) {
        ForwardCache cache;
        model_forward(params, cfg, f, Mode::eval, nullptr, &cache);
        const FocalResult fr = focal_loss(cache.clip_probs, tm, loss_cfg);
        grads.zero();
        model_backward(params, cfg, cache, f, fr.dloss_dp, grads);
        benchmark::DoNotOptimize(grads.values.data());
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(10)->Arg(20);

void BM_FocalLoss(benchmark::State& state) {
    Rng rng(5);
    const std::size_t c = 20;
    Vec probs(c);
    LabelVector labels(c);
    for (std::size_t i = 0; i < c; ++i) {
        probs[i] = rng.uniform();
        labels[i] = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
    }
    const TargetMask tm = map_labels_to_targets(labels);
    const LossConfig cfg;
    for (auto _ : state) {
        const FocalResult fr = focal_loss(probs, tm, cfg);
        benchmark::DoNotOptimize(fr.loss);
    }
}
BENCHMARK(BM_FocalLoss);

void BM_AugmentBatch(benchmark::State& state) {
    Rng rng(9);
    std::vector<Example> pool;
    for (int i = 0; i < 32; ++i) {
        Example ex;
        ex.clip_id = "clip_" + std::to_string(i);
        ex.features = bench_features(10, 128, 10 + static_cast<std::uint64_t>(i));
        ex.labels.assign(20, 0);
        for (auto& l : ex.labels) l = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
        pool.push_back(std::move(ex));
    }
    Batch batch;
    for (const auto& ex : pool) batch.items.push_back(&ex);
    const AugmentConfig cfg;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        Rng arng(seed++);
        const auto subs = augment_batch(batch, cfg, arng);
        benchmark::DoNotOptimize(subs.size());
    }
}
BENCHMARK(BM_AugmentBatch);

void BM_AdamStep(benchmark::State& state) {
    const ModelConfig cfg = bench_config();
    ModelParams params = init_params(cfg, 1);
    Rng rng(2);
    Vec grads(params.values.size());
    for (double& g : grads) g = 1e-3 * rng.normal();
    AdamState adam = AdamState::init(params.values.size());
    for (auto _ : state) {
        adam_step(params.values, grads, adam);
        benchmark::DoNotOptimize(params.values.data());
    }
}
BENCHMARK(BM_AdamStep);

}  // namespace

BENCHMARK_MAIN();
