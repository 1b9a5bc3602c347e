#include <benchmark/benchmark.h>

#include <vector>

#include "masolab/io.hpp"
#include "masolab/partition.hpp"
#include "masolab/train.hpp"
#include "masolab/vq.hpp"

using namespace masolab;

namespace {

Network toy() {
    const std::vector<LayerPlan> plan{DensePlan{45}, ActivationPlan{}, DensePlan{3}, ActivationPlan{}};
    return make_network({2, 1, 1}, plan, 4, 1, {1.0, 0.5, false});
}

Network cnn(std::size_t side) {
    const std::vector<LayerPlan> plan{ConvPlan{8, 3, Padding::Same, {1, 1}}, ActivationPlan{}, PoolPlan{},
                                      ConvPlan{8, 3, Padding::Same, {1, 1}}, ActivationPlan{}, PoolPlan{}};
    return make_network({1, side, side}, plan, 10, 1);
}

DenseVector input(std::size_t n) {
    CounterRng rng(3);
    DenseVector x(n);
    for (double& v : x) v = rng.uniform(-1, 1);
    return x;
}

}  // namespace

static void BM_ForwardToy(benchmark::State& state) {
    const auto net = toy();
    const auto x = input(2);
    for (auto _ : state) benchmark::DoNotOptimize(forward(net, x));
}
BENCHMARK(BM_ForwardToy);

static void BM_DecomposeToy(benchmark::State& state) {
    const auto net = toy();
    const auto tr = forward(net, input(2));
    for (auto _ : state) benchmark::DoNotOptimize(decompose(net, tr));
}
BENCHMARK(BM_DecomposeToy);

static void BM_DecomposeCnn(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    const auto net = cnn(side);
    const auto tr = forward(net, input(side * side));
    for (auto _ : state) benchmark::DoNotOptimize(decompose(net, tr));
}
BENCHMARK(BM_DecomposeCnn)->Arg(8)->Arg(16)->Arg(28);

static void BM_ConvMatrix(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    FilterBank f(8, 4, 3, 3, 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(build_conv_matrix(f, {4, side, side}, Padding::Same, {}));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ConvMatrix)->RangeMultiplier(2)->Range(8, 32)->Complexity();

static void BM_Signature(benchmark::State& state) {
    const auto net = toy();
    const auto x = input(2);
    for (auto _ : state) benchmark::DoNotOptimize(signature_at(net, x, 2));
}
BENCHMARK(BM_Signature);

static void BM_PartitionGrid(benchmark::State& state) {
    const auto net = toy();
    Grid2DSpec g;
    g.x_resolution = g.y_resolution = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(estimate_partition(net, g, 2).unique());
}
BENCHMARK(BM_PartitionGrid)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_NearestNeighbors(benchmark::State& state) {
    const auto net = toy();
    const auto data = gen_synthetic_2d({4, static_cast<std::size_t>(state.range(0)) / 4, Layout2D::RingsAndBlobs, 1});
    const auto corpus = build_corpus(net, data.inputs);
    const auto q = make_query(net, data.inputs.front());
    for (auto _ : state) benchmark::DoNotOptimize(nearest_neighbors(corpus, q, 0, 15));
}
BENCHMARK(BM_NearestNeighbors)->Arg(1000)->Arg(10000);

static void BM_BackwardBatch(benchmark::State& state) {
    const auto net = toy();
    const auto data = gen_synthetic_2d({4, 16, Layout2D::RingsAndBlobs, 1});
    std::vector<std::size_t> batch(data.size());
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
    const TrainConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(backward(net, data, batch, cfg));
}
BENCHMARK(BM_BackwardBatch);

BENCHMARK_MAIN();
