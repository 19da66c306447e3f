#include <benchmark/benchmark.h>

#include "mmclust/clustering.hpp"
#include "mmclust/evaluation.hpp"
#include "mmclust/losses.hpp"
#include "mmclust/model.hpp"
#include "mmclust/numerics.hpp"
#include "mmclust/rng.hpp"

using namespace mmclust;

namespace {

Matf random_matf(size_t r, size_t c, uint64_t seed) {
    Rng rng(seed);
    Matf m(r, c);
    for (float& v : m.values()) v = static_cast<float>(rng.normal());
    return m;
}

Matd random_matd(size_t r, size_t c, uint64_t seed) {
    Rng rng(seed);
    Matd m(r, c);
    for (double& v : m.values()) v = rng.normal();
    return m;
}

} // namespace

static void BM_Matmul(benchmark::State& state) {
    const size_t n = static_cast<size_t>(state.range(0));
    Matf a = random_matf(n, n, 1), b = random_matf(n, n, 2);
    for (auto _ : state) {
        Matf c = matmul(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_MmsPairLoss(benchmark::State& state) {
    const size_t b = static_cast<size_t>(state.range(0));
    Matf x = row_l2_normalize(random_matf(b, 64, 3));
    Matf y = row_l2_normalize(random_matf(b, 64, 4));
    for (auto _ : state) {
        auto out = mms_pair_loss(x, y, 0.001f);
        benchmark::DoNotOptimize(out.value);
    }
}
BENCHMARK(BM_MmsPairLoss)->Arg(128)->Arg(512);

static void BM_HeadForwardBackward(benchmark::State& state) {
    const size_t b = static_cast<size_t>(state.range(0));
    auto params = init_params<float>({96, 80, 72}, 64, 32, 5);
    Matf x = random_matf(b, 96, 6);
    Matf de = random_matf(b, 64, 7);
    for (auto _ : state) {
        HeadCache<float> cache;
        head_forward(params.heads[0], x, cache);
        auto grads = head_backward(params.heads[0], cache, de);
        benchmark::DoNotOptimize(grads.w1.data());
    }
}
BENCHMARK(BM_HeadForwardBackward)->Arg(128)->Arg(512);

static void BM_KmeansFit(benchmark::State& state) {
    const size_t n = static_cast<size_t>(state.range(0));
    Matf pts = random_matf(n, 64, 8);
    for (auto _ : state) {
        auto fit = kmeans_fit(pts, 16, 10, 0);
        benchmark::DoNotOptimize(fit.objective);
    }
}
BENCHMARK(BM_KmeansFit)->Arg(512)->Arg(2048);

static void BM_AlignTranscript(benchmark::State& state) {
    const size_t frames = static_cast<size_t>(state.range(0));
    Matd scores = random_matd(frames, 8, 9);
    std::vector<int> transcript{0, 1, 2, 3, 4, 5, 6, 7};
    for (auto _ : state) {
        auto res = align_transcript(scores, transcript, 0.0, true);
        benchmark::DoNotOptimize(res.score);
    }
}
BENCHMARK(BM_AlignTranscript)->Arg(128)->Arg(1024);

static void BM_Hungarian(benchmark::State& state) {
    const size_t n = static_cast<size_t>(state.range(0));
    Matd cost = random_matd(n, n, 10);
    for (auto _ : state) {
        auto perm = hungarian(cost);
        benchmark::DoNotOptimize(perm.data());
    }
}
BENCHMARK(BM_Hungarian)->Arg(16)->Arg(64);

BENCHMARK_MAIN();
