#include <benchmark/benchmark.h>

#include <synthval/rng.hpp>
#include <synthval/tensor.hpp>

using namespace synthval;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    rng.fill_uniform(t.raw(), -1.0f, 1.0f);
    return t;
}

void BM_conv2d_forward(benchmark::State& state) {
    const int C = static_cast<int>(state.range(0));
    Rng rng(1);
    Tensor in = random_tensor({1, 8, 8, C}, rng);
    Tensor w = random_tensor({3, 3, C, C}, rng);
    Tensor b = random_tensor({C}, rng);
    autograd::NoGradGuard guard;
    for (auto _ : state) {
        Tensor out = conv2d(in, w, b, 1);
        benchmark::DoNotOptimize(out.values().data());
    }
    const double macs = 8.0 * 8.0 * 3.0 * 3.0 * C * C;
    state.counters["MAC/s"] =
        benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_conv2d_forward)->Arg(16)->Arg(32)->Arg(48);

void BM_conv2d_train_step(benchmark::State& state) {
    const int C = static_cast<int>(state.range(0));
    Rng rng(2);
    Tensor in = random_tensor({1, 8, 8, C}, rng);
    for (auto _ : state) {
        Tensor w = Tensor::zeros({3, 3, C, C}, true);
        Rng wr(3);
        wr.fill_uniform(w.raw(), -0.1f, 0.1f);
        Tensor loss = mean(square(conv2d(in, w, Tensor(), 1)));
        loss.backward();
        benchmark::DoNotOptimize(w.grad().data());
    }
}
BENCHMARK(BM_conv2d_train_step)->Arg(16)->Arg(32);

void BM_group_norm_forward(benchmark::State& state) {
    Rng rng(4);
    Tensor in = random_tensor({1, 8, 8, 32}, rng);
    Tensor gamma = Tensor::full({32}, 1.0f);
    Tensor beta = Tensor::zeros({32});
    autograd::NoGradGuard guard;
    for (auto _ : state) {
        Tensor out = group_norm(in, gamma, beta, 4);
        benchmark::DoNotOptimize(out.values().data());
    }
}
BENCHMARK(BM_group_norm_forward);

}  // namespace

BENCHMARK_MAIN();
