#include <benchmark/benchmark.h>

#include "vtg/diffusion.hpp"
#include "vtg/rng.hpp"
#include "vtg/transition_init.hpp"

namespace {

void BM_MakeSchedule1000(benchmark::State& state) {
    for (auto _ : state) {
        auto s = vtg::make_schedule(1000, 8.5e-4, 0.012, vtg::ScheduleKind::scaled_linear);
        benchmark::DoNotOptimize(s.alpha_bars.back());
    }
}
BENCHMARK(BM_MakeSchedule1000);

void BM_DdimStep(benchmark::State& state) {
    auto s = vtg::make_schedule(1000, 8.5e-4, 0.012, vtg::ScheduleKind::scaled_linear);
    vtg::Rng rng(1);
    const int frames = static_cast<int>(state.range(0));
    auto z = rng.gaussian_tensor<float>({frames, 192, 8, 8});
    auto eps = rng.gaussian_tensor<float>({frames, 192, 8, 8});
    for (auto _ : state) {
        auto out = vtg::ddim_step(z, eps, 500, 480, s);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_DdimStep)->Arg(2)->Arg(16);

void BM_Slerp(benchmark::State& state) {
    vtg::Rng rng(2);
    auto v1 = rng.gaussian_tensor<float>({static_cast<int>(state.range(0))});
    auto v2 = rng.gaussian_tensor<float>({static_cast<int>(state.range(0))});
    for (auto _ : state) {
        auto out = vtg::slerp(v1, v2, 0.37);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_Slerp)->Arg(1 << 10)->Arg(192 * 8 * 8);

}  // namespace
