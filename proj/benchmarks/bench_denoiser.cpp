#include <benchmark/benchmark.h>

#include "vtg/backbone.hpp"
#include "vtg/rng.hpp"

namespace {

vtg::DenoiserConfig bench_config(int frames) {
    vtg::DenoiserConfig cfg;
    cfg.latent_channels = 192;
    cfg.base_width = 48;
    cfg.levels = 2;
    cfg.attention_heads = 4;
    cfg.frame_count = frames;
    cfg.text_embed_dim = 128;
    return cfg;
}

void BM_DenoiseForward(benchmark::State& state) {
    const int frames = static_cast<int>(state.range(0));
    auto cfg = bench_config(frames);
    vtg::Denoiser model(cfg, 1);
    vtg::Rng rng(2);
    auto z = rng.gaussian_tensor<float>({frames, cfg.latent_channels, 8, 8});
    vtg::Conditioning cond;
    cond.first_latent = rng.gaussian_tensor<float>({cfg.latent_channels, 8, 8});
    cond.last_latent = rng.gaussian_tensor<float>({cfg.latent_channels, 8, 8});
    vtg::TextEncoder enc(cfg.text_embed_dim);
    std::vector<vtg::TextEmbedding> ctx{enc.encode("a red circle moving right")};
    vtg::DenoiseFlagsT<float> flags;
    for (auto _ : state) {
        auto eps = model.forward(z, 500, ctx, cond, flags);
        benchmark::DoNotOptimize(eps.data());
    }
}
BENCHMARK(BM_DenoiseForward)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_DenoiseTrainStep(benchmark::State& state) {
    const int frames = static_cast<int>(state.range(0));
    auto cfg = bench_config(frames);
    vtg::Denoiser model(cfg, 1);
    vtg::Rng rng(3);
    auto z = rng.gaussian_tensor<float>({frames, cfg.latent_channels, 8, 8});
    vtg::Conditioning cond;
    cond.first_latent = rng.gaussian_tensor<float>({cfg.latent_channels, 8, 8});
    cond.last_latent = rng.gaussian_tensor<float>({cfg.latent_channels, 8, 8});
    vtg::TextEncoder enc(cfg.text_embed_dim);
    std::vector<vtg::TextEmbedding> ctx{enc.encode("a red circle moving right")};
    vtg::DenoiseFlagsT<float> flags;
    flags.training = true;
    for (auto _ : state) {
        model.zero_grads();
        auto eps = model.forward(z, 500, ctx, cond, flags);
        vtg::Tensor d(eps.shape());
        d.fill(1.0f / static_cast<float>(eps.size()));
        model.backward(d);
        benchmark::DoNotOptimize(eps.data());
    }
}
BENCHMARK(BM_DenoiseTrainStep)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace
