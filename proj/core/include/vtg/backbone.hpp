#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>

#include "vtg/diffusion.hpp"
#include "vtg/lora.hpp"
#include "vtg/nn_attention.hpp"
#include "vtg/text.hpp"

namespace vtg {

struct DenoiserConfig {
    int latent_channels = 192;   // C
    int base_width = 48;         // width at the top level, doubled per level
    int levels = 2;              // spatial resolutions
    int attention_heads = 4;
    int frame_count = 16;        // N
    int text_embed_dim = 128;    // d
    int norm_groups = 8;
    std::vector<std::string> lora_targets;  // empty -> all spatial/cross v,o projections

    int width(int level) const { return base_width << level; }
    int time_dim() const { return 4 * base_width; }

    void validate() const {
        require(latent_channels > 0 && base_width > 0 && levels >= 1 && attention_heads > 0 &&
                    frame_count > 0 && text_embed_dim > 0,
                "denoiser config: all sizes must be positive");
        for (int l = 0; l < levels; ++l) {
            require(width(l) % attention_heads == 0, "denoiser config: heads must divide widths");
            require(width(l) % norm_groups == 0, "denoiser config: groups must divide widths");
        }
    }
};

/// Endpoint conditioning: the two clean endpoint latents, channel-concatenated
/// onto every frame plus a frame-validity mask channel, and projected into two
/// extra cross-attention context tokens.
template <typename T>
struct ConditioningT {
    TensorT<T> first_latent;  // [C, h, w]
    TensorT<T> last_latent;   // [C, h, w]
};

using Conditioning = ConditioningT<float>;

/// Captured intermediate activation.
template <typename T>
struct FeatureTapT {
    std::string layer;
    TensorT<T> activation;  // [N, C', h', w']
};

using FeatureTap = FeatureTapT<float>;

template <typename T>
struct DenoiseFlagsT {
    bool rotate_attention = false;
    bool use_backward_vo = false;
    const FrameLorasT<T>* lora = nullptr;
    std::string tap;       // empty -> no capture
    bool training = false;  // enable caches for backward()
    bool lora_grads = false;
    bool capture_attention = false;  // debug, not thread-safe
};

namespace nn {

// ---- token layout shuffles --------------------------------------------------

/// [N, C, H, W] -> [N*H*W, C]; per-frame token rows.
template <typename T>
TensorT<T> to_frame_tokens(const TensorT<T>& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    TensorT<T> t({n * h * w, c});
    parallel_for(0, static_cast<int64_t>(n) * h * w, [&](int64_t row) {
        const int ni = static_cast<int>(row / (h * w));
        const int px = static_cast<int>(row % (h * w));
        T* dst = t.data() + row * c;
        const T* src = x.data() + (static_cast<int64_t>(ni) * c) * h * w + px;
        for (int ci = 0; ci < c; ++ci) dst[ci] = src[static_cast<int64_t>(ci) * h * w];
    });
    return t;
}

/// Inverse of to_frame_tokens.
template <typename T>
TensorT<T> from_frame_tokens(const TensorT<T>& t, int n, int c, int h, int w) {
    TensorT<T> x({n, c, h, w});
    parallel_for(0, static_cast<int64_t>(n) * h * w, [&](int64_t row) {
        const int ni = static_cast<int>(row / (h * w));
        const int px = static_cast<int>(row % (h * w));
        const T* src = t.data() + row * c;
        T* dst = x.data() + (static_cast<int64_t>(ni) * c) * h * w + px;
        for (int ci = 0; ci < c; ++ci) dst[static_cast<int64_t>(ci) * h * w] = src[ci];
    });
    return x;
}

/// [N, C, H, W] -> [H*W*N, C]; per-location token rows over frames.
template <typename T>
TensorT<T> to_location_tokens(const TensorT<T>& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    TensorT<T> t({h * w * n, c});
    parallel_for(0, static_cast<int64_t>(h) * w * n, [&](int64_t row) {
        const int px = static_cast<int>(row / n);
        const int ni = static_cast<int>(row % n);
        T* dst = t.data() + row * c;
        const T* src = x.data() + (static_cast<int64_t>(ni) * c) * h * w + px;
        for (int ci = 0; ci < c; ++ci) dst[ci] = src[static_cast<int64_t>(ci) * h * w];
    });
    return t;
}

/// Inverse of to_location_tokens.
template <typename T>
TensorT<T> from_location_tokens(const TensorT<T>& t, int n, int c, int h, int w) {
    TensorT<T> x({n, c, h, w});
    parallel_for(0, static_cast<int64_t>(h) * w * n, [&](int64_t row) {
        const int px = static_cast<int>(row / n);
        const int ni = static_cast<int>(row % n);
        const T* src = t.data() + row * c;
        T* dst = x.data() + (static_cast<int64_t>(ni) * c) * h * w + px;
        for (int ci = 0; ci < c; ++ci) dst[static_cast<int64_t>(ci) * h * w] = src[ci];
    });
    return x;
}

// ---- blocks ------------------------------------------------------------------

/// Sinusoidal timestep features -> two-layer MLP.
template <typename T>
class TimeEmbed {
public:
    Linear<T> fc1, fc2;

    TimeEmbed() = default;
    TimeEmbed(int sin_dim, int out_dim, Rng& rng)
        : fc1(sin_dim, out_dim, rng), fc2(out_dim, out_dim, rng), sin_dim_(sin_dim) {}

    TensorT<T> forward(int t, bool training) {
        TensorT<T> sin_feat({1, sin_dim_});
        const int half = sin_dim_ / 2;
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / half);
            sin_feat[i] = static_cast<T>(std::sin(t * freq));
            sin_feat[half + i] = static_cast<T>(std::cos(t * freq));
        }
        auto h = fc1.forward(sin_feat, training);
        auto a = act_.forward(h, training);
        return fc2.forward(a, training);
    }

    void backward(const TensorT<T>& dy, const BackwardOptions& opts) {
        auto da = fc2.backward(dy, opts);
        auto dh = act_.backward(da);
        fc1.backward(dh, opts);  // sinusoid features take no gradient
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        fc1.collect_params(prefix + ".fc1", out);
        fc2.collect_params(prefix + ".fc2", out);
    }

private:
    int sin_dim_ = 0;
    SiLU<T> act_;
};

/// GroupNorm/SiLU/conv pair with an additive per-channel time bias.
template <typename T>
class ResBlock {
public:
    GroupNorm<T> norm1, norm2;
    Conv2d<T> conv1, conv2, skip;
    Linear<T> time_proj;
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(int c_in, int c_out, int time_dim, int groups, Rng& rng)
        : norm1(c_in, groups),
          norm2(c_out, groups),
          conv1(c_in, c_out, 3, 1, 1, rng),
          conv2(c_out, c_out, 3, 1, 1, rng),
          time_proj(time_dim, c_out, rng),
          has_skip(c_in != c_out),
          c_out_(c_out) {
        if (has_skip) skip = Conv2d<T>(c_in, c_out, 1, 1, 0, rng);
    }

    TensorT<T> forward(const TensorT<T>& x, const TensorT<T>& temb, bool training) {
        auto h = norm1.forward(x, training);
        h = act1_.forward(h, training);
        h = conv1.forward(h, training);
        auto tb = time_proj.forward(temb, training);  // [1, c_out]
        const int b = h.dim(0), hh = h.dim(2), ww = h.dim(3);
        for (int bi = 0; bi < b; ++bi)
            for (int ci = 0; ci < c_out_; ++ci) {
                T* p = &h.at(bi, ci, 0, 0);
                const T add = tb[ci];
                for (int i = 0; i < hh * ww; ++i) p[i] += add;
            }
        h = norm2.forward(h, training);
        h = act2_.forward(h, training);
        h = conv2.forward(h, training);
        auto res = has_skip ? skip.forward(x, training) : x;
        h.add_(res);
        return h;
    }

    TensorT<T> backward(const TensorT<T>& dy, const TensorT<T>& temb_unused,
                        TensorT<T>& d_temb_acc, const BackwardOptions& opts) {
        (void)temb_unused;
        auto dh = conv2.backward(dy, opts);
        dh = act2_.backward(dh);
        dh = norm2.backward(dh, opts);
        // time bias: gradient is the sum over frames and positions per channel
        const int b = dh.dim(0), hh = dh.dim(2), ww = dh.dim(3);
        TensorT<T> dtb({1, c_out_});
        for (int bi = 0; bi < b; ++bi)
            for (int ci = 0; ci < c_out_; ++ci) {
                const T* p = &dh.at(bi, ci, 0, 0);
                T s = 0;
                for (int i = 0; i < hh * ww; ++i) s += p[i];
                dtb[ci] += s;
            }
        auto d_temb = time_proj.backward(dtb, opts);
        d_temb_acc.add_(d_temb);
        dh = conv1.backward(dh, opts);
        dh = act1_.backward(dh);
        auto dx = norm1.backward(dh, opts);
        if (has_skip) {
            auto ds = skip.backward(dy, opts);
            dx.add_(ds);
        } else {
            dx.add_(dy);
        }
        return dx;
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        norm1.collect_params(prefix + ".norm1", out);
        conv1.collect_params(prefix + ".conv1", out);
        time_proj.collect_params(prefix + ".time", out);
        norm2.collect_params(prefix + ".norm2", out);
        conv2.collect_params(prefix + ".conv2", out);
        if (has_skip) skip.collect_params(prefix + ".skip", out);
    }

private:
    int c_out_ = 0;
    SiLU<T> act1_, act2_;
};

/// The spatial-self / text-cross / temporal-self attention stack applied at
/// one resolution. Spatial and cross attention carry LoRA slots; temporal
/// attention carries the backward-direction v/o deltas, a relative-position
/// bias, and the rotation hook.
template <typename T>
class AttnTriple {
public:
    LayerNorm<T> ln_s, ln_c, ln_t;
    AttentionCore<T> spatial, cross, temporal;
    Param<T> rel_bias;  // [heads, 2*Nmax-1]

    AttnTriple() = default;
    AttnTriple(int width, int heads, int text_dim, int max_frames, Rng& rng)
        : ln_s(width),
          ln_c(width),
          ln_t(width),
          spatial(width, width, width, width, heads, rng, false),
          cross(width, text_dim, width, width, heads, rng, false),
          temporal(width, width, width, width, heads, rng, true),
          max_frames_(max_frames) {
        rel_bias.init({heads, 2 * max_frames - 1});
    }

    struct Hooks {
        bool rotate = false;
        bool use_backward_vo = false;
        std::vector<LoraMats<T>*> lora_sv, lora_so, lora_cv, lora_co;  // per frame or empty
        bool lora_grads = false;
        bool training = false;
        bool capture_attention = false;
    };

    /// x: [N, C, H, W]; ctx: [N*Lk, text_dim] per-frame context tokens.
    TensorT<T> forward(const TensorT<T>& x, const TensorT<T>& ctx, const Hooks& hooks) {
        const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        const bool tr = hooks.training;
        hooks_ = hooks;  // keep lora pointer vectors alive for backward

        auto xs = to_frame_tokens(x);  // [N*HW, C]
        {
            typename AttentionCore<T>::RunOptions run;
            run.seqs = n;
            run.training = tr;
            run.lora_grads = hooks.lora_grads;
            if (!hooks_.lora_sv.empty()) run.lora_v = &hooks_.lora_sv;
            if (!hooks_.lora_so.empty()) run.lora_o = &hooks_.lora_so;
            auto t1 = ln_s.forward(xs, tr);
            auto a1 = spatial.forward(t1, t1, run);
            xs.add_(a1);
        }
        {
            typename AttentionCore<T>::RunOptions run;
            run.seqs = n;
            run.training = tr;
            run.lora_grads = hooks.lora_grads;
            if (!hooks_.lora_cv.empty()) run.lora_v = &hooks_.lora_cv;
            if (!hooks_.lora_co.empty()) run.lora_o = &hooks_.lora_co;
            auto t2 = ln_c.forward(xs, tr);
            auto a2 = cross.forward(t2, ctx, run);
            xs.add_(a2);
        }
        auto xf = from_frame_tokens(xs, n, c, h, w);
        auto xt = to_location_tokens(xf);  // [HW*N, C]
        {
            typename AttentionCore<T>::RunOptions run;
            run.seqs = h * w;
            run.training = tr;
            run.rotate_after_softmax = hooks.rotate;
            run.use_backward_vo = hooks.use_backward_vo;
            run.rel_bias = &rel_bias;
            run.rel_center = max_frames_ - 1;
            run.capture_attention = hooks.capture_attention;
            auto t3 = ln_t.forward(xt, tr);
            auto a3 = temporal.forward(t3, t3, run);
            xt.add_(a3);
        }
        dims_ = {n, c, h, w};
        return from_location_tokens(xt, n, c, h, w);
    }

    /// Returns (dx, d_ctx).
    std::pair<TensorT<T>, TensorT<T>> backward(const TensorT<T>& dy, const BackwardOptions& opts) {
        const auto [n, c, h, w] = dims_;
        auto dxt = to_location_tokens(dy);
        {
            auto [dq, dkv] = temporal.backward(dxt, opts);
            dq.add_(dkv);  // self-attention: same tokens fed as q and kv
            auto dt = ln_t.backward(dq, opts);
            dxt.add_(dt);
        }
        auto dxf = from_location_tokens(dxt, n, c, h, w);
        auto dxs = to_frame_tokens(dxf);
        TensorT<T> d_ctx;
        {
            auto [dq, dkv] = cross.backward(dxs, opts);
            d_ctx = std::move(dkv);
            auto dt = ln_c.backward(dq, opts);
            dxs.add_(dt);
        }
        {
            auto [dq, dkv] = spatial.backward(dxs, opts);
            dq.add_(dkv);
            auto dt = ln_s.backward(dq, opts);
            dxs.add_(dt);
        }
        return {from_frame_tokens(dxs, n, c, h, w), std::move(d_ctx)};
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        ln_s.collect_params(prefix + ".spatial.norm", out);
        spatial.collect_params(prefix + ".spatial", out);
        ln_c.collect_params(prefix + ".cross.norm", out);
        cross.collect_params(prefix + ".cross", out);
        ln_t.collect_params(prefix + ".temporal.norm", out);
        temporal.collect_params(prefix + ".temporal", out);
        collect(out, prefix + ".temporal.rel_bias", rel_bias);
    }

private:
    int max_frames_ = 1;
    Hooks hooks_;
    std::array<int, 4> dims_{};
};

/// Nearest-neighbor 2x upsample followed by a 3x3 conv.
template <typename T>
class Upsample {
public:
    Conv2d<T> conv;

    Upsample() = default;
    Upsample(int c_in, int c_out, Rng& rng) : conv(c_in, c_out, 3, 1, 1, rng) {}

    TensorT<T> forward(const TensorT<T>& x, bool training) {
        const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        TensorT<T> up({b, c, h * 2, w * 2});
        for (int bi = 0; bi < b; ++bi)
            for (int ci = 0; ci < c; ++ci) {
                const T* src = &x.at(bi, ci, 0, 0);
                T* dst = &up.at(bi, ci, 0, 0);
                for (int y = 0; y < 2 * h; ++y)
                    for (int xx = 0; xx < 2 * w; ++xx)
                        dst[y * 2 * w + xx] = src[(y / 2) * w + (xx / 2)];
            }
        in_shape_ = x.shape();
        return conv.forward(up, training);
    }

    TensorT<T> backward(const TensorT<T>& dy, const BackwardOptions& opts) {
        auto dup = conv.backward(dy, opts);
        const int b = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
        TensorT<T> dx({b, c, h, w});
        for (int bi = 0; bi < b; ++bi)
            for (int ci = 0; ci < c; ++ci) {
                const T* src = &dup.at(bi, ci, 0, 0);
                T* dst = &dx.at(bi, ci, 0, 0);
                for (int y = 0; y < 2 * h; ++y)
                    for (int xx = 0; xx < 2 * w; ++xx)
                        dst[(y / 2) * w + (xx / 2)] += src[y * 2 * w + xx];
            }
        return dx;
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        conv.collect_params(prefix + ".conv", out);
    }

private:
    std::vector<int> in_shape_;
};

}  // namespace nn

/// The toy latent video denoiser: a small UNet of spatial conv blocks with a
/// spatial/cross/temporal attention stack at every resolution, timestep
/// embedding, endpoint-latent conditioning, LoRA injection slots, rotation and
/// backward-direction hooks, and feature taps.
template <typename T>
class DenoiserT {
public:
    explicit DenoiserT(DenoiserConfig cfg, uint64_t seed = 0) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        const int c = cfg_.latent_channels;
        const int td = cfg_.time_dim();
        time_embed_ = nn::TimeEmbed<T>(cfg_.base_width, td, rng);
        endpoint_proj_ = nn::Linear<T>(c, cfg_.text_embed_dim, rng);
        stem_ = nn::Conv2d<T>(3 * c + 1, cfg_.width(0), 1, 1, 0, rng);
        const int levels = cfg_.levels;
        enc_res_.reserve(levels);
        enc_attn_.reserve(levels);
        for (int l = 0; l < levels; ++l) {
            enc_res_.emplace_back(cfg_.width(l), cfg_.width(l), td, cfg_.norm_groups, rng);
            enc_attn_.emplace_back(cfg_.width(l), cfg_.attention_heads, cfg_.text_embed_dim,
                                   cfg_.frame_count, rng);
            if (l + 1 < levels)
                downs_.emplace_back(cfg_.width(l), cfg_.width(l + 1), 3, 2, 1, rng);
        }
        const int wm = cfg_.width(levels - 1);
        mid_res0_ = nn::ResBlock<T>(wm, wm, td, cfg_.norm_groups, rng);
        mid_attn_ = nn::AttnTriple<T>(wm, cfg_.attention_heads, cfg_.text_embed_dim,
                                      cfg_.frame_count, rng);
        mid_res1_ = nn::ResBlock<T>(wm, wm, td, cfg_.norm_groups, rng);
        for (int l = levels - 1; l >= 0; --l) {
            dec_res_.emplace_back(2 * cfg_.width(l), cfg_.width(l), td, cfg_.norm_groups, rng);
            dec_attn_.emplace_back(cfg_.width(l), cfg_.attention_heads, cfg_.text_embed_dim,
                                   cfg_.frame_count, rng);
            if (l > 0) ups_.emplace_back(cfg_.width(l), cfg_.width(l - 1), rng);
        }
        head_norm_ = nn::GroupNorm<T>(cfg_.width(0), cfg_.norm_groups);
        head_conv_ = nn::Conv2d<T>(cfg_.width(0), c, 1, 1, 0, rng);
    }

    const DenoiserConfig& config() const { return cfg_; }

    std::vector<std::string> tap_names() const {
        std::vector<std::string> names{"mid"};
        for (int l = 0; l < cfg_.levels; ++l) names.push_back("enc" + std::to_string(l));
        for (int l = 0; l < cfg_.levels; ++l) names.push_back("dec" + std::to_string(l));
        return names;
    }

    /// Adapted-layer names and (in_dim, out_dim) for LoRA construction,
    /// honoring cfg.lora_targets when nonempty.
    std::map<std::string, std::pair<int, int>> lora_target_dims() const {
        std::map<std::string, std::pair<int, int>> dims;
        auto add_block = [&](const std::string& block, int w) {
            dims[block + ".spatial.v"] = {w, w};
            dims[block + ".spatial.o"] = {w, w};
            dims[block + ".cross.v"] = {cfg_.text_embed_dim, w};
            dims[block + ".cross.o"] = {w, w};
        };
        for (int l = 0; l < cfg_.levels; ++l) add_block("enc" + std::to_string(l) + ".attn", cfg_.width(l));
        add_block("mid.attn", cfg_.width(cfg_.levels - 1));
        for (int l = 0; l < cfg_.levels; ++l) add_block("dec" + std::to_string(l) + ".attn", cfg_.width(l));
        if (cfg_.lora_targets.empty()) return dims;
        std::map<std::string, std::pair<int, int>> filtered;
        for (const auto& name : cfg_.lora_targets) {
            auto it = dims.find(name);
            require(it != dims.end(), "unknown lora target: " + name);
            filtered.insert(*it);
        }
        return filtered;
    }

    /// eps prediction. z: [N, C, h, w] with N <= config frame count; ctx has 1
    /// (broadcast) or N per-frame embeddings.
    TensorT<T> forward(const TensorT<T>& z, int t, const std::vector<TextEmbedding>& ctx,
                       const ConditioningT<T>& cond, const DenoiseFlagsT<T>& flags,
                       FeatureTapT<T>* tap_out = nullptr) {
        check_latent_video(z, 1);
        const int n = z.dim(0), c = z.dim(1), h = z.dim(2), w = z.dim(3);
        require(c == cfg_.latent_channels, "denoise: latent channel mismatch");
        require(n <= cfg_.frame_count, "denoise: frame count exceeds model configuration");
        require(ctx.size() == 1 || static_cast<int>(ctx.size()) == n,
                "denoise: ctx length must be 1 or N");
        require(cond.first_latent.rank() == 3 && cond.first_latent.dim(0) == c &&
                    cond.first_latent.dim(1) == h && cond.first_latent.dim(2) == w &&
                    cond.last_latent.same_shape(cond.first_latent),
                "denoise: conditioning latent shape mismatch");
        if (!flags.tap.empty()) {
            const auto names = tap_names();
            require(std::find(names.begin(), names.end(), flags.tap) != names.end(),
                    "denoise: unknown tap layer " + flags.tap);
            require(tap_out != nullptr, "denoise: tap requested without output slot");
        }
        const bool tr = flags.training;

        // Input assembly: [z | first | last | mask].
        TensorT<T> x_in({n, 3 * c + 1, h, w});
        const int64_t plane = static_cast<int64_t>(h) * w;
        for (int ni = 0; ni < n; ++ni) {
            T* dst = &x_in.at(ni, 0, 0, 0);
            std::copy(&z.at(ni, 0, 0, 0), &z.at(ni, 0, 0, 0) + c * plane, dst);
            std::copy(cond.first_latent.data(), cond.first_latent.data() + c * plane,
                      dst + c * plane);
            std::copy(cond.last_latent.data(), cond.last_latent.data() + c * plane,
                      dst + 2 * c * plane);
            const T mask = (ni == 0 || ni == n - 1) ? T(1) : T(0);
            std::fill(dst + 3 * c * plane, dst + (3 * c + 1) * plane, mask);
        }

        auto temb = time_embed_.forward(t, tr);
        auto [ctx_tokens, ctx_len] = assemble_context(ctx, cond, n, tr);
        ctx_len_ = ctx_len;
        frames_ = n;

        auto hooks = make_hooks(flags);

        auto x = stem_.forward(x_in, tr);
        std::vector<TensorT<T>> skips;
        skips.reserve(static_cast<size_t>(cfg_.levels));
        for (int l = 0; l < cfg_.levels; ++l) {
            x = enc_res_[static_cast<size_t>(l)].forward(x, temb, tr);
            x = enc_attn_[static_cast<size_t>(l)].forward(
                x, ctx_tokens, block_hooks(hooks, "enc" + std::to_string(l) + ".attn", flags));
            maybe_tap(flags, tap_out, "enc" + std::to_string(l), x);
            skips.push_back(x);
            if (l + 1 < cfg_.levels) x = downs_[static_cast<size_t>(l)].forward(x, tr);
        }
        x = mid_res0_.forward(x, temb, tr);
        x = mid_attn_.forward(x, ctx_tokens, block_hooks(hooks, "mid.attn", flags));
        x = mid_res1_.forward(x, temb, tr);
        maybe_tap(flags, tap_out, "mid", x);

        for (int l = cfg_.levels - 1; l >= 0; --l) {
            const size_t di = static_cast<size_t>(cfg_.levels - 1 - l);
            x = concat_channels(x, skips[static_cast<size_t>(l)]);
            x = dec_res_[di].forward(x, temb, tr);
            x = dec_attn_[di].forward(x, ctx_tokens,
                                      block_hooks(hooks, "dec" + std::to_string(l) + ".attn", flags));
            maybe_tap(flags, tap_out, "dec" + std::to_string(l), x);
            if (l > 0) x = ups_[di].forward(x, tr);
        }
        x = head_norm_.forward(x, tr);
        x = head_act_.forward(x, tr);
        auto eps = head_conv_.forward(x, tr);
        if (tr) {
            temb_cache_ = std::move(temb);
            tap_name_cache_ = flags.tap;
        }
        return eps;
    }

    /// Reverse sweep after a training-mode forward. d_tap, when given, is the
    /// gradient flowing into the tapped activation (only "mid" participates in
    /// training losses).
    void backward(const TensorT<T>& d_eps, const TensorT<T>* d_tap = nullptr,
                  const nn::BackwardOptions& opts = {}) {
        TensorT<T> d_temb({1, cfg_.time_dim()});
        TensorT<T> d_ctx_acc;

        auto dx = head_conv_.backward(d_eps, opts);
        dx = head_act_.backward(dx);
        dx = head_norm_.backward(dx, opts);

        std::vector<TensorT<T>> d_skips(static_cast<size_t>(cfg_.levels));
        for (int l = 0; l <= cfg_.levels - 1; ++l) {
            const size_t di = static_cast<size_t>(cfg_.levels - 1 - l);
            if (l > 0) dx = ups_[di].backward(dx, opts);
            auto [da, dctx] = dec_attn_[di].backward(dx, opts);
            accumulate_ctx(d_ctx_acc, dctx);
            dx = dec_res_[di].backward(da, temb_cache_, d_temb, opts);
            auto [d_deep, d_skip] = split_channels(dx);
            d_skips[static_cast<size_t>(l)] = std::move(d_skip);
            dx = std::move(d_deep);
        }

        if (d_tap) {
            require(tap_name_cache_ == "mid", "backward: gradient taps support the mid layer only");
            dx.add_(*d_tap);
        }
        dx = mid_res1_.backward(dx, temb_cache_, d_temb, opts);
        {
            auto [da, dctx] = mid_attn_.backward(dx, opts);
            accumulate_ctx(d_ctx_acc, dctx);
            dx = mid_res0_.backward(da, temb_cache_, d_temb, opts);
        }
        for (int l = cfg_.levels - 1; l >= 0; --l) {
            if (l + 1 < cfg_.levels) dx = downs_[static_cast<size_t>(l)].backward(dx, opts);
            dx.add_(d_skips[static_cast<size_t>(l)]);
            auto [da, dctx] = enc_attn_[static_cast<size_t>(l)].backward(dx, opts);
            accumulate_ctx(d_ctx_acc, dctx);
            dx = enc_res_[static_cast<size_t>(l)].backward(da, temb_cache_, d_temb, opts);
        }
        stem_.backward(dx, opts);
        time_embed_.backward(d_temb, opts);

        // Endpoint context tokens: rows (ctx_len-2, ctx_len-1) of every frame.
        TensorT<T> d_ep({2, cfg_.text_embed_dim});
        const int d = cfg_.text_embed_dim;
        for (int ni = 0; ni < frames_; ++ni)
            for (int k = 0; k < 2; ++k) {
                const T* src = d_ctx_acc.data() +
                               (static_cast<int64_t>(ni) * ctx_len_ + ctx_len_ - 2 + k) * d;
                T* dst = d_ep.data() + static_cast<int64_t>(k) * d;
                for (int j = 0; j < d; ++j) dst[j] += src[j];
            }
        endpoint_proj_.backward(d_ep, opts);
    }

    nn::ParamList<T> params() {
        nn::ParamList<T> out;
        time_embed_.collect_params("time_embed", out);
        endpoint_proj_.collect_params("endpoint_ctx", out);
        stem_.collect_params("stem", out);
        for (int l = 0; l < cfg_.levels; ++l) {
            const std::string p = "enc" + std::to_string(l);
            enc_res_[static_cast<size_t>(l)].collect_params(p + ".res", out);
            enc_attn_[static_cast<size_t>(l)].collect_params(p + ".attn", out);
            if (l + 1 < cfg_.levels)
                downs_[static_cast<size_t>(l)].collect_params("down" + std::to_string(l), out);
        }
        mid_res0_.collect_params("mid.res0", out);
        mid_attn_.collect_params("mid.attn", out);
        mid_res1_.collect_params("mid.res1", out);
        for (int l = cfg_.levels - 1; l >= 0; --l) {
            const size_t di = static_cast<size_t>(cfg_.levels - 1 - l);
            const std::string p = "dec" + std::to_string(l);
            dec_res_[di].collect_params(p + ".res", out);
            dec_attn_[di].collect_params(p + ".attn", out);
            if (l > 0) ups_[di].collect_params("up" + std::to_string(l), out);
        }
        head_norm_.collect_params("head.norm", out);
        head_conv_.collect_params("head.conv", out);
        return out;
    }

    void zero_grads() {
        for (auto& np : params()) np.param->zero_grad();
    }

    /// Temporal attention maps captured by the last capture_attention forward,
    /// one entry per attention stack in forward order. Debug only.
    std::vector<const TensorT<T>*> captured_temporal_attention() const {
        std::vector<const TensorT<T>*> maps;
        for (const auto& a : enc_attn_) maps.push_back(&a.temporal.captured_attention());
        maps.push_back(&mid_attn_.temporal.captured_attention());
        for (const auto& a : dec_attn_) maps.push_back(&a.temporal.captured_attention());
        return maps;
    }

private:
    struct HookBase {
        bool rotate = false;
        bool use_backward_vo = false;
        bool lora_grads = false;
        bool training = false;
        bool capture = false;
    };

    HookBase make_hooks(const DenoiseFlagsT<T>& flags) const {
        HookBase hb;
        hb.rotate = flags.rotate_attention;
        hb.use_backward_vo = flags.use_backward_vo;
        hb.lora_grads = flags.lora_grads;
        hb.training = flags.training;
        hb.capture = flags.capture_attention;
        return hb;
    }

    typename nn::AttnTriple<T>::Hooks block_hooks(const HookBase& hb, const std::string& block,
                                                  const DenoiseFlagsT<T>& flags) const {
        typename nn::AttnTriple<T>::Hooks hooks;
        hooks.rotate = hb.rotate;
        hooks.use_backward_vo = hb.use_backward_vo;
        hooks.lora_grads = hb.lora_grads;
        hooks.training = hb.training;
        hooks.capture_attention = hb.capture;
        if (flags.lora && !flags.lora->per_frame.empty()) {
            auto resolve = [&](const std::string& leaf, std::vector<nn::LoraMats<T>*>& out) {
                bool any = false;
                out.assign(static_cast<size_t>(frames_), nullptr);
                for (int ni = 0; ni < frames_; ++ni) {
                    LoraAdapterT<T>* a = flags.lora->for_frame(ni);
                    if (!a) continue;
                    if (auto* lm = a->find(block + "." + leaf)) {
                        out[static_cast<size_t>(ni)] = lm;
                        any = true;
                    }
                }
                if (!any) out.clear();
            };
            resolve("spatial.v", hooks.lora_sv);
            resolve("spatial.o", hooks.lora_so);
            resolve("cross.v", hooks.lora_cv);
            resolve("cross.o", hooks.lora_co);
        }
        return hooks;
    }

    /// Per-frame context tokens: text tokens padded to a common length, plus
    /// the two projected endpoint tokens. Returns ([N*Lk, d], Lk).
    std::pair<TensorT<T>, int> assemble_context(const std::vector<TextEmbedding>& ctx,
                                                const ConditioningT<T>& cond, int n, bool training) {
        const int d = cfg_.text_embed_dim;
        int max_len = 1;
        for (const auto& e : ctx) {
            require(e.dim() == d, "denoise: ctx embedding dim mismatch");
            max_len = std::max(max_len, e.length());
        }
        // Pooled endpoint latents -> two context tokens.
        const int c = cfg_.latent_channels;
        const int64_t plane = static_cast<int64_t>(cond.first_latent.dim(1)) * cond.first_latent.dim(2);
        TensorT<T> pooled({2, c});
        for (int k = 0; k < 2; ++k) {
            const TensorT<T>& src = k == 0 ? cond.first_latent : cond.last_latent;
            for (int ci = 0; ci < c; ++ci) {
                double s = 0;
                const T* p = src.data() + static_cast<int64_t>(ci) * plane;
                for (int64_t i = 0; i < plane; ++i) s += p[i];
                pooled.at(k, ci) = static_cast<T>(s / static_cast<double>(plane));
            }
        }
        auto ep_tokens = endpoint_proj_.forward(pooled, training);  // [2, d]

        const int lk = max_len + 2;
        TensorT<T> tokens({n * lk, d});
        for (int ni = 0; ni < n; ++ni) {
            const TextEmbedding& e = ctx.size() == 1 ? ctx[0] : ctx[static_cast<size_t>(ni)];
            for (int i = 0; i < max_len; ++i) {
                T* dst = tokens.data() + (static_cast<int64_t>(ni) * lk + i) * d;
                if (i < e.length()) {
                    for (int j = 0; j < d; ++j) dst[j] = static_cast<T>(e.tokens.at(i, j));
                }  // else rows stay zero
            }
            for (int k = 0; k < 2; ++k) {
                T* dst = tokens.data() + (static_cast<int64_t>(ni) * lk + max_len + k) * d;
                const T* src = ep_tokens.data() + static_cast<int64_t>(k) * d;
                std::copy(src, src + d, dst);
            }
        }
        return {std::move(tokens), lk};
    }

    void maybe_tap(const DenoiseFlagsT<T>& flags, FeatureTapT<T>* tap_out, const std::string& name,
                   const TensorT<T>& x) const {
        if (tap_out && flags.tap == name) {
            tap_out->layer = name;
            tap_out->activation = x;
        }
    }

    TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
        const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
        TensorT<T> out({n, ca + cb, h, w});
        const int64_t plane = static_cast<int64_t>(h) * w;
        for (int ni = 0; ni < n; ++ni) {
            std::copy(&a.at(ni, 0, 0, 0), &a.at(ni, 0, 0, 0) + ca * plane, &out.at(ni, 0, 0, 0));
            std::copy(&b.at(ni, 0, 0, 0), &b.at(ni, 0, 0, 0) + cb * plane,
                      out.data() + (static_cast<int64_t>(ni) * (ca + cb) + ca) * plane);
        }
        return out;
    }

    std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>& d) {
        const int n = d.dim(0), ct = d.dim(1), h = d.dim(2), w = d.dim(3);
        const int c1 = ct / 2;  // decoder concats always pair equal widths
        TensorT<T> da({n, c1, h, w}), db({n, ct - c1, h, w});
        const int64_t plane = static_cast<int64_t>(h) * w;
        for (int ni = 0; ni < n; ++ni) {
            const T* src = &d.at(ni, 0, 0, 0);
            std::copy(src, src + c1 * plane, &da.at(ni, 0, 0, 0));
            std::copy(src + c1 * plane, src + ct * plane, &db.at(ni, 0, 0, 0));
        }
        return {std::move(da), std::move(db)};
    }

    void accumulate_ctx(TensorT<T>& acc, const TensorT<T>& d) {
        if (acc.empty())
            acc = d;
        else
            acc.add_(d);
    }

    DenoiserConfig cfg_;
    nn::TimeEmbed<T> time_embed_;
    nn::Linear<T> endpoint_proj_;
    nn::Conv2d<T> stem_;
    std::vector<nn::ResBlock<T>> enc_res_;
    std::vector<nn::AttnTriple<T>> enc_attn_;
    std::vector<nn::Conv2d<T>> downs_;
    nn::ResBlock<T> mid_res0_, mid_res1_;
    nn::AttnTriple<T> mid_attn_;
    std::vector<nn::ResBlock<T>> dec_res_;
    std::vector<nn::AttnTriple<T>> dec_attn_;
    std::vector<nn::Upsample<T>> ups_;
    nn::GroupNorm<T> head_norm_;
    nn::SiLU<T> head_act_;
    nn::Conv2d<T> head_conv_;

    // forward-pass bookkeeping for backward()
    TensorT<T> temb_cache_;
    std::string tap_name_cache_;
    int frames_ = 0;
    int ctx_len_ = 0;
};

using Denoiser = DenoiserT<float>;

}  // namespace vtg
