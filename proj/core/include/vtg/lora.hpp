#pragma once

#include <map>
#include <string>
#include <vector>

#include "vtg/nn_attention.hpp"

namespace vtg {

/// Low-rank weight deltas per adapted layer, trained per endpoint frame and
/// interpolated per output frame. A fresh adapter has all up matrices zero,
/// so it behaves as the identity.
template <typename T>
struct LoraAdapterT {
    int rank = 16;
    std::map<std::string, nn::LoraMats<T>> layers;  // keyed by target layer name

    nn::LoraMats<T>* find(const std::string& name) {
        auto it = layers.find(name);
        return it == layers.end() ? nullptr : &it->second;
    }

    void zero_grads() {
        for (auto& [name, lm] : layers) {
            lm.down.zero_grad();
            lm.up.zero_grad();
        }
    }

    nn::ParamList<T> params() {
        nn::ParamList<T> out;
        for (auto& [name, lm] : layers) {
            nn::collect(out, name + ".down", lm.down);
            nn::collect(out, name + ".up", lm.up);
        }
        return out;
    }
};

using LoraAdapter = LoraAdapterT<float>;

/// Per-frame adapter assignment for a denoise call; size 1 broadcasts.
template <typename T>
struct FrameLorasT {
    std::vector<LoraAdapterT<T>*> per_frame;

    static FrameLorasT broadcast(LoraAdapterT<T>* a) { return FrameLorasT{{a}}; }

    LoraAdapterT<T>* for_frame(int n) const {
        if (per_frame.empty()) return nullptr;
        return per_frame.size() == 1 ? per_frame[0] : per_frame[static_cast<size_t>(n)];
    }
};

using FrameLoras = FrameLorasT<float>;

/// Fresh adapter over the given target layers. Down matrices get a small
/// Gaussian init, up matrices start at zero (identity behavior).
template <typename T>
LoraAdapterT<T> make_lora_adapter(const std::map<std::string, std::pair<int, int>>& target_dims,
                                  int rank, uint64_t seed, double scaling = 1.0) {
    require(rank >= 1, "lora: rank must be >= 1");
    LoraAdapterT<T> a;
    a.rank = rank;
    Rng rng(seed);
    for (const auto& [name, dims] : target_dims) {
        const auto [in_dim, out_dim] = dims;
        require(rank <= in_dim && rank <= out_dim,
                "lora: rank exceeds layer dimension for " + name);
        nn::LoraMats<T> lm;
        lm.down.init({rank, in_dim});
        nn::init_fan_in(lm.down.value, in_dim, rng);
        lm.up.init({out_dim, rank});  // zero
        lm.scaling = static_cast<T>(scaling);
        a.layers.emplace(name, std::move(lm));
    }
    return a;
}

/// Linear weight-space interpolation: every matrix (1-lam) a1 + lam aN.
template <typename T>
LoraAdapterT<T> interp_lora(const LoraAdapterT<T>& a1, const LoraAdapterT<T>& aN, double lam) {
    require(lam >= 0.0 && lam <= 1.0, "interp_lora: lam must be in [0,1]");
    require(a1.rank == aN.rank, "interp_lora: rank mismatch");
    require(a1.layers.size() == aN.layers.size(), "interp_lora: target set mismatch");
    LoraAdapterT<T> out;
    out.rank = a1.rank;
    const T w1 = static_cast<T>(1.0 - lam), wN = static_cast<T>(lam);
    for (const auto& [name, lm1] : a1.layers) {
        auto it = aN.layers.find(name);
        require(it != aN.layers.end(), "interp_lora: missing target " + name);
        const auto& lmN = it->second;
        require(lm1.down.value.same_shape(lmN.down.value) && lm1.up.value.same_shape(lmN.up.value),
                "interp_lora: shape mismatch at " + name);
        nn::LoraMats<T> lm;
        lm.scaling = lm1.scaling;
        lm.down.init(lm1.down.value.shape());
        lm.up.init(lm1.up.value.shape());
        for (int64_t i = 0; i < lm.down.value.size(); ++i)
            lm.down.value[i] = w1 * lm1.down.value[i] + wN * lmN.down.value[i];
        for (int64_t i = 0; i < lm.up.value.size(); ++i)
            lm.up.value[i] = w1 * lm1.up.value[i] + wN * lmN.up.value[i];
        out.layers.emplace(name, std::move(lm));
    }
    return out;
}

}  // namespace vtg
