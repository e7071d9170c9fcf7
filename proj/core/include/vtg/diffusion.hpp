#pragma once

#include <string>

#include "vtg/schedule.hpp"
#include "vtg/tensor.hpp"

namespace vtg {

/// A latent video is a [N, C, h, w] tensor of frame latents. Plain tensors
/// are used throughout; transition-level entry points validate this contract.
template <typename T>
void check_latent_video(const TensorT<T>& z, int min_frames = 2) {
    require(z.rank() == 4, "latent video must be rank-4 [N,C,h,w]");
    require(z.dim(0) >= min_frames, "latent video needs at least " + std::to_string(min_frames) + " frames");
    if (!z.all_finite()) fail("latent video contains non-finite values");
}

/// Forward corruption: sqrt(abar_t) z0 + sqrt(1-abar_t) eps.
template <typename T>
TensorT<T> add_noise(const TensorT<T>& z0, const TensorT<T>& eps, int t, const NoiseSchedule& s) {
    require(z0.same_shape(eps), "add_noise: z0/eps shape mismatch");
    s.check_timestep(t);
    const T a = static_cast<T>(std::sqrt(s.alpha_bar(t)));
    const T b = static_cast<T>(std::sqrt(1.0 - s.alpha_bar(t)));
    TensorT<T> out(z0.shape());
    for (int64_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

/// Deterministic DDIM update t -> t_prev (t_prev < t):
///   z0_hat  = (z_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t)
///   z_prev  = sqrt(abar_prev) z0_hat + sqrt(1-abar_prev) eps_hat
template <typename T>
TensorT<T> ddim_step(const TensorT<T>& z_t, const TensorT<T>& eps_hat, int t, int t_prev,
                     const NoiseSchedule& s) {
    require(z_t.same_shape(eps_hat), "ddim_step: shape mismatch");
    s.check_timestep(t);
    require(t_prev >= 0 && t_prev < t, "ddim_step: need 0 <= t_prev < t");
    const double abar_t = s.alpha_bar(t);
    const double abar_p = s.alpha_bar(t_prev);
    require(abar_t > 0.0, "ddim_step: degenerate alpha_bar");
    const T inv_sa = static_cast<T>(1.0 / std::sqrt(abar_t));
    const T sb_t = static_cast<T>(std::sqrt(1.0 - abar_t));
    const T sa_p = static_cast<T>(std::sqrt(abar_p));
    const T sb_p = static_cast<T>(std::sqrt(1.0 - abar_p));
    TensorT<T> out(z_t.shape());
    for (int64_t i = 0; i < z_t.size(); ++i) {
        const T z0_hat = (z_t[i] - sb_t * eps_hat[i]) * inv_sa;
        out[i] = sa_p * z0_hat + sb_p * eps_hat[i];
    }
    return out;
}

/// DDIM inversion step t -> t_next (t_next > t); the same recurrence with the
/// timesteps exchanged, so step(invert(z)) with identical eps_hat is identity.
template <typename T>
TensorT<T> ddim_invert_step(const TensorT<T>& z_t, const TensorT<T>& eps_hat, int t, int t_next,
                            const NoiseSchedule& s) {
    require(z_t.same_shape(eps_hat), "ddim_invert_step: shape mismatch");
    require(t >= 0 && t_next > t, "ddim_invert_step: need t_next > t >= 0");
    s.check_timestep(t_next);
    const double abar_t = s.alpha_bar(t);
    const double abar_n = s.alpha_bar(t_next);
    require(abar_t > 0.0, "ddim_invert_step: degenerate alpha_bar");
    const T inv_sa = static_cast<T>(1.0 / std::sqrt(abar_t));
    const T sb_t = static_cast<T>(std::sqrt(1.0 - abar_t));
    const T sa_n = static_cast<T>(std::sqrt(abar_n));
    const T sb_n = static_cast<T>(std::sqrt(1.0 - abar_n));
    TensorT<T> out(z_t.shape());
    for (int64_t i = 0; i < z_t.size(); ++i) {
        const T z0_hat = (z_t[i] - sb_t * eps_hat[i]) * inv_sa;
        out[i] = sa_n * z0_hat + sb_n * eps_hat[i];
    }
    return out;
}

struct GuidanceConfig {
    double scale = 1.0;  // w >= 0; w == 1 reduces exactly to the conditional branch
    std::string negative_prompt;
};

/// Classifier-free guidance: eps_u + w (eps_c - eps_u). The w == 1 case is
/// returned as eps_cond verbatim so callers may skip the unconditional pass.
template <typename T>
TensorT<T> cfg_combine(const TensorT<T>& eps_cond, const TensorT<T>& eps_uncond,
                       const GuidanceConfig& g) {
    require(eps_cond.same_shape(eps_uncond), "cfg_combine: shape mismatch");
    require(g.scale >= 0.0, "cfg_combine: guidance scale must be >= 0");
    if (g.scale == 1.0) return eps_cond;
    const T w = static_cast<T>(g.scale);
    TensorT<T> out(eps_cond.shape());
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = eps_uncond[i] + w * (eps_cond[i] - eps_uncond[i]);
    return out;
}

}  // namespace vtg
