#pragma once

#include <string>
#include <vector>

#include "vtg/common.hpp"

namespace vtg {

enum class ScheduleKind { linear, scaled_linear };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

/// Per-timestep corruption tables. Timesteps are 1-based: betas[t-1] is the
/// noise strength at step t, alpha_bar(t) the cumulative signal retention,
/// with alpha_bar(0) == 1 (clean).
struct NoiseSchedule {
    int total_steps = 0;  // T
    ScheduleKind kind = ScheduleKind::linear;
    std::vector<double> betas;       // size T
    std::vector<double> alphas;      // 1 - beta
    std::vector<double> alpha_bars;  // running products

    double beta(int t) const { return betas[static_cast<size_t>(t - 1)]; }
    double alpha(int t) const { return alphas[static_cast<size_t>(t - 1)]; }

    /// alpha_bar with the t == 0 extension (no corruption).
    double alpha_bar(int t) const {
        if (t == 0) return 1.0;
        return alpha_bars[static_cast<size_t>(t - 1)];
    }

    void check_timestep(int t) const {
        require(t >= 1 && t <= total_steps, "timestep out of range [1, T]");
    }
};

/// Build the beta/alpha/alpha_bar tables. `linear` spaces beta uniformly,
/// `scaled_linear` spaces sqrt(beta) uniformly (the latent-diffusion default).
NoiseSchedule make_schedule(int total_steps, double beta_start, double beta_end, ScheduleKind kind);

/// Uniform-stride inference timesteps, descending: round(k*T/S) for k = S..1,
/// followed by the terminal 0. Size S+1.
std::vector<int> sample_timesteps(int train_steps, int sample_steps);

}  // namespace vtg
