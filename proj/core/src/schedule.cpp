#include "vtg/schedule.hpp"

#include <cmath>

namespace vtg {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "scaled_linear") return ScheduleKind::scaled_linear;
    fail("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::linear ? "linear" : "scaled_linear";
}

NoiseSchedule make_schedule(int total_steps, double beta_start, double beta_end,
                            ScheduleKind kind) {
    require(total_steps >= 1, "make_schedule: total_steps must be >= 1");
    require(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end,
            "make_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.total_steps = total_steps;
    s.kind = kind;
    s.betas.resize(static_cast<size_t>(total_steps));

    if (total_steps == 1) {
        s.betas[0] = beta_start;
    } else {
        for (int t = 0; t < total_steps; ++t) {
            const double u = static_cast<double>(t) / (total_steps - 1);
            if (kind == ScheduleKind::linear) {
                s.betas[static_cast<size_t>(t)] = beta_start + u * (beta_end - beta_start);
            } else {
                const double r = std::sqrt(beta_start) + u * (std::sqrt(beta_end) - std::sqrt(beta_start));
                s.betas[static_cast<size_t>(t)] = r * r;
            }
        }
    }

    s.alphas.resize(s.betas.size());
    s.alpha_bars.resize(s.betas.size());
    double prod = 1.0;
    for (size_t i = 0; i < s.betas.size(); ++i) {
        s.alphas[i] = 1.0 - s.betas[i];
        prod *= s.alphas[i];
        s.alpha_bars[i] = prod;
        if (!(s.betas[i] > 0.0 && s.betas[i] < 1.0)) fail("make_schedule: beta out of (0,1)");
        if (i > 0 && s.alpha_bars[i] >= s.alpha_bars[i - 1])
            fail("make_schedule: alpha_bar not strictly decreasing");
    }
    return s;
}

std::vector<int> sample_timesteps(int train_steps, int sample_steps) {
    require(sample_steps >= 1 && sample_steps <= train_steps,
            "sample_timesteps: need 1 <= S <= T");
    std::vector<int> ts;
    ts.reserve(static_cast<size_t>(sample_steps) + 1);
    for (int k = sample_steps; k >= 1; --k) {
        const double pos = static_cast<double>(k) * train_steps / sample_steps;
        int t = static_cast<int>(std::lround(pos));
        t = std::max(1, std::min(train_steps, t));
        if (!ts.empty() && t >= ts.back()) t = ts.back() - 1;
        require(t >= 1, "sample_timesteps: too many steps for schedule");
        ts.push_back(t);
    }
    ts.push_back(0);
    return ts;
}

}  // namespace vtg
