#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "vtg/diffusion.hpp"
#include "vtg/rng.hpp"

using namespace vtg;

namespace {

TensorD random_latent(Rng& rng, int n = 2, int c = 3, int h = 4, int w = 4) {
    return rng.gaussian_tensor<double>({n, c, h, w});
}

// Independent elementwise oracle for the forward corruption.
TensorD add_noise_oracle(const TensorD& z0, const TensorD& eps, double abar) {
    TensorD out(z0.shape());
    for (int64_t i = 0; i < z0.size(); ++i)
        out[i] = std::sqrt(abar) * z0[i] + std::sqrt(1.0 - abar) * eps[i];
    return out;
}

// Independent two-line oracle: predict z0, recombine at the target step.
TensorD ddim_oracle(const TensorD& z, const TensorD& eps, double abar_from, double abar_to) {
    TensorD out(z.shape());
    for (int64_t i = 0; i < z.size(); ++i) {
        const double z0 = (z[i] - std::sqrt(1.0 - abar_from) * eps[i]) / std::sqrt(abar_from);
        out[i] = std::sqrt(abar_to) * z0 + std::sqrt(1.0 - abar_to) * eps[i];
    }
    return out;
}

}  // namespace

TEST_CASE("add_noise zero-noise limit returns z0") {
    // beta so small that alpha_bar rounds to exactly 1 in double
    auto s = make_schedule(1, 1e-18, 1e-18, ScheduleKind::linear);
    REQUIRE(s.alpha_bar(1) == 1.0);
    Rng rng(7);
    auto z0 = random_latent(rng);
    auto eps = random_latent(rng);
    auto out = add_noise(z0, eps, 1, s);
    CHECK(bitwise_equal(out, z0));
}

TEST_CASE("add_noise at alpha_bar 0.25 halves z0 when eps is zero") {
    auto s = make_schedule(1, 0.75, 0.75, ScheduleKind::linear);
    REQUIRE(s.alpha_bar(1) == 0.25);
    Rng rng(8);
    auto z0 = random_latent(rng);
    TensorD eps(z0.shape());
    auto out = add_noise(z0, eps, 1, s);
    for (int64_t i = 0; i < z0.size(); ++i) CHECK(out[i] == 0.5 * z0[i]);
}

TEST_CASE("add_noise matches the elementwise oracle at alpha_bar 0.72") {
    auto s = make_schedule(2, 0.1, 0.2, ScheduleKind::linear);
    REQUIRE(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-15));
    Rng rng(9);
    auto z0 = random_latent(rng);
    auto eps = random_latent(rng);
    auto out = add_noise(z0, eps, 2, s);
    auto oracle = add_noise_oracle(z0, eps, s.alpha_bar(2));
    CHECK(max_abs_diff(out, oracle) < 1e-12);
}

TEST_CASE("add_noise errors") {
    auto s = make_schedule(4, 0.1, 0.2, ScheduleKind::linear);
    Rng rng(1);
    auto z0 = random_latent(rng);
    auto eps = rng.gaussian_tensor<double>({2, 3, 4, 5});
    CHECK_THROWS(add_noise(z0, eps, 1, s));
    auto eps_ok = random_latent(rng);
    CHECK_THROWS(add_noise(z0, eps_ok, 0, s));
    CHECK_THROWS(add_noise(z0, eps_ok, 5, s));
}

TEST_CASE("add_noise is linear in (z0, eps)") {
    auto s = make_schedule(10, 0.01, 0.1, ScheduleKind::scaled_linear);
    Rng rng(10);
    auto z0 = random_latent(rng);
    auto eps = random_latent(rng);
    const double a = -2.75;
    auto lhs = add_noise(z0 * a, eps * a, 6, s);
    auto rhs = add_noise(z0, eps, 6, s) * a;
    CHECK(max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("ddim_step recovers the exact corruption when eps_hat equals eps") {
    auto s = make_schedule(10, 0.01, 0.1, ScheduleKind::scaled_linear);
    Rng rng(11);
    auto z0 = random_latent(rng);
    auto eps = random_latent(rng);
    auto z_t = add_noise(z0, eps, 8, s);
    auto z_prev = ddim_step(z_t, eps, 8, 3, s);
    auto expected = add_noise(z0, eps, 3, s);
    CHECK(max_abs_diff(z_prev, expected) < 1e-12);
    // stepping all the way to 0 recovers z0
    auto z_zero = ddim_step(z_t, eps, 8, 0, s);
    CHECK(max_abs_diff(z_zero, z0) < 1e-12);
}

TEST_CASE("ddim_step with equal alpha_bar is a no-op") {
    NoiseSchedule s;
    s.total_steps = 2;
    s.betas = {0.5, 0.0};
    s.alphas = {0.5, 1.0};
    s.alpha_bars = {0.5, 0.5};
    Rng rng(12);
    auto z = random_latent(rng);
    auto eps = random_latent(rng);
    auto out = ddim_step(z, eps, 2, 1, s);
    CHECK(max_abs_diff(out, z) < 1e-12);
}

TEST_CASE("ddim_step matches the two-line oracle on random inputs") {
    auto s = make_schedule(100, 8.5e-4, 0.012, ScheduleKind::scaled_linear);
    Rng rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        auto z = random_latent(rng);
        auto eps = random_latent(rng);
        const int t = static_cast<int>(rng.uniform_int(2, 100));
        const int t_prev = static_cast<int>(rng.uniform_int(0, t - 1));
        auto out = ddim_step(z, eps, t, t_prev, s);
        auto oracle = ddim_oracle(z, eps, s.alpha_bar(t), s.alpha_bar(t_prev));
        CHECK(max_abs_diff(out, oracle) < 1e-12);
    }
}

TEST_CASE("ddim_step rejects bad timesteps") {
    auto s = make_schedule(10, 0.01, 0.1, ScheduleKind::linear);
    Rng rng(14);
    auto z = random_latent(rng);
    auto eps = random_latent(rng);
    CHECK_THROWS(ddim_step(z, eps, 3, 3, s));
    CHECK_THROWS(ddim_step(z, eps, 3, 5, s));
    CHECK_THROWS(ddim_invert_step(z, eps, 5, 3, s));
    CHECK_THROWS(ddim_invert_step(z, eps, 5, 5, s));
}

TEST_CASE("invert then step with identical eps_hat is the identity") {
    auto s = make_schedule(1000, 8.5e-4, 0.012, ScheduleKind::scaled_linear);
    Rng rng(15);
    for (int rep = 0; rep < 50; ++rep) {
        auto z = random_latent(rng);
        auto eps = random_latent(rng);
        const int t = static_cast<int>(rng.uniform_int(0, 999));
        const int t_next = static_cast<int>(rng.uniform_int(t + 1, 1000));
        auto up = ddim_invert_step(z, eps, t, t_next, s);
        auto back = ddim_step(up, eps, t_next, t, s);
        CHECK(max_abs_diff(back, z) < 1e-10);
    }
}

TEST_CASE("inversion with zero eps_hat is pure rescaling") {
    auto s = make_schedule(100, 1e-3, 0.02, ScheduleKind::linear);
    Rng rng(16);
    auto z = random_latent(rng);
    TensorD eps(z.shape());
    const int t = 10, t_next = 60;
    auto out = ddim_invert_step(z, eps, t, t_next, s);
    const double scale = std::sqrt(s.alpha_bar(t_next) / s.alpha_bar(t));
    for (int64_t i = 0; i < z.size(); ++i)
        CHECK(out[i] == doctest::Approx(scale * z[i]).epsilon(1e-12));
}

TEST_CASE("cfg_combine endpoints and scalar expansion") {
    Rng rng(17);
    auto ec = random_latent(rng);
    auto eu = random_latent(rng);
    GuidanceConfig g;

    g.scale = 1.0;
    CHECK(bitwise_equal(cfg_combine(ec, eu, g), ec));

    g.scale = 0.0;
    CHECK(bitwise_equal(cfg_combine(ec, eu, g), eu));

    TensorD ones(ec.shape());
    ones.fill(1.0);
    TensorD zeros(ec.shape());
    g.scale = 7.5;
    auto out = cfg_combine(ones, zeros, g);
    for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == 7.5);
}

TEST_CASE("cfg_combine with equal branches returns that value for any scale") {
    Rng rng(18);
    auto e = random_latent(rng);
    for (double w : {0.0, 0.3, 1.0, 2.5, 11.0}) {
        GuidanceConfig g;
        g.scale = w;
        CHECK(bitwise_equal(cfg_combine(e, e, g), e));
    }
}

TEST_CASE("cfg_combine rejects shape mismatch and negative scale") {
    Rng rng(19);
    auto a = random_latent(rng);
    auto b = rng.gaussian_tensor<double>({2, 3, 4, 5});
    GuidanceConfig g;
    CHECK_THROWS(cfg_combine(a, b, g));
    g.scale = -0.5;
    auto c = random_latent(rng);
    CHECK_THROWS(cfg_combine(a, a, g));
    (void)c;
}
