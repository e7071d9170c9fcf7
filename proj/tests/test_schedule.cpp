#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "vtg/schedule.hpp"

using namespace vtg;

namespace {

// Independent running-product oracle for alpha_bar tables.
std::vector<double> alpha_bar_oracle(const std::vector<double>& betas) {
    std::vector<double> out(betas.size());
    double prod = 1.0;
    for (size_t i = 0; i < betas.size(); ++i) {
        prod *= 1.0 - betas[i];
        out[i] = prod;
    }
    return out;
}

}  // namespace

TEST_CASE("single-step schedule") {
    auto s = make_schedule(1, 0.1, 0.1, ScheduleKind::linear);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar(0) == 1.0);
}

TEST_CASE("two-step linear schedule") {
    auto s = make_schedule(2, 0.1, 0.2, ScheduleKind::linear);
    CHECK(s.beta(1) == doctest::Approx(0.1));
    CHECK(s.beta(2) == doctest::Approx(0.2));
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-15));
}

TEST_CASE("scaled_linear 50-step table matches the running-product oracle") {
    auto s = make_schedule(50, 8.5e-4, 0.012, ScheduleKind::scaled_linear);
    auto oracle = alpha_bar_oracle(s.betas);
    for (int t = 1; t <= 50; ++t)
        CHECK(std::abs(s.alpha_bar(t) - oracle[static_cast<size_t>(t - 1)]) < 1e-12);
}

TEST_CASE("schedule invariants hold for both kinds and several sizes") {
    for (auto kind : {ScheduleKind::linear, ScheduleKind::scaled_linear}) {
        for (int t_total : {1, 2, 7, 50, 1000}) {
            auto s = make_schedule(t_total, 8.5e-4, 0.012, kind);
            REQUIRE(static_cast<int>(s.betas.size()) == t_total);
            for (int t = 1; t <= t_total; ++t) {
                CHECK(s.beta(t) > 0.0);
                CHECK(s.beta(t) < 1.0);
                if (t > 1) CHECK(s.beta(t) >= s.beta(t - 1));  // nondecreasing
                CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));    // strictly decreasing
            }
            auto oracle = alpha_bar_oracle(s.betas);
            for (int t = 1; t <= t_total; ++t)
                CHECK(std::abs(s.alpha_bar(t) - oracle[static_cast<size_t>(t - 1)]) < 1e-12);
        }
    }
}

TEST_CASE("schedule rejects bad arguments") {
    CHECK_THROWS(make_schedule(0, 0.1, 0.2, ScheduleKind::linear));
    CHECK_THROWS(make_schedule(-3, 0.1, 0.2, ScheduleKind::linear));
    CHECK_THROWS(make_schedule(10, 0.0, 0.2, ScheduleKind::linear));
    CHECK_THROWS(make_schedule(10, 0.3, 0.2, ScheduleKind::linear));
    CHECK_THROWS(make_schedule(10, 0.1, 1.0, ScheduleKind::linear));
}

TEST_CASE("uniform-stride sample timesteps") {
    auto ts = sample_timesteps(1000, 50);
    REQUIRE(ts.size() == 51);
    CHECK(ts.front() == 1000);
    CHECK(ts[1] == 980);
    CHECK(ts[49] == 20);
    CHECK(ts.back() == 0);
    for (size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);

    auto full = sample_timesteps(50, 50);
    REQUIRE(full.size() == 51);
    for (int k = 0; k <= 50; ++k) CHECK(full[static_cast<size_t>(k)] == 50 - k);
}

TEST_CASE("schedule kind string round trip") {
    CHECK(schedule_kind_from_string("linear") == ScheduleKind::linear);
    CHECK(schedule_kind_from_string("scaled_linear") == ScheduleKind::scaled_linear);
    CHECK(to_string(ScheduleKind::scaled_linear) == "scaled_linear");
    CHECK_THROWS(schedule_kind_from_string("cosine"));
}
