#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vtg/rng.hpp"
#include "vtg/transition_init.hpp"

using namespace vtg;

namespace {

double angle_between(const TensorD& a, const TensorD& b) {
    double c = a.dot(b) / (a.norm2() * b.norm2());
    c = std::max(-1.0, std::min(1.0, c));
    return std::acos(c);
}

}  // namespace

TEST_CASE("slerp endpoints are exact") {
    Rng rng(1);
    auto v1 = rng.gaussian_tensor<double>({64});
    auto v2 = rng.gaussian_tensor<double>({64});
    auto at0 = slerp(v1, v2, 0.0);
    auto at1 = slerp(v1, v2, 1.0);
    CHECK(max_abs_diff(at0, v1) < 1e-7);
    CHECK(max_abs_diff(at1, v2) < 1e-7);
}

TEST_CASE("slerp midpoint of orthonormal vectors") {
    TensorD v1({4}), v2({4});
    v1[0] = 1.0;
    v2[1] = 1.0;
    auto mid = slerp(v1, v2, 0.5);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(mid[0] == doctest::Approx(inv_sqrt2).epsilon(1e-12));
    CHECK(mid[1] == doctest::Approx(inv_sqrt2).epsilon(1e-12));
    CHECK(mid[2] == 0.0);
    CHECK(mid.norm2() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("slerp degenerate fallback when v2 == v1") {
    Rng rng(2);
    auto v = rng.gaussian_tensor<double>({32});
    for (double lam : {0.0, 0.25, 0.5, 0.77, 1.0}) {
        auto out = slerp(v, v, lam);
        CHECK(max_abs_diff(out, v) < 1e-12);
    }
}

TEST_CASE("slerp norm preservation and symmetry over random unit vectors") {
    Rng rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        auto v1 = rng.gaussian_tensor<double>({48});
        auto v2 = rng.gaussian_tensor<double>({48});
        v1.scale_(1.0 / v1.norm2());
        v2.scale_(1.0 / v2.norm2());
        const double lam = rng.uniform();
        auto a = slerp(v1, v2, lam);
        CHECK(std::abs(a.norm2() - 1.0) < 1e-6);  // great-circle property
        auto b = slerp(v2, v1, 1.0 - lam);
        CHECK(max_abs_diff(a, b) < 1e-7);
    }
}

TEST_CASE("slerp input validation") {
    TensorD z({4});  // zero vector
    TensorD v({4});
    v[0] = 1.0;
    CHECK_THROWS(slerp(z, v, 0.5));
    CHECK_THROWS(slerp(v, z, 0.5));
    TensorD w({5});
    w[0] = 1.0;
    CHECK_THROWS(slerp(v, w, 0.5));
    auto neg = v * -1.0;  // antiparallel: no unique geodesic
    CHECK_THROWS(slerp(v, neg, 0.5));
}

TEST_CASE("interp coeffs: uniform and cosine spacing") {
    auto c = make_interp_coeffs(5, 0.4, LambdaSpacing::uniform);
    CHECK(c.lambda_noise.front() == 0.0);
    CHECK(c.lambda_noise.back() == 1.0);
    CHECK(c.lambda_noise[2] == doctest::Approx(0.5));
    for (size_t i = 1; i < c.lambda_noise.size(); ++i)
        CHECK(c.lambda_noise[i] >= c.lambda_noise[i - 1]);

    auto cc = make_interp_coeffs(9, 0.4, LambdaSpacing::cosine);
    CHECK(cc.lambda_noise.front() == 0.0);
    CHECK(cc.lambda_noise.back() == 1.0);
    CHECK(cc.lambda_noise[4] == doctest::Approx(0.5));
    for (size_t i = 1; i < cc.lambda_noise.size(); ++i)
        CHECK(cc.lambda_noise[i] >= cc.lambda_noise[i - 1]);

    CHECK_THROWS(make_interp_coeffs(1, 0.4));
    CHECK_THROWS(make_interp_coeffs(8, 1.5));
}

TEST_CASE("build_initial_latents with N=2 returns exactly the endpoints") {
    Rng rng(4);
    auto z1 = rng.gaussian_tensor<double>({3, 4, 4});
    auto zN = rng.gaussian_tensor<double>({3, 4, 4});
    auto out = build_initial_latents(z1, zN, 2, make_interp_coeffs(2, 0.4));
    for (int64_t i = 0; i < z1.size(); ++i) {
        CHECK(out[i] == z1[i]);
        CHECK(out[z1.size() + i] == zN[i]);
    }
}

TEST_CASE("build_initial_latents middle frame of orthonormal endpoints") {
    TensorD z1({1, 1, 4}), zN({1, 1, 4});
    z1.at(0, 0, 0) = 1.0;
    zN.at(0, 0, 1) = 1.0;
    auto out = build_initial_latents(z1, zN, 3, make_interp_coeffs(3, 0.4));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(out.at(1, 0, 0, 0) == doctest::Approx(inv_sqrt2).epsilon(1e-12));
    CHECK(out.at(1, 0, 0, 1) == doctest::Approx(inv_sqrt2).epsilon(1e-12));
}

TEST_CASE("build_initial_latents norm containment over random draws") {
    // Frame-sized Gaussian endpoints; at this dimensionality intermediate
    // norms stay strictly inside the endpoint range (measured excursion 0).
    Rng rng(5);
    auto coeffs = make_interp_coeffs(16, 0.4);
    for (int rep = 0; rep < 100; ++rep) {
        auto z1 = rng.gaussian_tensor<double>({192, 8, 8});
        auto zN = rng.gaussian_tensor<double>({192, 8, 8});
        auto out = build_initial_latents(z1, zN, 16, coeffs);
        const double lo = std::min(z1.norm2(), zN.norm2());
        const double hi = std::max(z1.norm2(), zN.norm2());
        for (int n = 0; n < 16; ++n) {
            TensorD frame({192, 8, 8});
            std::copy(out.data() + n * frame.size(), out.data() + (n + 1) * frame.size(),
                      frame.data());
            const double nm = frame.norm2();
            CHECK(nm >= lo - 1e-5);
            CHECK(nm <= hi + 1e-5);
        }
    }
}

TEST_CASE("build_initial_latents with equal endpoints yields identical frames") {
    Rng rng(6);
    auto z = rng.gaussian_tensor<double>({2, 3, 3});
    auto out = build_initial_latents(z, z, 7, make_interp_coeffs(7, 0.4));
    for (int n = 0; n < 7; ++n)
        for (int64_t i = 0; i < z.size(); ++i)
            CHECK(out[n * z.size() + i] == doctest::Approx(z[i]).epsilon(1e-12));
}

TEST_CASE("build_initial_latents angle to first endpoint is nondecreasing") {
    Rng rng(7);
    auto z1 = rng.gaussian_tensor<double>({3, 4, 4});
    auto zN = rng.gaussian_tensor<double>({3, 4, 4});
    auto out = build_initial_latents(z1, zN, 12, make_interp_coeffs(12, 0.4));
    double prev = -1.0;
    for (int n = 0; n < 12; ++n) {
        TensorD frame({3, 4, 4});
        std::copy(out.data() + n * frame.size(), out.data() + (n + 1) * frame.size(), frame.data());
        const double ang = angle_between(frame, z1);
        CHECK(ang >= prev - 1e-9);
        prev = ang;
    }
}

TEST_CASE("build_initial_latents rejects N < 2") {
    Rng rng(8);
    auto z = rng.gaussian_tensor<double>({2, 3, 3});
    CHECK_THROWS(build_initial_latents(z, z, 1, make_interp_coeffs(2, 0.4)));
}

TEST_CASE("frame_text_embeddings endpoints and degenerate case") {
    TextEncoder enc(32);
    auto c1 = enc.encode("a red circle");
    auto cN = enc.encode("a blue square drifting right");
    auto coeffs = make_interp_coeffs(4, 0.4);
    auto seq = frame_text_embeddings(c1, cN, 4, coeffs, enc);
    REQUIRE(seq.size() == 4);
    CHECK(bitwise_equal(seq.front().tokens, c1.tokens));
    CHECK(bitwise_equal(seq.back().tokens, cN.tokens));
    // intermediates are padded to the longer caption
    CHECK(seq[1].length() == cN.length());

    auto same = frame_text_embeddings(c1, c1, 5, make_interp_coeffs(5, 0.4), enc);
    for (const auto& e : same)
        for (int i = 0; i < e.length(); ++i)
            for (int j = 0; j < e.dim(); ++j)
                CHECK(e.tokens.at(i, j) ==
                      doctest::Approx(c1.tokens.at(i, j)).epsilon(1e-6));
}

TEST_CASE("frame_text_embeddings midpoint of orthonormal token rows") {
    TextEncoder enc(4);
    TextEmbedding c1, cN;
    c1.tokens = Tensor({1, 4});
    cN.tokens = Tensor({1, 4});
    c1.tokens.at(0, 0) = 1.0f;
    cN.tokens.at(0, 1) = 1.0f;
    auto seq = frame_text_embeddings(c1, cN, 3, make_interp_coeffs(3, 0.4), enc);
    const float inv_sqrt2 = static_cast<float>(1.0 / std::sqrt(2.0));
    CHECK(seq[1].tokens.at(0, 0) == doctest::Approx(inv_sqrt2).epsilon(1e-6));
    CHECK(seq[1].tokens.at(0, 1) == doctest::Approx(inv_sqrt2).epsilon(1e-6));
}

TEST_CASE("should_inject cutoff arithmetic") {
    auto all_off = make_interp_coeffs(4, 0.0);
    auto all_on = make_interp_coeffs(4, 1.0);
    auto c04 = make_interp_coeffs(4, 0.4);
    for (int i = 0; i < 50; ++i) {
        CHECK_FALSE(should_inject(i, 50, all_off));
        CHECK(should_inject(i, 50, all_on));
        CHECK(should_inject(i, 50, c04) == (i < 20));
    }
    CHECK_THROWS(should_inject(50, 50, c04));
    CHECK_THROWS(should_inject(-1, 50, c04));
}

TEST_CASE("inject_weight decays linearly to zero at the cutoff") {
    auto c = make_interp_coeffs(4, 0.4);
    CHECK(inject_weight(0, 50, c) == doctest::Approx(1.0));
    CHECK(inject_weight(10, 50, c) == doctest::Approx(0.5));
    CHECK(inject_weight(19, 50, c) == doctest::Approx(1.0 - 19.0 / 20.0));
    CHECK(inject_weight(20, 50, c) == 0.0);
    CHECK(inject_weight(49, 50, c) == 0.0);
}
