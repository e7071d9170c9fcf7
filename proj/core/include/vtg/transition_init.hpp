#pragma once

#include <cmath>
#include <vector>

#include "vtg/diffusion.hpp"
#include "vtg/tensor.hpp"
#include "vtg/text.hpp"

namespace vtg {

enum class LambdaSpacing { uniform, cosine };

LambdaSpacing lambda_spacing_from_string(const std::string& s);

/// Per-frame interpolation coefficients plus the early-injection cutoff rho.
/// Frame 1 coefficients are 0, frame N are 1, sequences nondecreasing.
struct InterpCoeffs {
    std::vector<double> lambda_noise;
    std::vector<double> lambda_text;
    std::vector<double> lambda_lora;
    double inject_cutoff = 0.4;  // rho in [0,1]

    int frames() const { return static_cast<int>(lambda_noise.size()); }
};

InterpCoeffs make_interp_coeffs(int frames, double rho,
                                LambdaSpacing spacing = LambdaSpacing::uniform);

/// Spherical linear interpolation between flat vectors:
///   sin((1-lam) phi)/sin(phi) v1 + sin(lam phi)/sin(phi) v2,
///   phi = arccos(v1.v2 / (|v1||v2|)).
/// Falls back to linear interpolation when sin(phi) < 1e-6; antiparallel
/// inputs are rejected since the geodesic is not unique.
template <typename T>
void slerp_into(const T* v1, const T* v2, int64_t n, double lam, T* out) {
    require(n > 0, "slerp: empty input");
    double n1 = 0, n2 = 0, dot = 0;
    for (int64_t i = 0; i < n; ++i) {
        n1 += static_cast<double>(v1[i]) * v1[i];
        n2 += static_cast<double>(v2[i]) * v2[i];
        dot += static_cast<double>(v1[i]) * v2[i];
    }
    n1 = std::sqrt(n1);
    n2 = std::sqrt(n2);
    require(n1 > 0 && n2 > 0, "slerp: zero-norm input");
    double c = dot / (n1 * n2);
    c = std::max(-1.0, std::min(1.0, c));
    const double phi = std::acos(c);
    const double s = std::sin(phi);
    if (s < 1e-6) {
        require(c > 0, "slerp: antiparallel inputs have no unique geodesic");
        const T a = static_cast<T>(1.0 - lam), b = static_cast<T>(lam);
        for (int64_t i = 0; i < n; ++i) out[i] = a * v1[i] + b * v2[i];
        return;
    }
    const T a = static_cast<T>(std::sin((1.0 - lam) * phi) / s);
    const T b = static_cast<T>(std::sin(lam * phi) / s);
    for (int64_t i = 0; i < n; ++i) out[i] = a * v1[i] + b * v2[i];
}

template <typename T>
TensorT<T> slerp(const TensorT<T>& v1, const TensorT<T>& v2, double lam) {
    require(v1.same_shape(v2), "slerp: length mismatch");
    TensorT<T> out(v1.shape());
    slerp_into(v1.data(), v2.data(), v1.size(), lam, out.data());
    return out;
}

/// Interpolated initial latents: frame n = slerp(zT_1, zT_N, lambda_noise[n])
/// over the flattened frame latents; frames 1 and N are the unmodified
/// endpoint noises.
template <typename T>
TensorT<T> build_initial_latents(const TensorT<T>& zT_first, const TensorT<T>& zT_last,
                                 int frames, const InterpCoeffs& coeffs) {
    require(zT_first.same_shape(zT_last), "build_initial_latents: endpoint shape mismatch");
    require(zT_first.rank() == 3, "build_initial_latents: endpoints must be [C,h,w]");
    require(frames >= 2, "build_initial_latents: need at least two frames");
    require(coeffs.frames() == frames, "build_initial_latents: coeffs/frame count mismatch");

    const int c = zT_first.dim(0), h = zT_first.dim(1), w = zT_first.dim(2);
    const int64_t fsz = zT_first.size();
    TensorT<T> out({frames, c, h, w});
    for (int nfr = 0; nfr < frames; ++nfr) {
        T* dst = out.data() + static_cast<int64_t>(nfr) * fsz;
        if (nfr == 0) {
            std::copy(zT_first.data(), zT_first.data() + fsz, dst);
        } else if (nfr == frames - 1) {
            std::copy(zT_last.data(), zT_last.data() + fsz, dst);
        } else {
            slerp_into(zT_first.data(), zT_last.data(), fsz, coeffs.lambda_noise[static_cast<size_t>(nfr)], dst);
        }
    }
    return out;
}

/// Frame-aware text interpolation: per-token-row SLERP between the endpoint
/// caption embeddings; the shorter caption is padded with the null token.
std::vector<TextEmbedding> frame_text_embeddings(const TextEmbedding& c_first,
                                                 const TextEmbedding& c_last, int frames,
                                                 const InterpCoeffs& coeffs,
                                                 const TextEncoder& encoder);

/// True iff step_index < ceil(rho * total_steps).
bool should_inject(int step_index, int total_steps, const InterpCoeffs& coeffs);

/// Blend weight for an injecting step, decaying linearly to zero at the
/// cutoff: 1 - step_index/ceil(rho*total).
double inject_weight(int step_index, int total_steps, const InterpCoeffs& coeffs);

}  // namespace vtg
