#include "vtg/transition_init.hpp"

namespace vtg {

LambdaSpacing lambda_spacing_from_string(const std::string& s) {
    if (s == "uniform") return LambdaSpacing::uniform;
    if (s == "cosine") return LambdaSpacing::cosine;
    fail("unknown lambda spacing: " + s);
}

InterpCoeffs make_interp_coeffs(int frames, double rho, LambdaSpacing spacing) {
    require(frames >= 2, "interp coeffs: need at least two frames");
    require(rho >= 0.0 && rho <= 1.0, "interp coeffs: rho must be in [0,1]");
    InterpCoeffs c;
    c.inject_cutoff = rho;
    c.lambda_noise.resize(static_cast<size_t>(frames));
    for (int n = 0; n < frames; ++n) {
        const double u = static_cast<double>(n) / (frames - 1);
        double lam = u;
        if (spacing == LambdaSpacing::cosine)
            lam = 0.5 * (1.0 - std::cos(3.14159265358979323846 * u));
        c.lambda_noise[static_cast<size_t>(n)] = lam;
    }
    c.lambda_noise.front() = 0.0;
    c.lambda_noise.back() = 1.0;
    c.lambda_text = c.lambda_noise;
    c.lambda_lora = c.lambda_noise;
    return c;
}

std::vector<TextEmbedding> frame_text_embeddings(const TextEmbedding& c_first,
                                                 const TextEmbedding& c_last, int frames,
                                                 const InterpCoeffs& coeffs,
                                                 const TextEncoder& encoder) {
    require(c_first.dim() == c_last.dim(), "frame_text_embeddings: incompatible embedding dims");
    require(frames >= 2 && coeffs.frames() == frames,
            "frame_text_embeddings: coeffs/frame count mismatch");
    const int d = c_first.dim();
    const int len = std::max(c_first.length(), c_last.length());
    const auto pad = encoder.pad_token();
    require(static_cast<int>(pad.size()) == d, "frame_text_embeddings: pad token dim mismatch");

    // Pad both captions to the common token length.
    auto padded = [&](const TextEmbedding& e) {
        Tensor t({len, d});
        for (int i = 0; i < len; ++i)
            for (int j = 0; j < d; ++j)
                t.at(i, j) = i < e.length() ? e.tokens.at(i, j) : pad[static_cast<size_t>(j)];
        return t;
    };
    const Tensor t1 = padded(c_first);
    const Tensor tN = padded(c_last);

    std::vector<TextEmbedding> out(static_cast<size_t>(frames));
    for (int n = 0; n < frames; ++n) {
        if (n == 0) {
            out[0] = c_first;
            continue;
        }
        if (n == frames - 1) {
            out[static_cast<size_t>(n)] = c_last;
            continue;
        }
        TextEmbedding e;
        e.caption = c_first.caption + " -> " + c_last.caption;
        e.tokens = Tensor({len, d});
        const double lam = coeffs.lambda_text[static_cast<size_t>(n)];
        for (int i = 0; i < len; ++i)
            slerp_into(&t1.at(i, 0), &tN.at(i, 0), d, lam, &e.tokens.at(i, 0));
        out[static_cast<size_t>(n)] = std::move(e);
    }
    return out;
}

bool should_inject(int step_index, int total_steps, const InterpCoeffs& coeffs) {
    require(step_index >= 0 && step_index < total_steps, "should_inject: step index out of range");
    const int cutoff = static_cast<int>(std::ceil(coeffs.inject_cutoff * total_steps));
    return step_index < cutoff;
}

double inject_weight(int step_index, int total_steps, const InterpCoeffs& coeffs) {
    if (!should_inject(step_index, total_steps, coeffs)) return 0.0;
    const int cutoff = static_cast<int>(std::ceil(coeffs.inject_cutoff * total_steps));
    return 1.0 - static_cast<double>(step_index) / cutoff;
}

}  // namespace vtg
