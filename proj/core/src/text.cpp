#include "vtg/text.hpp"

#include <cctype>
#include <cmath>

#include "vtg/common.hpp"
#include "vtg/rng.hpp"

namespace vtg {

namespace {

// Deterministic Gaussian vector seeded by the subword hash.
void add_subword_vector(const std::string& subword, std::vector<double>& acc) {
    Rng rng(fnv1a64(subword));
    for (double& v : acc) v += rng.gaussian();
}

std::vector<float> token_vector(const std::string& word, int dim) {
    std::vector<double> acc(static_cast<size_t>(dim), 0.0);
    const std::string marked = "#" + word + "#";
    add_subword_vector(marked, acc);
    for (size_t i = 0; i + 3 <= marked.size(); ++i)
        add_subword_vector(marked.substr(i, 3), acc);

    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<float> out(static_cast<size_t>(dim));
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(acc[i] / norm);
    return out;
}

}  // namespace

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

std::vector<float> TextEncoder::pad_token() const { return token_vector("<null>", dim_); }

TextEmbedding TextEncoder::null_embedding() const {
    TextEmbedding e;
    e.tokens = Tensor({1, dim_});
    const auto pad = pad_token();
    for (int j = 0; j < dim_; ++j) e.tokens.at(0, j) = pad[static_cast<size_t>(j)];
    e.caption = "";
    return e;
}

TextEmbedding TextEncoder::encode(const std::string& caption) const {
    const auto words = tokenize_words(caption);
    if (words.empty()) return null_embedding();

    TextEmbedding e;
    e.caption = caption;
    e.tokens = Tensor({static_cast<int>(words.size()), dim_});
    for (size_t i = 0; i < words.size(); ++i) {
        const auto vec = token_vector(words[i], dim_);
        for (int j = 0; j < dim_; ++j)
            e.tokens.at(static_cast<int>(i), j) = vec[static_cast<size_t>(j)];
    }
    return e;
}

double caption_cosine(const TextEmbedding& a, const TextEmbedding& b) {
    require(a.dim() == b.dim() && a.dim() > 0, "caption_cosine: dim mismatch");
    const int d = a.dim();
    std::vector<double> pa(static_cast<size_t>(d), 0.0), pb(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < a.length(); ++i)
        for (int j = 0; j < d; ++j) pa[static_cast<size_t>(j)] += a.tokens.at(i, j);
    for (int i = 0; i < b.length(); ++i)
        for (int j = 0; j < d; ++j) pb[static_cast<size_t>(j)] += b.tokens.at(i, j);
    double dot = 0, na = 0, nb = 0;
    for (int j = 0; j < d; ++j) {
        dot += pa[static_cast<size_t>(j)] * pb[static_cast<size_t>(j)];
        na += pa[static_cast<size_t>(j)] * pa[static_cast<size_t>(j)];
        nb += pb[static_cast<size_t>(j)] * pb[static_cast<size_t>(j)];
    }
    return dot / std::sqrt(na * nb);
}

}  // namespace vtg
