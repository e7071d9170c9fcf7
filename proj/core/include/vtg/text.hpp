#pragma once

#include <string>
#include <vector>

#include "vtg/tensor.hpp"

namespace vtg {

/// Token-level caption embedding, one unit-norm row per token.
struct TextEmbedding {
    Tensor tokens;        // [L, d]
    std::string caption;  // source text

    int length() const { return tokens.rank() == 2 ? tokens.dim(0) : 0; }
    int dim() const { return tokens.rank() == 2 ? tokens.dim(1) : 0; }
};

/// Deterministic hashed bag-of-subwords encoder. Identical captions yield
/// bitwise-identical embeddings; the empty caption maps to the reserved null
/// embedding used as the unconditional token for classifier-free guidance.
class TextEncoder {
public:
    explicit TextEncoder(int embed_dim = 128) : dim_(embed_dim) {
        require(embed_dim >= 1, "text encoder: embed_dim must be positive");
    }

    int embed_dim() const { return dim_; }

    TextEmbedding encode(const std::string& caption) const;

    /// The reserved null embedding: a single pad-token row.
    TextEmbedding null_embedding() const;

    /// The pad token row, also used when aligning caption lengths. Nonzero so
    /// it is a valid SLERP input.
    std::vector<float> pad_token() const;

private:
    int dim_;
};

/// Lowercased alphanumeric word split, exposed for caption/vocabulary tests.
std::vector<std::string> tokenize_words(const std::string& text);

/// Cosine similarity between mean-pooled caption embeddings.
double caption_cosine(const TextEmbedding& a, const TextEmbedding& b);

}  // namespace vtg
