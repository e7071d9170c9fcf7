#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "vtg/text.hpp"

using namespace vtg;

TEST_CASE("empty caption maps to the reserved null embedding") {
    TextEncoder enc(128);
    auto e = enc.encode("");
    REQUIRE(e.length() == 1);
    auto null_e = enc.null_embedding();
    CHECK(bitwise_equal(e.tokens, null_e.tokens));
    auto pad = enc.pad_token();
    for (int j = 0; j < 128; ++j) CHECK(e.tokens.at(0, j) == pad[static_cast<size_t>(j)]);
    // punctuation-only captions also collapse to null
    auto p = enc.encode("   ... !!");
    CHECK(bitwise_equal(p.tokens, null_e.tokens));
}

TEST_CASE("identical captions yield bitwise-identical embeddings") {
    TextEncoder enc(128);
    auto a = enc.encode("a red circle moving right");
    auto b = enc.encode("a red circle moving right");
    CHECK(bitwise_equal(a.tokens, b.tokens));
}

TEST_CASE("token rows are unit norm") {
    TextEncoder enc(64);
    auto e = enc.encode("green triangle on a dark background");
    for (int i = 0; i < e.length(); ++i) {
        double n = 0;
        for (int j = 0; j < e.dim(); ++j) n += double(e.tokens.at(i, j)) * e.tokens.at(i, j);
        CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("distinct captions are separated over a 100-caption corpus") {
    TextEncoder enc(128);
    const char* colors[] = {"red", "green", "blue", "yellow", "white"};
    const char* shapes[] = {"circle", "square", "triangle", "ring"};
    const char* actions[] = {"moving left", "moving right", "growing", "fading", "spinning"};
    std::vector<TextEmbedding> all;
    for (const char* c : colors)
        for (const char* s : shapes)
            for (const char* a : actions)
                all.push_back(enc.encode(std::string("a ") + c + " " + s + " " + a));
    REQUIRE(all.size() == 100);
    for (size_t i = 0; i < all.size(); ++i)
        for (size_t j = i + 1; j < all.size(); ++j)
            CHECK(caption_cosine(all[i], all[j]) < 1.0 - 1e-6);
    CHECK(caption_cosine(all[0], all[0]) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("word tokenization lowercases and splits on non-alphanumerics") {
    auto words = tokenize_words("A Red-Circle, moving RIGHT!");
    REQUIRE(words.size() == 5);
    CHECK(words[0] == "a");
    CHECK(words[1] == "red");
    CHECK(words[2] == "circle");
    CHECK(words[3] == "moving");
    CHECK(words[4] == "right");
}

TEST_CASE("caption token count matches word count") {
    TextEncoder enc(32);
    auto e = enc.encode("one two three four");
    CHECK(e.length() == 4);
    CHECK(e.dim() == 32);
}
