#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "vtg/tensor.hpp"

namespace vtg {

/// Deterministic RNG. Gaussian draws use an explicit Box-Muller transform on
/// top of mt19937_64 so sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    /// Derive an independent stream for a named purpose.
    Rng fork(const std::string& purpose) {
        uint64_t s = engine_();
        return Rng(fnv1a64(purpose, s ^ 0x9e3779b97f4a7c15ull));
    }

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive, rejection-free modulo bias is
    /// negligible for the small ranges used here.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo + 1);
        return lo + static_cast<int64_t>(engine_() % span);
    }

    /// Standard normal via Box-Muller.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void fill_gaussian(TensorT<T>& t, double stddev = 1.0, double mean = 0.0) {
        for (int64_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<T>(mean + stddev * gaussian());
    }

    template <typename T>
    TensorT<T> gaussian_tensor(std::vector<int> shape, double stddev = 1.0) {
        TensorT<T> t(std::move(shape));
        fill_gaussian(t, stddev);
        return t;
    }

    /// Fisher-Yates shuffle of index vector.
    void shuffle(std::vector<int>& idx) {
        for (size_t i = idx.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(idx[i - 1], idx[j]);
        }
    }

    /// Serializable state for training resumability.
    std::string save_state() const {
        std::ostringstream os;
        os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
        os.precision(17);
        os << spare_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        int spare_flag = 0;
        is >> engine_ >> spare_flag >> spare_;
        if (!is) fail("rng: malformed state string");
        has_spare_ = spare_flag != 0;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace vtg
