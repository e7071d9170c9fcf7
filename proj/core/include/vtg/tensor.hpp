#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "vtg/common.hpp"

namespace vtg {

/// Dense row-major tensor. Rank up to 4 is what the project uses:
/// video latents are [N, C, h, w], token grids [L, d], matrices [out, in].
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), T(0));
    }

    TensorT(std::initializer_list<int> shape) : TensorT(std::vector<int>(shape)) {}

    static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

    static TensorT full(std::vector<int> shape, T v) {
        TensorT t(std::move(shape));
        t.fill(v);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    const T& at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }

    T& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    const T& at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }

    T& at(int i, int j, int k, int l) {
        return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    const T& at(int i, int j, int k, int l) const {
        return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T(0)); }

    void reshape(std::vector<int> shape) {
        if (count(shape) != size()) fail("reshape: element count mismatch");
        shape_ = std::move(shape);
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void add_(const TensorT& o) {
        for (int64_t i = 0; i < size(); ++i) data_[static_cast<size_t>(i)] += o[i];
    }
    void sub_(const TensorT& o) {
        for (int64_t i = 0; i < size(); ++i) data_[static_cast<size_t>(i)] -= o[i];
    }
    void scale_(T a) {
        for (T& v : data_) v *= a;
    }
    void axpy_(T a, const TensorT& x) {  // this += a*x
        for (int64_t i = 0; i < size(); ++i) data_[static_cast<size_t>(i)] += a * x[i];
    }

    T dot(const TensorT& o) const {
        T s = 0;
        for (int64_t i = 0; i < size(); ++i) s += data_[static_cast<size_t>(i)] * o[i];
        return s;
    }

    T norm2() const { return std::sqrt(dot(*this)); }

    T max_abs() const {
        T m = 0;
        for (const T& v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << ']';
        return os.str();
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(shape_);
        for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return out;
    }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) fail("tensor: negative dimension");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

private:
    std::vector<int> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
TensorT<T> operator+(TensorT<T> a, const TensorT<T>& b) {
    a.add_(b);
    return a;
}

template <typename T>
TensorT<T> operator-(TensorT<T> a, const TensorT<T>& b) {
    a.sub_(b);
    return a;
}

template <typename T>
TensorT<T> operator*(TensorT<T> a, T s) {
    a.scale_(s);
    return a;
}

/// Max |a-b| over all elements; shapes must match.
template <typename T>
T max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    T m = 0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename T>
bool bitwise_equal(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

/// Relative L2 distance ||a-b|| / max(||a||, eps).
template <typename T>
T rel_l2(const TensorT<T>& a, const TensorT<T>& b) {
    T num = 0, den = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const T d = a[i] - b[i];
        num += d * d;
        den += a[i] * a[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), T(1e-30));
}

}  // namespace vtg
