#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vtg/common.hpp"
#include "vtg/rng.hpp"
#include "vtg/tensor.hpp"

namespace vtg::nn {

template <typename T>
struct Param {
    TensorT<T> value;
    TensorT<T> grad;

    void init(std::vector<int> shape) {
        value = TensorT<T>(shape);
        grad = TensorT<T>(std::move(shape));
    }
    void zero_grad() { grad.zero(); }
};

template <typename T>
struct NamedParam {
    std::string name;
    Param<T>* param;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
void collect(ParamList<T>& out, const std::string& name, Param<T>& p) {
    out.push_back({name, &p});
}

/// Backward-pass controls. Activation gradients always flow; weight-gradient
/// accumulation can be skipped when the caller trains adapters only.
struct BackwardOptions {
    bool param_grads = true;
};

// ---- dense matrix helpers (row-major, deterministic for any thread count) ----

/// C = A * B^T. A: [m,k], B: [n,k], C: [m,n]. The linear-layer forward form.
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k) {
    parallel_for(0, m, [&](int64_t i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (int j = 0; j < n; ++j) {
            const T* bj = b + static_cast<int64_t>(j) * k;
            T s = 0;
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = s;
        }
    });
}

/// C += A * B. A: [m,k], B: [k,n], C: [m,n]. The dx = dy*W form.
template <typename T>
void gemm_nn_acc(const T* a, const T* b, T* c, int m, int n, int k) {
    parallel_for(0, m, [&](int64_t i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (int p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    });
}

/// C += A^T * B. A: [k,m], B: [k,n], C: [m,n]. The dW = dy^T * x form.
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, int m, int n, int k) {
    parallel_for(0, m, [&](int64_t i) {
        T* ci = c + i * n;
        for (int p = 0; p < k; ++p) {
            const T av = a[static_cast<int64_t>(p) * m + i];
            const T* bp = b + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    });
}

// ---- activations ----

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
void silu_forward(const TensorT<T>& x, TensorT<T>& y) {
    y = TensorT<T>(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
}

template <typename T>
void silu_backward(const TensorT<T>& x, const TensorT<T>& dy, TensorT<T>& dx) {
    dx = TensorT<T>(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) {
        const T s = sigmoid(x[i]);
        dx[i] = dy[i] * s * (T(1) + x[i] * (T(1) - s));
    }
}

/// Row-wise stable softmax in place. x: [rows, cols].
template <typename T>
void softmax_rows(TensorT<T>& x) {
    const int rows = x.dim(0), cols = x.dim(1);
    for (int i = 0; i < rows; ++i) {
        T* r = x.data() + static_cast<int64_t>(i) * cols;
        T mx = r[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, r[j]);
        T sum = 0;
        for (int j = 0; j < cols; ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        const T inv = T(1) / sum;
        for (int j = 0; j < cols; ++j) r[j] *= inv;
    }
}

/// Kaiming-style fan-in init used for conv and linear weights.
template <typename T>
void init_fan_in(TensorT<T>& w, int fan_in, Rng& rng, double gain = 1.0) {
    rng.fill_gaussian(w, gain / std::sqrt(static_cast<double>(fan_in)));
}

}  // namespace vtg::nn
