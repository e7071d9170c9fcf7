#pragma once

#include "vtg/nn_core.hpp"

namespace vtg::nn {

/// y = x W^T + b over rows. W: [out, in].
template <typename T>
class Linear {
public:
    Param<T> weight, bias;
    bool has_bias = true;

    Linear() = default;
    Linear(int in_dim, int out_dim, Rng& rng, bool with_bias = true, double gain = 1.0)
        : has_bias(with_bias), in_(in_dim), out_(out_dim) {
        weight.init({out_dim, in_dim});
        init_fan_in(weight.value, in_dim, rng, gain);
        if (with_bias) bias.init({out_dim});
    }

    int in_dim() const { return in_; }
    int out_dim() const { return out_; }

    TensorT<T> forward(const TensorT<T>& x, bool training) {
        const int rows = x.dim(0);
        TensorT<T> y({rows, out_});
        gemm_nt(x.data(), weight.value.data(), y.data(), rows, out_, in_);
        if (has_bias) {
            parallel_for(0, rows, [&](int64_t i) {
                T* yi = y.data() + i * out_;
                for (int j = 0; j < out_; ++j) yi[j] += bias.value[j];
            });
        }
        if (training) x_cache_ = x;
        return y;
    }

    TensorT<T> backward(const TensorT<T>& dy, const BackwardOptions& opts = {}) {
        const int rows = dy.dim(0);
        if (opts.param_grads) {
            gemm_tn_acc(dy.data(), x_cache_.data(), weight.grad.data(), out_, in_, rows);
            if (has_bias) {
                for (int i = 0; i < rows; ++i) {
                    const T* di = dy.data() + static_cast<int64_t>(i) * out_;
                    for (int j = 0; j < out_; ++j) bias.grad[j] += di[j];
                }
            }
        }
        TensorT<T> dx({rows, in_});
        gemm_nn_acc(dy.data(), weight.value.data(), dx.data(), rows, in_, out_);
        return dx;
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        collect(out, prefix + ".weight", weight);
        if (has_bias) collect(out, prefix + ".bias", bias);
    }

private:
    int in_ = 0, out_ = 0;
    TensorT<T> x_cache_;
};

/// Per-frame spatial convolution. x: [B, Cin, H, W] -> [B, Cout, Ho, Wo].
template <typename T>
class Conv2d {
public:
    Param<T> weight, bias;  // weight: [out, in, kh, kw]

    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, Rng& rng)
        : in_(in_ch), out_(out_ch), k_(ksize), stride_(stride), pad_(pad) {
        weight.init({out_ch, in_ch, ksize, ksize});
        init_fan_in(weight.value, in_ch * ksize * ksize, rng);
        bias.init({out_ch});
    }

    int out_size(int in_size) const { return (in_size + 2 * pad_ - k_) / stride_ + 1; }

    TensorT<T> forward(const TensorT<T>& x, bool training) {
        const int b = x.dim(0), ih = x.dim(2), iw = x.dim(3);
        const int oh = out_size(ih), ow = out_size(iw);
        TensorT<T> y({b, out_, oh, ow});
        parallel_for(0, static_cast<int64_t>(b) * out_, [&](int64_t bo) {
            const int bi = static_cast<int>(bo / out_);
            const int oc = static_cast<int>(bo % out_);
            T* yp = &y.at(bi, oc, 0, 0);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    T s = bias.value[oc];
                    for (int ic = 0; ic < in_; ++ic) {
                        const T* wp = &weight.value.at(oc, ic, 0, 0);
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = oy * stride_ + ky - pad_;
                            if (iy < 0 || iy >= ih) continue;
                            const T* xrow = &x.at(bi, ic, iy, 0);
                            const T* wrow = wp + ky * k_;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ix = ox * stride_ + kx - pad_;
                                if (ix < 0 || ix >= iw) continue;
                                s += wrow[kx] * xrow[ix];
                            }
                        }
                    }
                    yp[oy * ow + ox] = s;
                }
            }
        });
        if (training) x_cache_ = x;
        return y;
    }

    TensorT<T> backward(const TensorT<T>& dy, const BackwardOptions& opts = {}) {
        const TensorT<T>& x = x_cache_;
        const int b = x.dim(0), ih = x.dim(2), iw = x.dim(3);
        const int oh = dy.dim(2), ow = dy.dim(3);

        if (opts.param_grads) {
            parallel_for(0, static_cast<int64_t>(out_) * in_, [&](int64_t oi) {
                const int oc = static_cast<int>(oi / in_);
                const int ic = static_cast<int>(oi % in_);
                for (int ky = 0; ky < k_; ++ky) {
                    for (int kx = 0; kx < k_; ++kx) {
                        T s = 0;
                        for (int bi = 0; bi < b; ++bi) {
                            const T* dyp = &dy.at(bi, oc, 0, 0);
                            const T* xp = &x.at(bi, ic, 0, 0);
                            for (int oy = 0; oy < oh; ++oy) {
                                const int iy = oy * stride_ + ky - pad_;
                                if (iy < 0 || iy >= ih) continue;
                                for (int ox = 0; ox < ow; ++ox) {
                                    const int ix = ox * stride_ + kx - pad_;
                                    if (ix < 0 || ix >= iw) continue;
                                    s += dyp[oy * ow + ox] * xp[iy * iw + ix];
                                }
                            }
                        }
                        weight.grad.at(oc, ic, ky, kx) += s;
                    }
                }
            });
            for (int oc = 0; oc < out_; ++oc) {
                T s = 0;
                for (int bi = 0; bi < b; ++bi) {
                    const T* dyp = &dy.at(bi, oc, 0, 0);
                    for (int i = 0; i < oh * ow; ++i) s += dyp[i];
                }
                bias.grad[oc] += s;
            }
        }

        TensorT<T> dx(x.shape());
        parallel_for(0, static_cast<int64_t>(b) * in_, [&](int64_t bi_ic) {
            const int bi = static_cast<int>(bi_ic / in_);
            const int ic = static_cast<int>(bi_ic % in_);
            T* dxp = &dx.at(bi, ic, 0, 0);
            for (int iy = 0; iy < ih; ++iy) {
                for (int ix = 0; ix < iw; ++ix) {
                    T s = 0;
                    for (int oc = 0; oc < out_; ++oc) {
                        const T* dyp = &dy.at(bi, oc, 0, 0);
                        const T* wp = &weight.value.at(oc, ic, 0, 0);
                        for (int ky = 0; ky < k_; ++ky) {
                            const int num_y = iy + pad_ - ky;
                            if (num_y < 0 || num_y % stride_ != 0) continue;
                            const int oy = num_y / stride_;
                            if (oy >= oh) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int num_x = ix + pad_ - kx;
                                if (num_x < 0 || num_x % stride_ != 0) continue;
                                const int ox = num_x / stride_;
                                if (ox >= ow) continue;
                                s += dyp[oy * ow + ox] * wp[ky * k_ + kx];
                            }
                        }
                    }
                    dxp[iy * iw + ix] = s;
                }
            }
        });
        return dx;
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        collect(out, prefix + ".weight", weight);
        collect(out, prefix + ".bias", bias);
    }

private:
    int in_ = 0, out_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    TensorT<T> x_cache_;
};

/// GroupNorm over [C/G, H, W] per sample with per-channel affine.
template <typename T>
class GroupNorm {
public:
    Param<T> gamma, beta;

    GroupNorm() = default;
    GroupNorm(int channels, int groups) : c_(channels), g_(groups) {
        require(channels % groups == 0, "groupnorm: channels must divide by groups");
        gamma.init({channels});
        gamma.value.fill(T(1));
        beta.init({channels});
    }

    TensorT<T> forward(const TensorT<T>& x, bool training) {
        const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int cg = c_ / g_;
        const int64_t gsz = static_cast<int64_t>(cg) * h * w;
        TensorT<T> xhat(x.shape());
        TensorT<T> invstd({b, g_});
        for (int bi = 0; bi < b; ++bi) {
            for (int gi = 0; gi < g_; ++gi) {
                const T* xs = &x.at(bi, gi * cg, 0, 0);
                double mean = 0;
                for (int64_t i = 0; i < gsz; ++i) mean += xs[i];
                mean /= static_cast<double>(gsz);
                double var = 0;
                for (int64_t i = 0; i < gsz; ++i) {
                    const double d = xs[i] - mean;
                    var += d * d;
                }
                var /= static_cast<double>(gsz);
                const T is = static_cast<T>(1.0 / std::sqrt(var + 1e-6));
                invstd.at(bi, gi) = is;
                T* xh = &xhat.at(bi, gi * cg, 0, 0);
                const T m = static_cast<T>(mean);
                for (int64_t i = 0; i < gsz; ++i) xh[i] = (xs[i] - m) * is;
            }
        }
        TensorT<T> y(x.shape());
        const int64_t hw = static_cast<int64_t>(h) * w;
        for (int bi = 0; bi < b; ++bi)
            for (int ci = 0; ci < c_; ++ci) {
                const T* xh = &xhat.at(bi, ci, 0, 0);
                T* yp = &y.at(bi, ci, 0, 0);
                for (int64_t i = 0; i < hw; ++i) yp[i] = gamma.value[ci] * xh[i] + beta.value[ci];
            }
        if (training) {
            xhat_cache_ = std::move(xhat);
            invstd_cache_ = std::move(invstd);
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& dy, const BackwardOptions& opts = {}) {
        const TensorT<T>& xhat = xhat_cache_;
        const int b = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
        const int cg = c_ / g_;
        const int64_t hw = static_cast<int64_t>(h) * w;
        const int64_t gsz = static_cast<int64_t>(cg) * hw;

        if (opts.param_grads) {
            for (int ci = 0; ci < c_; ++ci) {
                T dg = 0, db = 0;
                for (int bi = 0; bi < b; ++bi) {
                    const T* dp = &dy.at(bi, ci, 0, 0);
                    const T* xh = &xhat.at(bi, ci, 0, 0);
                    for (int64_t i = 0; i < hw; ++i) {
                        dg += dp[i] * xh[i];
                        db += dp[i];
                    }
                }
                gamma.grad[ci] += dg;
                beta.grad[ci] += db;
            }
        }

        TensorT<T> dx(dy.shape());
        for (int bi = 0; bi < b; ++bi) {
            for (int gi = 0; gi < g_; ++gi) {
                // dxhat = dy * gamma, reduced within the group
                double sum_dxh = 0, sum_dxh_xh = 0;
                for (int ci = gi * cg; ci < (gi + 1) * cg; ++ci) {
                    const T* dp = &dy.at(bi, ci, 0, 0);
                    const T* xh = &xhat.at(bi, ci, 0, 0);
                    const T gmm = gamma.value[ci];
                    for (int64_t i = 0; i < hw; ++i) {
                        const T dxh = dp[i] * gmm;
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[i];
                    }
                }
                const T is = invstd_cache_.at(bi, gi);
                const T inv_m = static_cast<T>(1.0 / static_cast<double>(gsz));
                const T c1 = static_cast<T>(sum_dxh) * inv_m;
                const T c2 = static_cast<T>(sum_dxh_xh) * inv_m;
                for (int ci = gi * cg; ci < (gi + 1) * cg; ++ci) {
                    const T* dp = &dy.at(bi, ci, 0, 0);
                    const T* xh = &xhat.at(bi, ci, 0, 0);
                    T* dxp = &dx.at(bi, ci, 0, 0);
                    const T gmm = gamma.value[ci];
                    for (int64_t i = 0; i < hw; ++i) {
                        const T dxh = dp[i] * gmm;
                        dxp[i] = is * (dxh - c1 - xh[i] * c2);
                    }
                }
            }
        }
        return dx;
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        collect(out, prefix + ".gamma", gamma);
        collect(out, prefix + ".beta", beta);
    }

private:
    int c_ = 0, g_ = 1;
    TensorT<T> xhat_cache_;
    TensorT<T> invstd_cache_;
};

/// Per-token LayerNorm over the channel dimension. x: [rows, C].
template <typename T>
class LayerNorm {
public:
    Param<T> gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(int channels) : c_(channels) {
        gamma.init({channels});
        gamma.value.fill(T(1));
        beta.init({channels});
    }

    TensorT<T> forward(const TensorT<T>& x, bool training) {
        const int rows = x.dim(0);
        TensorT<T> xhat(x.shape());
        TensorT<T> invstd({rows});
        for (int i = 0; i < rows; ++i) {
            const T* xs = x.data() + static_cast<int64_t>(i) * c_;
            double mean = 0;
            for (int j = 0; j < c_; ++j) mean += xs[j];
            mean /= c_;
            double var = 0;
            for (int j = 0; j < c_; ++j) {
                const double d = xs[j] - mean;
                var += d * d;
            }
            var /= c_;
            const T is = static_cast<T>(1.0 / std::sqrt(var + 1e-6));
            invstd[i] = is;
            T* xh = xhat.data() + static_cast<int64_t>(i) * c_;
            const T m = static_cast<T>(mean);
            for (int j = 0; j < c_; ++j) xh[j] = (xs[j] - m) * is;
        }
        TensorT<T> y(x.shape());
        for (int i = 0; i < rows; ++i) {
            const T* xh = xhat.data() + static_cast<int64_t>(i) * c_;
            T* yp = y.data() + static_cast<int64_t>(i) * c_;
            for (int j = 0; j < c_; ++j) yp[j] = gamma.value[j] * xh[j] + beta.value[j];
        }
        if (training) {
            xhat_cache_ = std::move(xhat);
            invstd_cache_ = std::move(invstd);
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& dy, const BackwardOptions& opts = {}) {
        const TensorT<T>& xhat = xhat_cache_;
        const int rows = dy.dim(0);
        if (opts.param_grads) {
            for (int i = 0; i < rows; ++i) {
                const T* dp = dy.data() + static_cast<int64_t>(i) * c_;
                const T* xh = xhat.data() + static_cast<int64_t>(i) * c_;
                for (int j = 0; j < c_; ++j) {
                    gamma.grad[j] += dp[j] * xh[j];
                    beta.grad[j] += dp[j];
                }
            }
        }
        TensorT<T> dx(dy.shape());
        const T inv_m = static_cast<T>(1.0 / c_);
        for (int i = 0; i < rows; ++i) {
            const T* dp = dy.data() + static_cast<int64_t>(i) * c_;
            const T* xh = xhat.data() + static_cast<int64_t>(i) * c_;
            T* dxp = dx.data() + static_cast<int64_t>(i) * c_;
            double sum_dxh = 0, sum_dxh_xh = 0;
            for (int j = 0; j < c_; ++j) {
                const T dxh = dp[j] * gamma.value[j];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh[j];
            }
            const T c1 = static_cast<T>(sum_dxh) * inv_m;
            const T c2 = static_cast<T>(sum_dxh_xh) * inv_m;
            const T is = invstd_cache_[i];
            for (int j = 0; j < c_; ++j) {
                const T dxh = dp[j] * gamma.value[j];
                dxp[j] = is * (dxh - c1 - xh[j] * c2);
            }
        }
        return dx;
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        collect(out, prefix + ".gamma", gamma);
        collect(out, prefix + ".beta", beta);
    }

private:
    int c_ = 0;
    TensorT<T> xhat_cache_;
    TensorT<T> invstd_cache_;
};

/// SiLU with cached input.
template <typename T>
class SiLU {
public:
    TensorT<T> forward(const TensorT<T>& x, bool training) {
        TensorT<T> y;
        silu_forward(x, y);
        if (training) x_cache_ = x;
        return y;
    }
    TensorT<T> backward(const TensorT<T>& dy) {
        TensorT<T> dx;
        silu_backward(x_cache_, dy, dx);
        return dx;
    }

private:
    TensorT<T> x_cache_;
};

}  // namespace vtg::nn
