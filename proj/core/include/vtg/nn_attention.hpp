#pragma once

#include "vtg/nn_layers.hpp"

namespace vtg::nn {

/// 180-degree rotation of a rows x cols matrix: dst[i][j] = src[r-1-i][c-1-j].
template <typename T>
void rotate180_mat(const T* src, T* dst, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const T* s = src + static_cast<int64_t>(rows - 1 - i) * cols;
        T* d = dst + static_cast<int64_t>(i) * cols;
        for (int j = 0; j < cols; ++j) d[j] = s[cols - 1 - j];
    }
}

/// Low-rank delta for one adapted linear: W x -> W x + scaling * up (down x).
/// A freshly initialized pair has up == 0, i.e. identity behavior.
template <typename T>
struct LoraMats {
    Param<T> down;  // [r, in]
    Param<T> up;    // [out, r]
    T scaling = T(1);

    int rank() const { return down.value.rank() == 2 ? down.value.dim(0) : 0; }
};

/// Multi-head attention over a batch of equal-length sequences with optional
/// per-sequence LoRA on the value/output projections, optional zero-initialized
/// backward-direction value/output deltas, an optional relative-position logit
/// bias table, and optional 180-degree rotation of the post-softmax maps.
template <typename T>
class AttentionCore {
public:
    Param<T> wq, wk, wv, wo, bo;
    Param<T> v_bwd, o_bwd;  // deltas added to wv/wo for the backward direction
    bool has_vo_delta = false;

    struct RunOptions {
        int seqs = 1;
        bool rotate_after_softmax = false;
        bool use_backward_vo = false;
        Param<T>* rel_bias = nullptr;  // [heads, 2*Nmax-1], indexed by (i - j + center)
        int rel_center = 0;
        const std::vector<LoraMats<T>*>* lora_v = nullptr;  // size seqs, entries may be null
        const std::vector<LoraMats<T>*>* lora_o = nullptr;
        bool lora_grads = false;
        bool training = false;
        bool capture_attention = false;
    };

    AttentionCore() = default;
    AttentionCore(int q_dim, int kv_dim, int inner_dim, int out_dim, int heads, Rng& rng,
                  bool with_vo_delta = false)
        : has_vo_delta(with_vo_delta),
          dq_(q_dim),
          dkv_(kv_dim),
          inner_(inner_dim),
          dout_(out_dim),
          heads_(heads) {
        require(inner_dim % heads == 0, "attention: inner dim must divide by heads");
        wq.init({inner_dim, q_dim});
        wk.init({inner_dim, kv_dim});
        wv.init({inner_dim, kv_dim});
        wo.init({out_dim, inner_dim});
        bo.init({out_dim});
        init_fan_in(wq.value, q_dim, rng);
        init_fan_in(wk.value, kv_dim, rng);
        init_fan_in(wv.value, kv_dim, rng);
        init_fan_in(wo.value, inner_dim, rng);
        if (with_vo_delta) {
            v_bwd.init({inner_dim, kv_dim});  // zero-initialized
            o_bwd.init({out_dim, inner_dim});
        }
    }

    int head_dim() const { return inner_ / heads_; }
    int heads() const { return heads_; }

    /// q_in: [seqs*Lq, dq], kv_in: [seqs*Lk, dkv] -> [seqs*Lq, dout].
    TensorT<T> forward(const TensorT<T>& q_in, const TensorT<T>& kv_in, const RunOptions& run) {
        const int s = run.seqs;
        const int lq = q_in.dim(0) / s;
        const int lk = kv_in.dim(0) / s;
        require(q_in.dim(0) == s * lq && kv_in.dim(0) == s * lk, "attention: ragged batch");

        const TensorT<T>* wv_eff = &wv.value;
        const TensorT<T>* wo_eff = &wo.value;
        TensorT<T> wv_sum, wo_sum;
        if (run.use_backward_vo) {
            require(has_vo_delta, "attention: backward v/o requested without delta weights");
            wv_sum = wv.value + v_bwd.value;
            wo_sum = wo.value + o_bwd.value;
            wv_eff = &wv_sum;
            wo_eff = &wo_sum;
        }

        TensorT<T> q({s * lq, inner_}), k({s * lk, inner_}), v({s * lk, inner_});
        gemm_nt(q_in.data(), wq.value.data(), q.data(), s * lq, inner_, dq_);
        gemm_nt(kv_in.data(), wk.value.data(), k.data(), s * lk, inner_, dkv_);
        gemm_nt(kv_in.data(), wv_eff->data(), v.data(), s * lk, inner_, dkv_);

        std::vector<TensorT<T>> lora_v_u;
        if (run.lora_v) {
            lora_v_u.resize(static_cast<size_t>(s));
            for (int si = 0; si < s; ++si) {
                LoraMats<T>* lm = (*run.lora_v)[static_cast<size_t>(si)];
                if (!lm) continue;
                apply_lora(kv_in, v, *lm, si, lk, dkv_, inner_, &lora_v_u[static_cast<size_t>(si)]);
            }
        }

        // Per-sequence, per-head attention.
        const int hd = head_dim();
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
        TensorT<T> a_pre({s, heads_, lq, lk});
        TensorT<T> o({s * lq, inner_});
        parallel_for(0, s, [&](int64_t si) {
            std::vector<T> logits(static_cast<size_t>(lq) * lk);
            std::vector<T> rot(static_cast<size_t>(lq) * lk);
            for (int h = 0; h < heads_; ++h) {
                const T* qh = q.data() + si * lq * inner_ + h * hd;
                const T* kh = k.data() + si * lk * inner_ + h * hd;
                const T* vh = v.data() + si * lk * inner_ + h * hd;
                for (int i = 0; i < lq; ++i) {
                    const T* qi = qh + static_cast<int64_t>(i) * inner_;
                    for (int j = 0; j < lk; ++j) {
                        const T* kj = kh + static_cast<int64_t>(j) * inner_;
                        T dot = 0;
                        for (int p = 0; p < hd; ++p) dot += qi[p] * kj[p];
                        T bias = 0;
                        if (run.rel_bias)
                            bias = run.rel_bias->value.at(h, i - j + run.rel_center);
                        logits[static_cast<size_t>(i) * lk + j] = dot * scale + bias;
                    }
                }
                // row softmax
                for (int i = 0; i < lq; ++i) {
                    T* r = logits.data() + static_cast<size_t>(i) * lk;
                    T mx = r[0];
                    for (int j = 1; j < lk; ++j) mx = std::max(mx, r[j]);
                    T sum = 0;
                    for (int j = 0; j < lk; ++j) {
                        r[j] = std::exp(r[j] - mx);
                        sum += r[j];
                    }
                    const T inv = T(1) / sum;
                    for (int j = 0; j < lk; ++j) r[j] *= inv;
                }
                std::copy(logits.begin(), logits.end(),
                          &a_pre.at(static_cast<int>(si), h, 0, 0));
                const T* amat = logits.data();
                if (run.rotate_after_softmax) {
                    rotate180_mat(logits.data(), rot.data(), lq, lk);
                    amat = rot.data();
                }
                T* oh = o.data() + si * lq * inner_ + h * hd;
                for (int i = 0; i < lq; ++i) {
                    T* oi = oh + static_cast<int64_t>(i) * inner_;
                    for (int p = 0; p < hd; ++p) oi[p] = 0;
                    const T* ai = amat + static_cast<int64_t>(i) * lk;
                    for (int j = 0; j < lk; ++j) {
                        const T aij = ai[j];
                        const T* vj = vh + static_cast<int64_t>(j) * inner_;
                        for (int p = 0; p < hd; ++p) oi[p] += aij * vj[p];
                    }
                }
            }
        });

        TensorT<T> y({s * lq, dout_});
        gemm_nt(o.data(), wo_eff->data(), y.data(), s * lq, dout_, inner_);
        parallel_for(0, static_cast<int64_t>(s) * lq, [&](int64_t i) {
            T* yi = y.data() + i * dout_;
            for (int j = 0; j < dout_; ++j) yi[j] += bo.value[j];
        });

        std::vector<TensorT<T>> lora_o_u;
        if (run.lora_o) {
            lora_o_u.resize(static_cast<size_t>(s));
            for (int si = 0; si < s; ++si) {
                LoraMats<T>* lm = (*run.lora_o)[static_cast<size_t>(si)];
                if (!lm) continue;
                apply_lora(o, y, *lm, si, lq, inner_, dout_, &lora_o_u[static_cast<size_t>(si)]);
            }
        }

        if (run.capture_attention) {
            captured_attention_ = TensorT<T>({s, heads_, lq, lk});
            if (run.rotate_after_softmax) {
                for (int si = 0; si < s; ++si)
                    for (int h = 0; h < heads_; ++h)
                        rotate180_mat(&a_pre.at(si, h, 0, 0), &captured_attention_.at(si, h, 0, 0),
                                      lq, lk);
            } else {
                captured_attention_ = a_pre;
            }
        }

        if (run.training) {
            cache_.q_in = q_in;
            cache_.kv_in = kv_in;
            cache_.q = std::move(q);
            cache_.k = std::move(k);
            cache_.v = std::move(v);
            cache_.a_pre = std::move(a_pre);
            cache_.o = std::move(o);
            cache_.lora_v_u = std::move(lora_v_u);
            cache_.lora_o_u = std::move(lora_o_u);
            cache_.run = run;
            cache_.lq = lq;
            cache_.lk = lk;
        }
        return y;
    }

    /// Returns (d_q_in, d_kv_in).
    std::pair<TensorT<T>, TensorT<T>> backward(const TensorT<T>& dy, const BackwardOptions& opts = {}) {
        const RunOptions& run = cache_.run;
        const int s = run.seqs, lq = cache_.lq, lk = cache_.lk;
        const int hd = head_dim();
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));

        const TensorT<T>* wv_eff = &wv.value;
        const TensorT<T>* wo_eff = &wo.value;
        TensorT<T> wv_sum, wo_sum;
        if (run.use_backward_vo) {
            wv_sum = wv.value + v_bwd.value;
            wo_sum = wo.value + o_bwd.value;
            wv_eff = &wv_sum;
            wo_eff = &wo_sum;
        }

        // Output projection (+ per-seq LoRA on o).
        TensorT<T> d_o({s * lq, inner_});
        gemm_nn_acc(dy.data(), wo_eff->data(), d_o.data(), s * lq, inner_, dout_);
        if (opts.param_grads || run.use_backward_vo) {
            TensorT<T> dwo({dout_, inner_});
            gemm_tn_acc(dy.data(), cache_.o.data(), dwo.data(), dout_, inner_, s * lq);
            if (opts.param_grads) wo.grad.add_(dwo);
            if (run.use_backward_vo) o_bwd.grad.add_(dwo);
        }
        if (opts.param_grads) {
            for (int64_t i = 0; i < static_cast<int64_t>(s) * lq; ++i) {
                const T* di = dy.data() + i * dout_;
                for (int j = 0; j < dout_; ++j) bo.grad[j] += di[j];
            }
        }
        if (run.lora_o) {
            for (int si = 0; si < s; ++si) {
                LoraMats<T>* lm = (*run.lora_o)[static_cast<size_t>(si)];
                if (!lm) continue;
                backward_lora(dy, cache_.o, d_o, *lm, cache_.lora_o_u[static_cast<size_t>(si)], si,
                              lq, inner_, dout_, run.lora_grads);
            }
        }

        // Attention math per sequence; dlogits stored for the serial rel-bias pass.
        TensorT<T> d_q({s * lq, inner_}), d_k({s * lk, inner_}), d_v({s * lk, inner_});
        TensorT<T> dlogits_all;
        if (run.rel_bias) dlogits_all = TensorT<T>({s, heads_, lq, lk});
        parallel_for(0, s, [&](int64_t si) {
            std::vector<T> a_post(static_cast<size_t>(lq) * lk);
            std::vector<T> da_post(static_cast<size_t>(lq) * lk);
            std::vector<T> da_pre(static_cast<size_t>(lq) * lk);
            for (int h = 0; h < heads_; ++h) {
                const T* a_pre = &cache_.a_pre.at(static_cast<int>(si), h, 0, 0);
                const T* vh = cache_.v.data() + si * lk * inner_ + h * hd;
                const T* doh = d_o.data() + si * lq * inner_ + h * hd;
                const T* amat = a_pre;
                if (run.rotate_after_softmax) {
                    rotate180_mat(a_pre, a_post.data(), lq, lk);
                    amat = a_post.data();
                }
                // da_post = d_o * V^T ; d_v += A_post^T * d_o
                T* dvh = d_v.data() + si * lk * inner_ + h * hd;
                for (int i = 0; i < lq; ++i) {
                    const T* doi = doh + static_cast<int64_t>(i) * inner_;
                    T* dai = da_post.data() + static_cast<size_t>(i) * lk;
                    const T* ai = amat + static_cast<int64_t>(i) * lk;
                    for (int j = 0; j < lk; ++j) {
                        const T* vj = vh + static_cast<int64_t>(j) * inner_;
                        T dot = 0;
                        for (int p = 0; p < hd; ++p) dot += doi[p] * vj[p];
                        dai[j] = dot;
                        T* dvj = dvh + static_cast<int64_t>(j) * inner_;
                        const T aij = ai[j];
                        for (int p = 0; p < hd; ++p) dvj[p] += aij * doi[p];
                    }
                }
                const T* da = da_post.data();
                if (run.rotate_after_softmax) {
                    rotate180_mat(da_post.data(), da_pre.data(), lq, lk);
                    da = da_pre.data();
                }
                // softmax backward rows: dl = A (da - sum(da*A))
                T* dl_out = run.rel_bias ? &dlogits_all.at(static_cast<int>(si), h, 0, 0) : nullptr;
                const T* qh = cache_.q.data() + si * lq * inner_ + h * hd;
                const T* kh = cache_.k.data() + si * lk * inner_ + h * hd;
                T* dqh = d_q.data() + si * lq * inner_ + h * hd;
                T* dkh = d_k.data() + si * lk * inner_ + h * hd;
                for (int i = 0; i < lq; ++i) {
                    const T* apre_i = a_pre + static_cast<int64_t>(i) * lk;
                    const T* da_i = da + static_cast<int64_t>(i) * lk;
                    T dot = 0;
                    for (int j = 0; j < lk; ++j) dot += da_i[j] * apre_i[j];
                    T* dqi = dqh + static_cast<int64_t>(i) * inner_;
                    for (int j = 0; j < lk; ++j) {
                        const T dl = apre_i[j] * (da_i[j] - dot);
                        if (dl_out) dl_out[static_cast<int64_t>(i) * lk + j] = dl;
                        const T g = dl * scale;
                        const T* kj = kh + static_cast<int64_t>(j) * inner_;
                        T* dkj = dkh + static_cast<int64_t>(j) * inner_;
                        const T* qi = qh + static_cast<int64_t>(i) * inner_;
                        for (int p = 0; p < hd; ++p) {
                            dqi[p] += g * kj[p];
                            dkj[p] += g * qi[p];
                        }
                    }
                }
            }
        });
        if (run.rel_bias) {
            Param<T>& rb = *run.rel_bias;
            for (int si = 0; si < s; ++si)
                for (int h = 0; h < heads_; ++h)
                    for (int i = 0; i < lq; ++i)
                        for (int j = 0; j < lk; ++j)
                            rb.grad.at(h, i - j + run.rel_center) += dlogits_all.at(si, h, i, j);
        }

        // Input projections.
        if (opts.param_grads) {
            gemm_tn_acc(d_q.data(), cache_.q_in.data(), wq.grad.data(), inner_, dq_, s * lq);
            gemm_tn_acc(d_k.data(), cache_.kv_in.data(), wk.grad.data(), inner_, dkv_, s * lk);
        }
        if (opts.param_grads || run.use_backward_vo) {
            TensorT<T> dwv({inner_, dkv_});
            gemm_tn_acc(d_v.data(), cache_.kv_in.data(), dwv.data(), inner_, dkv_, s * lk);
            if (opts.param_grads) wv.grad.add_(dwv);
            if (run.use_backward_vo) v_bwd.grad.add_(dwv);
        }
        TensorT<T> d_q_in({s * lq, dq_}), d_kv_in({s * lk, dkv_});
        gemm_nn_acc(d_q.data(), wq.value.data(), d_q_in.data(), s * lq, dq_, inner_);
        gemm_nn_acc(d_k.data(), wk.value.data(), d_kv_in.data(), s * lk, dkv_, inner_);
        gemm_nn_acc(d_v.data(), wv_eff->data(), d_kv_in.data(), s * lk, dkv_, inner_);
        if (run.lora_v) {
            for (int si = 0; si < s; ++si) {
                LoraMats<T>* lm = (*run.lora_v)[static_cast<size_t>(si)];
                if (!lm) continue;
                backward_lora(d_v, cache_.kv_in, d_kv_in, *lm, cache_.lora_v_u[static_cast<size_t>(si)],
                              si, lk, dkv_, inner_, run.lora_grads);
            }
        }
        return {std::move(d_q_in), std::move(d_kv_in)};
    }

    void collect_params(const std::string& prefix, ParamList<T>& out) {
        collect(out, prefix + ".q.weight", wq);
        collect(out, prefix + ".k.weight", wk);
        collect(out, prefix + ".v.weight", wv);
        collect(out, prefix + ".o.weight", wo);
        collect(out, prefix + ".o.bias", bo);
        if (has_vo_delta) {
            collect(out, prefix + ".v_bwd.weight", v_bwd);
            collect(out, prefix + ".o_bwd.weight", o_bwd);
        }
    }

    /// Post-softmax maps from the last capture_attention forward: [S, heads, Lq, Lk].
    const TensorT<T>& captured_attention() const { return captured_attention_; }

private:
    // y_s += scaling * (x_s down^T) up^T for sequence si; stores u = x_s down^T.
    static void apply_lora(const TensorT<T>& x, TensorT<T>& y, LoraMats<T>& lm, int si, int len,
                           int in_dim, int out_dim, TensorT<T>* u_cache) {
        const int r = lm.rank();
        TensorT<T> u({len, r});
        gemm_nt(x.data() + static_cast<int64_t>(si) * len * in_dim, lm.down.value.data(), u.data(),
                len, r, in_dim);
        TensorT<T> d({len, out_dim});
        gemm_nt(u.data(), lm.up.value.data(), d.data(), len, out_dim, r);
        T* yp = y.data() + static_cast<int64_t>(si) * len * out_dim;
        for (int64_t i = 0; i < static_cast<int64_t>(len) * out_dim; ++i)
            yp[i] += lm.scaling * d[i];
        if (u_cache) *u_cache = std::move(u);
    }

    // Backward of apply_lora: accumulates adapter grads and the dx contribution.
    void backward_lora(const TensorT<T>& dy, const TensorT<T>& x, TensorT<T>& dx, LoraMats<T>& lm,
                       const TensorT<T>& u, int si, int len, int in_dim, int out_dim,
                       bool lora_grads) {
        const int r = lm.rank();
        const T* dyp = dy.data() + static_cast<int64_t>(si) * len * out_dim;
        // du = scaling * dy up
        TensorT<T> du({len, r});
        for (int i = 0; i < len; ++i) {
            const T* dyi = dyp + static_cast<int64_t>(i) * out_dim;
            T* dui = du.data() + static_cast<int64_t>(i) * r;
            for (int j = 0; j < out_dim; ++j) {
                const T v = lm.scaling * dyi[j];
                const T* uprow = lm.up.value.data() + static_cast<int64_t>(j) * r;
                for (int p = 0; p < r; ++p) dui[p] += v * uprow[p];
            }
        }
        if (lora_grads) {
            // d_up += scaling * dy^T u ; d_down += du^T x
            for (int i = 0; i < len; ++i) {
                const T* dyi = dyp + static_cast<int64_t>(i) * out_dim;
                const T* ui = u.data() + static_cast<int64_t>(i) * r;
                for (int j = 0; j < out_dim; ++j) {
                    T* g = lm.up.grad.data() + static_cast<int64_t>(j) * r;
                    const T v = lm.scaling * dyi[j];
                    for (int p = 0; p < r; ++p) g[p] += v * ui[p];
                }
            }
            gemm_tn_acc(du.data(), x.data() + static_cast<int64_t>(si) * len * in_dim,
                        lm.down.grad.data(), r, in_dim, len);
        }
        gemm_nn_acc(du.data(), lm.down.value.data(),
                    dx.data() + static_cast<int64_t>(si) * len * in_dim, len, in_dim, r);
    }

    struct Cache {
        TensorT<T> q_in, kv_in, q, k, v, a_pre, o;
        std::vector<TensorT<T>> lora_v_u, lora_o_u;
        RunOptions run;
        int lq = 0, lk = 0;
    };

    int dq_ = 0, dkv_ = 0, inner_ = 0, dout_ = 0, heads_ = 1;
    Cache cache_;
    TensorT<T> captured_attention_;
};

}  // namespace vtg::nn
