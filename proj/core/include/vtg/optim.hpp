#pragma once

#include <cmath>

#include "vtg/nn_core.hpp"

namespace vtg {

/// AdamW with decoupled weight decay and bias correction.
template <typename T>
class AdamWT {
public:
    struct Config {
        double lr = 3e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamWT() = default;
    explicit AdamWT(Config cfg) : cfg_(cfg) {}

    void attach(const nn::ParamList<T>& params) {
        params_ = params;
        m_.clear();
        v_.clear();
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (auto& np : params_) {
            m_.emplace_back(np.param->value.shape());
            v_.emplace_back(np.param->value.shape());
        }
        step_ = 0;
    }

    const Config& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    int64_t step_count() const { return step_; }

    void zero_grads() {
        for (auto& np : params_) np.param->zero_grad();
    }

    void step() {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = params_[pi].param->value;
            auto& g = params_[pi].param->grad;
            auto& m = m_[pi];
            auto& v = v_[pi];
            const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
            const T lr = static_cast<T>(cfg_.lr);
            const T wd = static_cast<T>(cfg_.weight_decay);
            const T eps = static_cast<T>(cfg_.eps);
            const T ibc1 = static_cast<T>(1.0 / bc1), ibc2 = static_cast<T>(1.0 / bc2);
            for (int64_t i = 0; i < p.size(); ++i) {
                m[i] = b1 * m[i] + (T(1) - b1) * g[i];
                v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
                const T mh = m[i] * ibc1;
                const T vh = v[i] * ibc2;
                p[i] -= lr * (mh / (std::sqrt(vh) + eps) + wd * p[i]);
            }
        }
    }

    /// Optimizer state tensors for checkpointing, in attach order.
    std::vector<std::pair<std::string, Tensor*>> state_tensors()
        requires std::is_same_v<T, float>
    {
        std::vector<std::pair<std::string, Tensor*>> out;
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            out.emplace_back(params_[pi].name + ".m", &m_[pi]);
            out.emplace_back(params_[pi].name + ".v", &v_[pi]);
        }
        return out;
    }

    void set_step_count(int64_t s) { step_ = s; }

private:
    Config cfg_;
    nn::ParamList<T> params_;
    std::vector<TensorT<T>> m_, v_;
    int64_t step_ = 0;
};

using AdamW = AdamWT<float>;

}  // namespace vtg
