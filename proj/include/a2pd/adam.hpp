#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "a2pd/tensor.hpp"

namespace a2pd {

// Adam with bias correction; update rule p -= lr * m_hat / (sqrt(v_hat) + eps).
class Adam {
public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::span<Tensor> params, std::span<const Tensor> grads) {
        if (m_.empty()) {
            for (const Tensor& p : params) {
                m_.emplace_back(p.shape());
                v_.emplace_back(p.shape());
            }
        }
        ++t_;
        double c1 = 1.0 - std::pow(beta1_, double(t_));
        double c2 = 1.0 - std::pow(beta2_, double(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor& p = params[k];
            const Tensor& g = grads[k];
            for (std::size_t i = 0; i < p.numel(); ++i) {
                m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
                v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
                double mh = m_[k][i] / c1;
                double vh = v_[k][i] / c2;
                p[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
            }
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

} // namespace a2pd
