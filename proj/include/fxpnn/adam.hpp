#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace fxpnn {

struct AdamConfig {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias-corrected moment estimates.
class Adam {
public:
    Adam(std::size_t size, AdamConfig cfg) : cfg_(cfg), m_(size, 0.0), v_(size, 0.0) {}

    const AdamConfig& config() const { return cfg_; }
    long steps() const { return t_; }

    void step(std::span<double> params, std::span<const double> grad)
    {
        step(params, grad, cfg_.step_size);
    }

    void step(std::span<double> params, std::span<const double> grad, double step_size)
    {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw std::invalid_argument("Adam: size mismatch");
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            params[i] -= step_size * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
        }
    }

private:
    AdamConfig cfg_;
    std::vector<double> m_;
    std::vector<double> v_;
    long t_ = 0;
};

}  // namespace fxpnn
