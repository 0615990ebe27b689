#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "toyvlm/errors.hpp"
#include "toyvlm/tensor.hpp"

namespace toyvlm {

// Cosine annealing from initial_lr to final_lr over total_steps.
struct LrSchedule {
    double initial_lr = 5e-5;
    double final_lr = 0.0;
    std::int64_t total_steps = 1;
};

inline double cosine_lr(const LrSchedule& s, std::int64_t step) {
    if (s.total_steps <= 0) throw ConfigError("cosine_lr: total_steps must be positive");
    if (step < 0 || step > s.total_steps)
        throw ConfigError("cosine_lr: step " + std::to_string(step) + " outside [0," +
                          std::to_string(s.total_steps) + "]");
    const double t = static_cast<double>(step) / static_cast<double>(s.total_steps);
    return s.final_lr + 0.5 * (s.initial_lr - s.final_lr) * (1.0 + std::cos(3.14159265358979323846 * t));
}

// AdamW with decoupled weight decay and bias-corrected moments.
template <class T>
class AdamWT {
public:
    struct Hyper {
        double beta1 = 0.9;
        double beta2 = 0.95;
        double eps = 1e-8;
        double weight_decay = 0.01;
    };

    explicit AdamWT(Hyper h = {}) : h_(h) {}

    std::int64_t step_count() const { return step_; }
    const Hyper& hyper() const { return h_; }

    // One update over a fixed-order parameter list. Gradients must already
    // be populated; frozen parameters are simply not passed in.
    void step(std::vector<TensorT<T>>& params, double lr) {
        ++step_;
        if (moments_.empty()) {
            moments_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                moments_[i].m.assign(params[i].numel(), 0.0);
                moments_[i].v.assign(params[i].numel(), 0.0);
            }
        }
        if (moments_.size() != params.size())
            throw ConfigError("adamw: parameter count changed between steps");
        const double bc1 = 1.0 - std::pow(h_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(h_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            if (moments_[i].m.size() != p.numel())
                throw ConfigError("adamw: parameter " + std::to_string(i) + " changed shape between steps");
            if (p.grad().size() != p.numel())
                throw ConfigError("adamw: missing gradient for parameter " + std::to_string(i));
            auto& st = moments_[i];
            auto& data = p.data();
            auto& grad = p.grad();
            for (std::size_t j = 0; j < data.size(); ++j) {
                const double g = grad[j];
                st.m[j] = h_.beta1 * st.m[j] + (1.0 - h_.beta1) * g;
                st.v[j] = h_.beta2 * st.v[j] + (1.0 - h_.beta2) * g * g;
                const double mhat = st.m[j] / bc1;
                const double vhat = st.v[j] / bc2;
                double x = data[j];
                x -= lr * h_.weight_decay * x;  // decoupled decay
                x -= lr * mhat / (std::sqrt(vhat) + h_.eps);
                data[j] = static_cast<T>(x);
            }
        }
    }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    Hyper h_;
    std::int64_t step_ = 0;
    std::vector<Moments> moments_;
};

using AdamW = AdamWT<float>;

}  // namespace toyvlm
