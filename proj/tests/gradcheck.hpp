#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "toyvlm/rng.hpp"
#include "toyvlm/tensor.hpp"

// Central finite differences in double precision, h = 1e-5. `make_loss`
// must rebuild the whole graph from the leaf tensors every call.
inline double fd_grad(const std::function<toyvlm::TensorT<double>()>& make_loss,
                      toyvlm::TensorT<double>& leaf, std::size_t idx, double h = 1e-5) {
    const double orig = leaf.data()[idx];
    leaf.data()[idx] = orig + h;
    const double up = make_loss().item();
    leaf.data()[idx] = orig - h;
    const double down = make_loss().item();
    leaf.data()[idx] = orig;
    return (up - down) / (2 * h);
}

// Checks analytic gradients of every leaf against finite differences on
// up to `samples` randomly chosen coordinates per leaf. Returns the max
// relative error seen.
inline double gradcheck(const std::function<toyvlm::TensorT<double>()>& make_loss,
                        std::vector<toyvlm::TensorT<double>> leaves, toyvlm::Rng& rng,
                        int samples = 20) {
    using namespace toyvlm;
    auto loss = make_loss();
    for (auto& l : leaves) l.zero_grad();
    backward(loss);
    double worst = 0;
    for (auto& leaf : leaves) {
        const int n = static_cast<int>(leaf.numel());
        for (int s = 0; s < std::min(samples, n); ++s) {
            const std::size_t idx = n <= samples ? static_cast<std::size_t>(s)
                                                 : static_cast<std::size_t>(rng.uniform_int(0, n - 1));
            const double analytic = leaf.grad()[idx];
            const double numeric = fd_grad(make_loss, leaf, idx);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}
