#include <doctest.h>

#include <cmath>

#include "toyvlm/optim.hpp"

using namespace toyvlm;

namespace {

TensorT<double> leaf2(double a, double b) {
    auto t = TensorT<double>::from_data({2}, {a, b}, true);
    t.zero_grad();
    return t;
}

}  // namespace

TEST_CASE("adamw matches a hand-stepped two-step transcript") {
    auto p = leaf2(1.0, -2.0);
    std::vector<TensorT<double>> params{p};
    AdamWT<double> opt;

    p.grad()[0] = 0.5;
    p.grad()[1] = -1.0;
    opt.step(params, 0.1);
    CHECK(p.data()[0] == doctest::Approx(0.899000002).epsilon(1e-10));
    CHECK(p.data()[1] == doctest::Approx(-1.898000001).epsilon(1e-10));

    p.grad()[0] = 0.25;
    p.grad()[1] = 0.5;
    opt.step(params, 0.1);
    CHECK(p.data()[0] == doctest::Approx(0.8041716975633959).epsilon(1e-10));
    CHECK(p.data()[1] == doctest::Approx(-1.8692650565327222).epsilon(1e-10));
    CHECK(opt.step_count() == 2);
}

TEST_CASE("adamw with zero gradients only applies decay") {
    auto p = leaf2(4.0, -8.0);
    std::vector<TensorT<double>> params{p};
    AdamWT<double> opt;
    p.grad()[0] = 0.0;
    p.grad()[1] = 0.0;
    const double lr = 0.5;
    opt.step(params, lr);
    // m = v = 0 so the adaptive term vanishes; only x -= lr*wd*x remains.
    CHECK(p.data()[0] == doctest::Approx(4.0 * (1.0 - lr * 0.01)).epsilon(1e-12));
    CHECK(p.data()[1] == doctest::Approx(-8.0 * (1.0 - lr * 0.01)).epsilon(1e-12));
}

TEST_CASE("weight decay shrinks magnitudes monotonically under zero grad") {
    auto p = leaf2(3.0, -3.0);
    std::vector<TensorT<double>> params{p};
    AdamWT<double> opt;
    double prev = 3.0;
    for (int i = 0; i < 5; ++i) {
        p.grad()[0] = 0.0;
        p.grad()[1] = 0.0;
        opt.step(params, 0.1);
        CHECK(std::abs(p.data()[0]) < prev);
        CHECK(p.data()[0] == doctest::Approx(-p.data()[1]).epsilon(1e-12));
        prev = std::abs(p.data()[0]);
    }
}

TEST_CASE("adamw rejects shape drift and missing gradients") {
    auto p = leaf2(1.0, 1.0);
    std::vector<TensorT<double>> params{p};
    AdamWT<double> opt;
    opt.step(params, 0.1);

    auto q = TensorT<double>::zeros({3}, true);
    q.zero_grad();
    std::vector<TensorT<double>> drifted{q};
    CHECK_THROWS_AS(opt.step(drifted, 0.1), ConfigError);

    std::vector<TensorT<double>> two{p, q};
    CHECK_THROWS_AS(opt.step(two, 0.1), ConfigError);
}

TEST_CASE("cosine schedule hits endpoints and midpoint") {
    LrSchedule s{5e-5, 0.0, 100};
    CHECK(cosine_lr(s, 0) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK(cosine_lr(s, 100) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_lr(s, 50) == doctest::Approx(2.5e-5).epsilon(1e-9));

    LrSchedule t{2e-5, 1e-6, 8};
    CHECK(cosine_lr(t, 0) == doctest::Approx(2e-5).epsilon(1e-12));
    CHECK(cosine_lr(t, 8) == doctest::Approx(1e-6).epsilon(1e-12));
    // Monotone non-increasing across the whole run.
    double prev = cosine_lr(t, 0);
    for (int i = 1; i <= 8; ++i) {
        const double cur = cosine_lr(t, i);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
}

TEST_CASE("cosine schedule rejects out-of-range steps") {
    LrSchedule s{1e-3, 0.0, 10};
    CHECK_THROWS_AS(cosine_lr(s, -1), ConfigError);
    CHECK_THROWS_AS(cosine_lr(s, 11), ConfigError);
    LrSchedule bad{1e-3, 0.0, 0};
    CHECK_THROWS_AS(cosine_lr(bad, 0), ConfigError);
}
