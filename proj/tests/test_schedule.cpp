#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "segen/schedule.hpp"

using namespace seg;

namespace {

// Independent closed-form evaluation of the squared-cosine schedule
// (double precision, scalar, beta-clamped cumulative product).
double cosine_alpha_oracle(int T, int t) {
    const double s = 0.008;
    auto f = [&](double u) {
        double c = std::cos((u + s) / (1.0 + s) * M_PI / 2.0);
        return c * c;
    };
    double cum = 1.0, prev = 1.0;
    for (int i = 0; i <= t; ++i) {
        double cur = f(static_cast<double>(i + 1) / T) / f(0.0);
        double beta = std::min(1.0 - cur / prev, 0.999);
        cum *= 1.0 - beta;
        prev = cur;
    }
    return std::sqrt(cum);
}

void check_invariants(const NoiseSchedule& s) {
    for (int t = 0; t < s.num_train_steps; ++t) {
        CHECK(s.alphas[t] > 0.0f);
        CHECK(s.alphas[t] <= 1.0f);
        CHECK(s.sigmas[t] >= 0.0f);
        CHECK(s.sigmas[t] < 1.0f);
        float vp = s.alphas[t] * s.alphas[t] + s.sigmas[t] * s.sigmas[t];
        CHECK(std::fabs(vp - 1.0f) < 1e-6f);
        if (t > 0) {
            CHECK(s.alphas[t] < s.alphas[t - 1]);
            CHECK(s.sigmas[t] > s.sigmas[t - 1]);
        }
    }
}

}  // namespace

TEST_CASE("cosine 1000 endpoints and invariants") {
    auto s = make_noise_schedule(1000, ScheduleKind::Cosine);
    CHECK(s.alphas[0] > 0.99f);
    CHECK(s.alphas[999] < 0.05f);
    check_invariants(s);
}

TEST_CASE("linear minimal two-step schedule") {
    auto s = make_noise_schedule(2, ScheduleKind::Linear);
    CHECK(s.num_train_steps == 2);
    check_invariants(s);
}

TEST_CASE("linear 1000 invariants") { check_invariants(make_noise_schedule(1000, ScheduleKind::Linear)); }

TEST_CASE("cosine 50 midpoint matches independent closed form") {
    auto s = make_noise_schedule(50, ScheduleKind::Cosine);
    double oracle = cosine_alpha_oracle(50, 25);
    CHECK(std::fabs(s.alphas[25] - oracle) < 1e-6);
    // frozen from the oracle evaluation
    CHECK(std::fabs(s.alphas[25] - 0.8627f) < 2e-3f);
}

TEST_CASE("num_train_steps below 2 rejected") {
    CHECK_THROWS_AS(make_noise_schedule(1, ScheduleKind::Cosine), std::invalid_argument);
    CHECK_THROWS_AS(make_noise_schedule(0, ScheduleKind::Linear), std::invalid_argument);
}

TEST_CASE("add_noise noiseless endpoint returns z0 unchanged") {
    NoiseSchedule s;
    s.num_train_steps = 2;
    s.alphas = {1.0f, 0.6f};
    s.sigmas = {0.0f, 0.8f};
    RandomStream rng(1);
    Tensor z0({2, 3, 3}), eps({2, 3, 3});
    rng.fill_normal(z0);
    rng.fill_normal(eps);
    Tensor out = add_noise(z0, eps, 0, s);
    for (int64_t i = 0; i < z0.numel(); ++i) CHECK(out[i] == z0[i]);
}

TEST_CASE("add_noise of zero latent is sigma times eps") {
    auto s = make_noise_schedule(100, ScheduleKind::Cosine);
    RandomStream rng(2);
    Tensor z0({4, 2, 2});
    Tensor eps({4, 2, 2});
    rng.fill_normal(eps);
    Tensor out = add_noise(z0, eps, 42, s);
    for (int64_t i = 0; i < eps.numel(); ++i) CHECK(out[i] == doctest::Approx(s.sigmas[42] * eps[i]).epsilon(1e-6));
}

TEST_CASE("add_noise matches scalar-loop affine oracle") {
    auto s = make_noise_schedule(100, ScheduleKind::Linear);
    RandomStream rng(3);
    Tensor z0({4, 8, 8}), eps({4, 8, 8});
    rng.fill_normal(z0);
    rng.fill_normal(eps);
    int t = 10;
    Tensor out = add_noise(z0, eps, t, s);
    for (int64_t i = 0; i < z0.numel(); ++i) {
        float want = s.alphas[t] * z0[i] + s.sigmas[t] * eps[i];
        CHECK(out[i] == want);
    }
}

TEST_CASE("add_noise errors") {
    auto s = make_noise_schedule(10, ScheduleKind::Linear);
    Tensor a({2, 2}), b({2, 3});
    CHECK_THROWS_AS(add_noise(a, b, 0, s), std::invalid_argument);
    Tensor c({2, 2});
    CHECK_THROWS_AS(add_noise(a, c, 10, s), std::out_of_range);
    CHECK_THROWS_AS(add_noise(a, c, -1, s), std::out_of_range);
}

TEST_CASE("ddim timesteps descend from T-1") {
    auto s = make_noise_schedule(1000, ScheduleKind::Cosine);
    auto ts = ddim_timesteps(s, 50);
    CHECK(ts.size() == 50);
    CHECK(ts[0] == 999);
    for (size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
    CHECK(ts.back() >= 0);
    CHECK_THROWS(ddim_timesteps(s, 1001));
}
