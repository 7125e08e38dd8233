#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <synthval/common.hpp>
#include <synthval/schedule.hpp>

using namespace synthval;
using namespace synthval::diff;

TEST_CASE("linear schedule matches direct products") {
    const NoiseSchedule s = NoiseSchedule::linear(4, 0.1, 0.4);
    REQUIRE(s.T == 4);
    const double want_beta[4] = {0.1, 0.2, 0.3, 0.4};
    const double want_ab[4] = {0.9, 0.72, 0.504, 0.3024};
    for (int t = 1; t <= 4; ++t) {
        CHECK(s.beta[(size_t)t] == doctest::Approx(want_beta[t - 1]).epsilon(1e-12));
        CHECK(s.alpha_bar[(size_t)t] == doctest::Approx(want_ab[t - 1]).epsilon(1e-12));
    }

    const NoiseSchedule s1 = NoiseSchedule::linear(1, 0.75, 0.9);
    CHECK(s1.beta[1] == 0.75);
    CHECK(s1.alpha_bar[1] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("schedule invariants hold for the training configuration") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.01);
    for (int t = 1; t <= s.T; ++t) {
        CHECK(s.beta[(size_t)t] > 0.0);
        CHECK(s.beta[(size_t)t] < 1.0);
        if (t > 1) {
            CHECK(s.beta[(size_t)t] >= s.beta[(size_t)t - 1]);
            CHECK(s.alpha_bar[(size_t)t] < s.alpha_bar[(size_t)t - 1]);
            // the defining product identity, exact in double
            CHECK(s.alpha_bar[(size_t)t] ==
                  doctest::Approx(s.alpha_bar[(size_t)t - 1] * s.alpha[(size_t)t])
                      .epsilon(1e-15));
        }
    }
    CHECK_THROWS_AS(NoiseSchedule::linear(0, 0.1, 0.2), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.2), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.3, 0.2), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.3, 1.0), ConfigError);
}

TEST_CASE("forward sampling matches the closed form") {
    const NoiseSchedule s = NoiseSchedule::linear(100, 1e-3, 0.02);
    Rng rng(31);
    const Tensor z0 = noise_like({2, 4, 4, 3}, rng);
    const Tensor eps = noise_like({2, 4, 4, 3}, rng);

    const int t = 40;
    const Tensor zt = forward_sample(z0, t, eps, s);
    const double ab = s.alpha_bar[(size_t)t];
    for (int i = 0; i < z0.size(); ++i) {
        const double want = std::sqrt(ab) * z0.values()[(size_t)i] +
                            std::sqrt(1.0 - ab) * eps.values()[(size_t)i];
        CHECK(zt.values()[(size_t)i] == doctest::Approx(want).epsilon(1e-6));
    }

    // zero signal reduces to scaled noise
    const Tensor zeros = Tensor::zeros({1, 2, 2, 1});
    const Tensor zt0 = forward_sample(zeros, t, noise_like({1, 2, 2, 1}, rng), s);
    CHECK(std::isfinite(zt0.values()[0]));

    CHECK_THROWS_AS(forward_sample(z0, 0, eps, s), std::out_of_range);
    CHECK_THROWS_AS(forward_sample(z0, 101, eps, s), std::out_of_range);
}

TEST_CASE("forward sampling has the right first two moments") {
    const NoiseSchedule s = NoiseSchedule::linear(50, 1e-3, 0.05);
    const int t = 25;
    const double ab = s.alpha_bar[(size_t)t];
    const Tensor z0 = Tensor::full({1, 1, 1, 1}, 2.0f);
    Rng rng(77);
    double sum = 0.0, sumsq = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Tensor zt = forward_sample(z0, t, noise_like({1, 1, 1, 1}, rng), s);
        sum += zt.values()[0];
        sumsq += (double)zt.values()[0] * zt.values()[0];
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(mean == doctest::Approx(std::sqrt(ab) * 2.0).epsilon(0.02));
    CHECK(var == doctest::Approx(1.0 - ab).epsilon(0.05));
}

TEST_CASE("clean-latent estimation inverts forward sampling") {
    const NoiseSchedule s = NoiseSchedule::linear(200, 1e-4, 0.02);
    Rng rng(5);
    const Tensor z0 = noise_like({3, 4, 4, 2}, rng);
    for (int t : {1, 2, 37, 100, 200}) {
        const Tensor eps = noise_like(z0.shape(), rng);
        const Tensor zt = forward_sample(z0, t, eps, s);
        const Tensor back = estimate_z0(zt, eps, t, s);
        for (int i = 0; i < z0.size(); ++i) {
            CHECK(std::abs(back.values()[(size_t)i] - z0.values()[(size_t)i]) < 1e-5f);
        }
    }
}

TEST_CASE("clean-latent estimation matches the scalar hand example") {
    // alpha_bar = 0.25 via a one-step schedule with beta = 0.75
    const NoiseSchedule s = NoiseSchedule::linear(1, 0.75, 0.75);
    const Tensor z0 = Tensor::full({1, 1, 1, 1}, 2.0f);
    const Tensor eps = Tensor::full({1, 1, 1, 1}, 1.0f);
    const Tensor zt = forward_sample(z0, 1, eps, s);
    CHECK(zt.values()[0] == doctest::Approx(1.8660254).epsilon(1e-6));
    const Tensor back = estimate_z0(zt, eps, 1, s);
    CHECK(back.values()[0] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("guidance endpoints are bit-exact and the scale extrapolates") {
    Rng rng(9);
    const Tensor u = noise_like({2, 2, 2, 2}, rng);
    const Tensor c = noise_like({2, 2, 2, 2}, rng);

    const Tensor at0 = apply_guidance(u, c, 0.0f);
    const Tensor at1 = apply_guidance(u, c, 1.0f);
    for (int i = 0; i < u.size(); ++i) {
        CHECK(at0.values()[(size_t)i] == u.values()[(size_t)i]);
        CHECK(at1.values()[(size_t)i] == c.values()[(size_t)i]);
    }

    const Tensor zero = Tensor::zeros({1, 1, 1, 1});
    const Tensor one = Tensor::full({1, 1, 1, 1}, 1.0f);
    const Tensor amplified = apply_guidance(zero, one, 7.5f);
    CHECK(amplified.values()[0] == doctest::Approx(7.5).epsilon(1e-7));
    CHECK_THROWS_AS(apply_guidance(u, c, -0.5f), ConfigError);
}

TEST_CASE("a perfect single reverse step recovers the clean latent") {
    const NoiseSchedule s = NoiseSchedule::linear(1, 0.3, 0.3);
    Rng rng(21);
    const Tensor z0 = noise_like({2, 3, 3, 2}, rng);
    const Tensor eps = noise_like(z0.shape(), rng);
    const Tensor z1 = forward_sample(z0, 1, eps, s);
    Rng step_rng(0);
    const Tensor back = ddpm_step(z1, 1, eps, s, step_rng);
    for (int i = 0; i < z0.size(); ++i) {
        CHECK(std::abs(back.values()[(size_t)i] - z0.values()[(size_t)i]) < 1e-5f);
    }
}

TEST_CASE("reverse steps are deterministic at t=1 and carry beta variance above") {
    const NoiseSchedule s = NoiseSchedule::linear(10, 0.01, 0.1);
    Rng rng(3);
    const Tensor zt = noise_like({1, 2, 2, 1}, rng);
    const Tensor eps = noise_like(zt.shape(), rng);

    Rng r1(42), r2(42), r3(43);
    const Tensor a = ddpm_step(zt, 1, eps, s, r1);
    const Tensor b = ddpm_step(zt, 1, eps, s, r2);
    const Tensor c = ddpm_step(zt, 1, eps, s, r3);
    for (int i = 0; i < a.size(); ++i) {
        CHECK(a.values()[(size_t)i] == b.values()[(size_t)i]);
        CHECK(a.values()[(size_t)i] == c.values()[(size_t)i]);  // no rng draw at t=1
    }

    // empirical variance of the injected noise at t=2 approximately beta_2
    Rng noisy(99);
    double sum = 0.0, sumsq = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Tensor out = ddpm_step(zt, 2, eps, s, noisy);
        sum += out.values()[0];
        sumsq += (double)out.values()[0] * out.values()[0];
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(var == doctest::Approx(s.beta[2]).epsilon(0.05));
}

TEST_CASE("strided steps cover T down to 1 without repeats") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.01);
    const auto steps = s.strided_steps(50);
    REQUIRE(steps.size() == 50);
    CHECK(steps.front() == 1000);
    CHECK(steps.back() == 1);
    for (size_t i = 1; i < steps.size(); ++i) CHECK(steps[i] < steps[i - 1]);

    const auto all = s.strided_steps(1000);
    REQUIRE(all.size() == 1000);
    CHECK(all.front() == 1000);
    CHECK(all.back() == 1);

    const NoiseSchedule tiny = NoiseSchedule::linear(4, 0.1, 0.2);
    const auto clipped = tiny.strided_steps(50);
    REQUIRE(clipped.size() == 4);
    CHECK(clipped == std::vector<int>{4, 3, 2, 1});

    CHECK(s.strided_steps(1) == std::vector<int>{1000});
}

TEST_CASE("respacing the full step list reproduces the schedule") {
    const NoiseSchedule s = NoiseSchedule::linear(64, 1e-3, 0.05);
    const NoiseSchedule sub = respaced(s, s.strided_steps(64));
    REQUIRE(sub.T == 64);
    for (int t = 1; t <= 64; ++t) {
        CHECK(sub.alpha_bar[t] == doctest::Approx(s.alpha_bar[t]).epsilon(1e-12));
        CHECK(sub.alpha[t] == doctest::Approx(s.alpha[t]).epsilon(1e-12));
        CHECK(sub.beta[t] == doctest::Approx(s.beta[t]).epsilon(1e-12));
    }
}

TEST_CASE("a respaced subchain keeps the original cumulative products") {
    const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.01);
    const auto plan = s.strided_steps(50);
    const NoiseSchedule sub = respaced(s, plan);
    REQUIRE(sub.T == 50);
    // Step k of the subchain lands on original timestep plan[T-k]; the
    // cumulative signal level must match there exactly, and the per-step
    // alphas must chain to it.
    double running = 1.0;
    for (int k = 1; k <= sub.T; ++k) {
        const int t_orig = plan[(size_t)(sub.T - k)];
        CHECK(sub.alpha_bar[k] == doctest::Approx(s.alpha_bar[t_orig]).epsilon(1e-12));
        running *= sub.alpha[k];
        CHECK(running == doctest::Approx(sub.alpha_bar[k]).epsilon(1e-9));
        CHECK(sub.beta[k] == doctest::Approx(1.0 - sub.alpha[k]).epsilon(1e-12));
        CHECK(sub.beta[k] > 0.0);
    }
    // Across a 20-step stride each jump removes far more signal than any
    // single original step does.
    CHECK(sub.beta[25] > 10.0 * s.beta[plan[25]]);
}

TEST_CASE("respacing rejects malformed plans") {
    const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.01);
    CHECK_THROWS_AS(respaced(s, {}), ConfigError);
    CHECK_THROWS_AS(respaced(s, {50, 50, 10}), ConfigError);
    CHECK_THROWS_AS(respaced(s, {10, 50}), ConfigError);
    CHECK_THROWS_AS(respaced(s, {101, 50}), std::out_of_range);
    CHECK_THROWS_AS(respaced(s, {50, 0}), std::out_of_range);
}
