#include <gtest/gtest.h>

#include <cmath>

#include "ifdiff/diffusion.hpp"

using namespace ifdiff;

namespace {

NoiseSchedule toy_schedule() { return linear_schedule(10, 0.05, 0.3); }

// Dual form of the reverse-step mean, evaluated from predicted x_0:
//   mu = sqrt(abar_{t-1}) beta_t / (1-abar_t) * x0_hat
//      + sqrt(alpha_t) (1-abar_{t-1}) / (1-abar_t) * x_t
Tensor reverse_mean_dual(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                         const NoiseSchedule& s) {
    Tensor x0_hat = predict_x0_raw(x_t, eps_hat, t, s);
    double abar_prev = (t == 1) ? 1.0 : s.alpha_bar_at(t - 1);
    double omab = s.one_minus_alpha_bar_at(t);
    double c0 = std::sqrt(abar_prev) * s.beta_at(t) / omab;
    double ct = std::sqrt(s.alpha_at(t)) * (1.0 - abar_prev) / omab;
    Tensor mu(x_t.shape());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        mu[i] = c0 * x0_hat[i] + ct * x_t[i];
    }
    return mu;
}

}  // namespace

TEST(ForwardStep, Arithmetic) {
    NoiseSchedule s = linear_schedule(2, 0.19, 0.19);  // sqrt(0.81) = 0.9
    Tensor x = Tensor::from_values({1.0, -0.5});
    Tensor zero = Tensor::from_values({0.0, 0.0});
    Tensor out = forward_step(x, 1, s, zero);
    EXPECT_NEAR(out[0], 0.9, 1e-15);
    EXPECT_NEAR(out[1], -0.45, 1e-15);

    Tensor e = Tensor::from_values({2.0, -1.0});
    Tensor from_zero = forward_step(zero, 1, s, e);
    double sb = std::sqrt(s.beta_at(1));
    EXPECT_EQ(from_zero[0], sb * 2.0);
    EXPECT_EQ(from_zero[1], sb * -1.0);

    EXPECT_THROW(forward_step(x, 0, s, zero), ConfigError);
    EXPECT_THROW(forward_step(x, 3, s, zero), ConfigError);
}

TEST(ForwardJump, Arithmetic) {
    // schedule with abar_2 = 0.25: alpha = 0.5 each step
    NoiseSchedule s = linear_schedule(2, 0.5, 0.5);
    Tensor one = Tensor::from_values({1.0});
    Tensor zero = Tensor::from_values({0.0});
    EXPECT_DOUBLE_EQ(forward_jump(one, 2, s, zero)[0], 0.5);
    Tensor e = Tensor::from_values({1.0});
    EXPECT_NEAR(forward_jump(one, 2, s, e)[0], 0.5 + std::sqrt(0.75), 1e-15);
}

TEST(ForwardStep, IteratedMatchesJumpInMoments) {
    // Scalar Monte Carlo: first two moments of the iterated chain against
    // the closed-form jump, within 4 standard errors.
    NoiseSchedule s = toy_schedule();
    const std::size_t N = 20000;
    const std::size_t t = 6;
    const double x0 = 0.7;
    Rng rng(123);
    double sum_it = 0, sq_it = 0, sum_jp = 0, sq_jp = 0;
    Tensor start = Tensor::from_values({x0});
    for (std::size_t i = 0; i < N; ++i) {
        Tensor x = start;
        for (std::size_t step = 1; step <= t; ++step) {
            x = forward_step(x, step, s, normal(rng, {1}));
        }
        sum_it += x[0];
        sq_it += x[0] * x[0];
        Tensor j = forward_jump(start, t, s, normal(rng, {1}));
        sum_jp += j[0];
        sq_jp += j[0] * j[0];
    }
    double n = static_cast<double>(N);
    double m_it = sum_it / n, m_jp = sum_jp / n;
    double v_it = sq_it / n - m_it * m_it, v_jp = sq_jp / n - m_jp * m_jp;
    double se_mean = std::sqrt(v_it / n + v_jp / n);
    EXPECT_LT(std::abs(m_it - m_jp), 4.0 * se_mean);
    double se_var = std::sqrt(2.0 * (v_it * v_it + v_jp * v_jp) / n);
    EXPECT_LT(std::abs(v_it - v_jp), 4.0 * se_var);
}

TEST(PredictX0, InvertsJump) {
    NoiseSchedule s = toy_schedule();
    Rng rng(5);
    Tensor x0 = normal(rng, {8});
    for (std::size_t i = 0; i < 8; ++i) x0[i] = std::tanh(x0[i]);  // keep in [-1,1]
    for (std::size_t t = 1; t <= s.T; ++t) {
        Tensor eps = normal(rng, {8});
        Tensor x_t = forward_jump(x0, t, s, eps);
        Tensor rec = predict_x0_raw(x_t, eps, t, s);
        for (std::size_t i = 0; i < 8; ++i) {
            // identity in exact arithmetic; binary64 leaves rounding residue
            EXPECT_NEAR(rec[i], x0[i], 1e-12);
        }
    }
}

TEST(PredictX0, ZeroNoiseEstimate) {
    NoiseSchedule s = toy_schedule();
    Tensor x = Tensor::from_values({0.4, -0.2});
    Tensor zero = Tensor::from_values({0.0, 0.0});
    Tensor out = predict_x0_raw(x, zero, 3, s);
    double a = std::sqrt(s.alpha_bar_at(3));
    EXPECT_EQ(out[0], x[0] / a);
    EXPECT_EQ(out[1], x[1] / a);
}

TEST(PredictX0, ClampEngagesOnlyBeyondThree) {
    NoiseSchedule s = toy_schedule();
    Tensor x = Tensor::from_values({100.0, 0.1});
    Tensor zero = Tensor::from_values({0.0, 0.0});
    Tensor raw = predict_x0_raw(x, zero, s.T, s);
    Tensor clamped = predict_x0(x, zero, s.T, s);
    EXPECT_GT(raw[0], 3.0);
    EXPECT_EQ(clamped[0], 3.0);
    EXPECT_EQ(clamped[1], raw[1]);  // inside the window: untouched
}

TEST(ReverseStep, ZeroEstimateZeroNoise) {
    NoiseSchedule s = toy_schedule();
    Tensor x = Tensor::from_values({0.8});
    Tensor zero = Tensor::from_values({0.0});
    Tensor out = reverse_step(x, 4, zero, s, zero);
    EXPECT_NEAR(out[0], x[0] / std::sqrt(s.alpha_at(4)), 1e-15);
}

TEST(ReverseStep, SingleStepRecoversX0WithOracle) {
    // At t = 1, abar_1 = alpha_1, so the mean formula collapses to x_0.
    NoiseSchedule s = toy_schedule();
    Rng rng(8);
    Tensor x0 = Tensor::from_values({0.5, -0.9, 0.1});
    Tensor eps = normal(rng, {3});
    Tensor x1 = forward_jump(x0, 1, s, eps);
    Tensor zero({3});
    Tensor back = reverse_step(x1, 1, eps, s, zero);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(back[i], x0[i], 1e-12);
}

TEST(ReverseStep, RejectsNonzeroNoiseAtTEqualOne) {
    NoiseSchedule s = toy_schedule();
    Tensor x = Tensor::from_values({0.5});
    Tensor z = Tensor::from_values({0.1});
    Tensor zero = Tensor::from_values({0.0});
    EXPECT_THROW(reverse_step(x, 1, zero, s, z), ContractError);
}

TEST(ReverseStep, MeanMatchesDualForm) {
    NoiseSchedule s = toy_schedule();
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t t = 1 + rng.below(s.T);
        Tensor x_t = normal(rng, {6});
        Tensor eps_hat = normal(rng, {6});
        Tensor zero({6});
        Tensor mu = reverse_step(x_t, t, eps_hat, s, zero);
        Tensor mu_dual = reverse_mean_dual(x_t, t, eps_hat, s);
        for (std::size_t i = 0; i < 6; ++i) {
            EXPECT_NEAR(mu[i], mu_dual[i], 1e-12);
        }
    }
}

TEST(Sample, DeterministicAndClamped) {
    NoiseSchedule s = toy_schedule();
    DenoiserDims dims;
    dims.input = 2 * 3 * 3;
    dims.hidden = 8;
    dims.layers = 2;
    dims.time_dim = 4;
    dims.cond_dim = 2;
    DenoiserParams params = denoiser_init(4, dims);
    EpsModel model = make_eps_model(params, s.T);
    Condition c;
    c.histogram = {0.6, 0.4};

    Rng r1(55), r2(55);
    auto a = sample(model, c, s, r1, 2, 3, 3, 2);
    auto b = sample(model, c, s, r2, 2, 3, 3, 2);
    ASSERT_EQ(a.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(a[i].data.values(), b[i].data.values());
        for (double v : a[i].data.values()) {
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Reconstruct, PerfectOracleSingleStepIsExact) {
    // Oracle predictor returns the true injected noise; it reproduces the
    // reconstruction rng stream to know it.
    NoiseSchedule s = toy_schedule();
    ViewHierarchy vh;
    vh.screen_w = vh.screen_h = 60;
    vh.elements.push_back({1, 0.0, 0.0, 60.0, 30.0});
    LayoutGrid x0 = rasterize(vh, 3, 3, 2);
    Condition c = extract_condition(x0);

    const std::uint64_t seed = 314;
    Rng preview(seed);
    Tensor true_eps = normal(preview, {2, 3, 3});
    EpsModel oracle = [&](const std::vector<double>&, std::size_t,
                          const Condition&) { return true_eps.values(); };

    Rng rng(seed);
    LayoutGrid rec = reconstruct(oracle, x0, c, s, 1, rng,
                                 ReverseVariance::Posterior, true);
    for (std::size_t i = 0; i < x0.data.size(); ++i) {
        EXPECT_NEAR(rec.data[i], x0.data[i], 1e-12);
    }
}

TEST(Reconstruct, RejectsBadTStar) {
    NoiseSchedule s = toy_schedule();
    LayoutGrid x0(3, 3, 2);
    Condition c;
    c.histogram = {1.0, 0.0};
    EpsModel zero_model = [](const std::vector<double>& x, std::size_t,
                             const Condition&) {
        return std::vector<double>(x.size(), 0.0);
    };
    Rng rng(1);
    EXPECT_THROW(reconstruct(zero_model, x0, c, s, 0, rng), ConfigError);
    EXPECT_THROW(reconstruct(zero_model, x0, c, s, s.T + 1, rng), ConfigError);
}

TEST(ForwardJump, TerminalGaussianization) {
    // Default schedule reaches abar_T < 0.01; jumped samples from bounded
    // data are then close to standard normal in the first two moments.
    NoiseSchedule s = linear_schedule(200, 1e-4, 0.05);
    ASSERT_LT(s.alpha_bar_at(s.T), 0.01);
    Rng rng(99);
    const std::size_t N = 10000;
    Tensor x0 = Tensor::from_values({0.9});
    double acc = 0, sq = 0;
    for (std::size_t i = 0; i < N; ++i) {
        Tensor out = forward_jump(x0, s.T, s, normal(rng, {1}));
        acc += out[0];
        sq += out[0] * out[0];
    }
    double m = acc / N;
    double v = sq / N - m * m;
    EXPECT_LT(std::abs(m), 0.1);
    EXPECT_GT(v, 0.94);
    EXPECT_LT(v, 1.06);
}
