#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "ifdiff/errors.hpp"

namespace ifdiff {

/// Per-step noise schedule and everything derived from it. Arrays are
/// stored 0-based; every public accessor takes the math convention t in
/// 1..T. Immutable after construction.
///
/// one_minus_alpha_bar[0] is defined as beta[0] (they are equal in exact
/// arithmetic; storing beta[0] keeps the t=1 forward/reverse coefficients
/// consistent to the last bit).
struct NoiseSchedule {
    std::size_t T = 0;
    std::vector<double> beta;                 // beta_t
    std::vector<double> alpha;                // 1 - beta_t
    std::vector<double> alpha_bar;            // prod_{s<=t} alpha_s
    std::vector<double> one_minus_alpha_bar;  // 1 - alpha_bar_t
    std::vector<double> posterior_var;        // beta~_t, with beta~_1 := beta_1

    double beta_at(std::size_t t) const { return beta[check(t)]; }
    double alpha_at(std::size_t t) const { return alpha[check(t)]; }
    double alpha_bar_at(std::size_t t) const { return alpha_bar[check(t)]; }
    double one_minus_alpha_bar_at(std::size_t t) const {
        return one_minus_alpha_bar[check(t)];
    }
    double posterior_var_at(std::size_t t) const { return posterior_var[check(t)]; }

    std::size_t check(std::size_t t) const {
        if (t < 1 || t > T) throw ConfigError("step index out of range 1..T");
        return t - 1;
    }
};

namespace detail {

/// Fill all derived arrays from beta. Shared by every constructor so the
/// reconstruction invariant (alpha_bar[t] == alpha_bar[t-1]*alpha[t]) holds
/// bit-exactly for any schedule, including rescaled ones.
inline NoiseSchedule schedule_from_beta(std::vector<double> beta) {
    NoiseSchedule s;
    s.T = beta.size();
    s.beta = std::move(beta);
    s.alpha.resize(s.T);
    s.alpha_bar.resize(s.T);
    s.one_minus_alpha_bar.resize(s.T);
    s.posterior_var.resize(s.T);
    double cum = 1.0;
    for (std::size_t i = 0; i < s.T; ++i) {
        if (!(s.beta[i] > 0.0 && s.beta[i] < 1.0)) {
            throw ConfigError("beta_t must lie in (0, 1)");
        }
        s.alpha[i] = 1.0 - s.beta[i];
        double prev_bar = cum;
        cum = cum * s.alpha[i];
        s.alpha_bar[i] = cum;
        s.one_minus_alpha_bar[i] = (i == 0) ? s.beta[0] : 1.0 - cum;
        s.posterior_var[i] =
            (i == 0) ? s.beta[0]
                     : s.beta[i] * (1.0 - prev_bar) / s.one_minus_alpha_bar[i];
    }
    return s;
}

}  // namespace detail

/// Linear beta ramp from beta_min to beta_max over T steps.
inline NoiseSchedule linear_schedule(std::size_t T, double beta_min, double beta_max) {
    if (T < 2) throw ConfigError("schedule needs T >= 2");
    if (!(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max)) {
        throw ConfigError("need 0 < beta_min <= beta_max < 1");
    }
    std::vector<double> beta(T);
    for (std::size_t i = 0; i < T; ++i) {
        beta[i] = beta_min + static_cast<double>(i) / static_cast<double>(T - 1) *
                                 (beta_max - beta_min);
    }
    return detail::schedule_from_beta(std::move(beta));
}

/// Cosine schedule: alpha_bar follows f(t)/f(0) with
/// f(u) = cos^2(((u/T + s)/(1 + s)) * pi/2); beta derived and clipped to
/// [1e-6, 0.999].
inline NoiseSchedule cosine_schedule(std::size_t T, double s = 0.008) {
    if (T < 2) throw ConfigError("schedule needs T >= 2");
    if (!(s > 0.0)) throw ConfigError("cosine offset s must be positive");
    auto f = [&](double u) {
        double v = std::cos(((u / static_cast<double>(T)) + s) / (1.0 + s) *
                            std::numbers::pi / 2.0);
        return v * v;
    };
    double f0 = f(0.0);
    std::vector<double> beta(T);
    double prev_bar = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
        double bar = f(static_cast<double>(i + 1)) / f0;
        double b = 1.0 - bar / prev_bar;
        beta[i] = std::clamp(b, 1e-6, 0.999);
        prev_bar = bar;
    }
    return detail::schedule_from_beta(std::move(beta));
}

/// Multiply every beta_t by `factor` and rebuild the derived arrays. The
/// sensitivity-sweep knob.
inline NoiseSchedule scale_schedule(const NoiseSchedule& sched, double factor) {
    if (!(factor > 0.0)) throw ConfigError("schedule scale factor must be positive");
    std::vector<double> beta(sched.T);
    for (std::size_t i = 0; i < sched.T; ++i) {
        beta[i] = factor * sched.beta[i];
        if (beta[i] >= 1.0) {
            throw ConfigError("scaled beta_t reaches 1 at step " +
                              std::to_string(i + 1));
        }
    }
    return detail::schedule_from_beta(std::move(beta));
}

}  // namespace ifdiff
