#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "ifdiff/denoiser.hpp"
#include "ifdiff/errors.hpp"
#include "ifdiff/layout.hpp"
#include "ifdiff/rng.hpp"
#include "ifdiff/schedule.hpp"
#include "ifdiff/tensor.hpp"

namespace ifdiff {

/// Which variance the reverse step uses. Posterior (beta~_t) is the
/// default; plain beta_t is kept for the sweep harness.
enum class ReverseVariance { Posterior, Beta };

/// One (x_0, eps, t, c) draw from the training distribution plus the noised
/// state derived from it.
struct TrainingTriple {
    Tensor x0;
    Tensor x_t;
    Tensor eps;
    std::size_t t = 1;
    Condition cond;
};

/// Single noising step: sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * eps.
/// The noise is an explicit argument so the op stays pure.
inline Tensor forward_step(const Tensor& x_prev, std::size_t t,
                           const NoiseSchedule& sched, const Tensor& eps) {
    detail::require_same_shape(x_prev, eps, "forward_step");
    double a = std::sqrt(sched.alpha_at(t));
    double b = std::sqrt(sched.beta_at(t));
    Tensor out(x_prev.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x_prev[i] + b * eps[i];
    return out;
}

/// Closed-form jump to step t: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
inline Tensor forward_jump(const Tensor& x0, std::size_t t,
                           const NoiseSchedule& sched, const Tensor& eps) {
    detail::require_same_shape(x0, eps, "forward_jump");
    double a = std::sqrt(sched.alpha_bar_at(t));
    double b = std::sqrt(sched.one_minus_alpha_bar_at(t));
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

/// Invert the jump with a noise estimate: (x_t - sqrt(1-abar)*eps_hat)/sqrt(abar).
/// No clamp; this is the value training differentiates through.
inline Tensor predict_x0_raw(const Tensor& x_t, const Tensor& eps_hat, std::size_t t,
                             const NoiseSchedule& sched) {
    detail::require_same_shape(x_t, eps_hat, "predict_x0");
    double a = std::sqrt(sched.alpha_bar_at(t));
    double b = std::sqrt(sched.one_minus_alpha_bar_at(t));
    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - b * eps_hat[i]) / a;
    return out;
}

/// predict_x0_raw clamped to [-3, 3] for numerical safety.
inline Tensor predict_x0(const Tensor& x_t, const Tensor& eps_hat, std::size_t t,
                         const NoiseSchedule& sched) {
    Tensor out = predict_x0_raw(x_t, eps_hat, t, sched);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], -3.0, 3.0);
    return out;
}

/// One reverse step under the epsilon parameterization:
///   mu = (x_t - beta_t/sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t)
///   x_{t-1} = mu + sigma_t * z
/// z must be the zero tensor at t = 1 (the chain ends deterministically).
inline Tensor reverse_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                           const NoiseSchedule& sched, const Tensor& z,
                           ReverseVariance var = ReverseVariance::Posterior) {
    detail::require_same_shape(x_t, eps_hat, "reverse_step");
    detail::require_same_shape(x_t, z, "reverse_step");
    double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
    double sqrt_omab = std::sqrt(sched.one_minus_alpha_bar_at(t));
    // At t = 1, beta_1 / sqrt(1-abar_1) equals sqrt(beta_1); using the sqrt
    // form directly keeps the oracle round trip exact to rounding.
    double eps_coef =
        (t == 1) ? sqrt_omab : sched.beta_at(t) / sqrt_omab;
    double sigma = std::sqrt(var == ReverseVariance::Posterior
                                 ? sched.posterior_var_at(t)
                                 : sched.beta_at(t));
    Tensor out(x_t.shape());
    if (t == 1) {
        for (std::size_t i = 0; i < z.size(); ++i) {
            if (z[i] != 0.0) {
                throw ContractError("reverse_step: z must be zero at t = 1");
            }
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = (x_t[i] - eps_coef * eps_hat[i]) * inv_sqrt_alpha;
        }
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (x_t[i] - eps_coef * eps_hat[i]) * inv_sqrt_alpha + sigma * z[i];
    }
    return out;
}

/// Noise predictor as a function of (x_t flat, t, condition). Wrapping the
/// network this way lets tests drop in oracle predictors.
using EpsModel = std::function<std::vector<double>(
    const std::vector<double>& x_t, std::size_t t, const Condition& c)>;

inline EpsModel make_eps_model(const DenoiserParams& params, std::size_t T) {
    return [&params, T](const std::vector<double>& x_t, std::size_t t,
                        const Condition& c) {
        auto out = denoiser_forward(params, {x_t}, {t}, T, {c.as_vector()});
        return out[0];
    };
}

namespace detail {

/// Shared reverse chain from x at step t_start down to x_0.
inline Tensor reverse_chain(Tensor x, std::size_t t_start, const EpsModel& model,
                            const Condition& c, const NoiseSchedule& sched, Rng& rng,
                            ReverseVariance var, bool deterministic = false) {
    for (std::size_t t = t_start; t >= 1; --t) {
        std::vector<double> eps_hat_v = model(x.values(), t, c);
        Tensor eps_hat(x.shape(), std::move(eps_hat_v));
        Tensor z(x.shape());
        if (t > 1 && !deterministic) z = normal(rng, x.shape());
        x = reverse_step(x, t, eps_hat, sched, z, var);
    }
    return x;
}

inline void clamp_unit(Tensor& x) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], -1.0, 1.0);
}

}  // namespace detail

/// Ancestral sampling: x_T ~ N(0, I), then reverse steps down to x_0.
/// Values are clamped to [-1, 1] only at the end of the chain.
inline std::vector<LayoutGrid> sample(const EpsModel& model, const Condition& c,
                                      const NoiseSchedule& sched, Rng& rng,
                                      std::size_t n, std::size_t H, std::size_t W,
                                      std::size_t K,
                                      ReverseVariance var = ReverseVariance::Posterior) {
    if (n < 1) throw ConfigError("sample: n must be >= 1");
    std::vector<LayoutGrid> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor x = normal(rng, {K, H, W});
        x = detail::reverse_chain(std::move(x), sched.T, model, c, sched, rng, var);
        detail::clamp_unit(x);
        LayoutGrid g(H, W, K);
        g.data = std::move(x);
        out.push_back(std::move(g));
    }
    return out;
}

/// Round-trip reconstruction: noise x_0 to step t_star with the closed-form
/// jump, then run the reverse chain back down. The PSNR reference protocol.
inline LayoutGrid reconstruct(const EpsModel& model, const LayoutGrid& x0,
                              const Condition& c, const NoiseSchedule& sched,
                              std::size_t t_star, Rng& rng,
                              ReverseVariance var = ReverseVariance::Posterior,
                              bool deterministic = false) {
    if (t_star < 1 || t_star > sched.T) throw ConfigError("t_star outside 1..T");
    Tensor eps = normal(rng, x0.data.shape());
    Tensor x = forward_jump(x0.data, t_star, sched, eps);
    x = detail::reverse_chain(std::move(x), t_star, model, c, sched, rng, var,
                              deterministic);
    detail::clamp_unit(x);
    LayoutGrid g(x0.H, x0.W, x0.K);
    g.data = std::move(x);
    return g;
}

}  // namespace ifdiff
