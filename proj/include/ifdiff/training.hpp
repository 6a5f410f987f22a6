#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ifdiff/checkpoint.hpp"
#include "ifdiff/denoiser.hpp"
#include "ifdiff/diffusion.hpp"
#include "ifdiff/errors.hpp"
#include "ifdiff/layout.hpp"
#include "ifdiff/rng.hpp"
#include "ifdiff/schedule.hpp"
#include "ifdiff/tensor.hpp"

namespace ifdiff {

struct LossBreakdown {
    double l_simple = 0.0;
    double l_reg = 0.0;
    double l_total = 0.0;
    double lambda = 0.0;

    static LossBreakdown combine(double l_simple, double l_reg, double lambda) {
        LossBreakdown b;
        b.l_simple = l_simple;
        b.l_reg = l_reg;
        b.lambda = lambda;
        // l_total is constructed from the parts, so the decomposition
        // identity holds bitwise.
        b.l_total = l_simple + lambda * l_reg;
        return b;
    }
};

/// Draw a training batch: x_0 uniform from the corpus (with replacement),
/// t uniform in 1..T, eps standard normal, x_t by the closed-form jump.
inline std::vector<TrainingTriple> make_batch(const std::vector<LayoutGrid>& corpus,
                                              const std::vector<Condition>& conditions,
                                              const NoiseSchedule& sched, Rng& rng,
                                              std::size_t batch_size) {
    if (corpus.empty()) throw ConfigError("make_batch: empty corpus");
    if (conditions.size() != corpus.size()) {
        throw ConfigError("make_batch: conditions/corpus size mismatch");
    }
    std::vector<TrainingTriple> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        std::size_t idx = rng.below(corpus.size());
        std::size_t t = 1 + rng.below(sched.T);
        TrainingTriple triple;
        triple.x0 = corpus[idx].data;
        triple.eps = normal(rng, triple.x0.shape());
        triple.x_t = forward_jump(triple.x0, t, sched, triple.eps);
        triple.t = t;
        triple.cond = conditions[idx];
        batch.push_back(std::move(triple));
    }
    return batch;
}

/// Mean squared difference between true and predicted noise, over all
/// elements and the batch.
inline double loss_simple(const std::vector<Tensor>& eps_true,
                          const std::vector<Tensor>& eps_hat) {
    if (eps_true.size() != eps_hat.size() || eps_true.empty()) {
        throw ShapeError("loss_simple: batch size mismatch");
    }
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < eps_true.size(); ++i) {
        detail::require_same_shape(eps_true[i], eps_hat[i], "loss_simple");
        for (std::size_t j = 0; j < eps_true[i].size(); ++j) {
            double d = eps_true[i][j] - eps_hat[i][j];
            acc += d * d;
        }
        count += eps_true[i].size();
    }
    return acc / static_cast<double>(count);
}

/// KL(target || soft occupancy of x_hat0), averaged over the batch. The
/// estimated histogram is floored at 1e-12 inside the log; zero-mass target
/// entries contribute nothing.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw ShapeError("kl_divergence: size mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] > 0.0) acc += p[k] * std::log(p[k] / std::max(q[k], 1e-12));
    }
    return acc;
}

inline double loss_reg(const std::vector<LayoutGrid>& x_hat0,
                       const std::vector<Condition>& conditions, double temperature) {
    if (x_hat0.size() != conditions.size() || x_hat0.empty()) {
        throw ShapeError("loss_reg: batch size mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < x_hat0.size(); ++i) {
        conditions[i].validate();
        acc += kl_divergence(conditions[i].histogram,
                             soft_histogram(x_hat0[i], temperature));
    }
    return acc / static_cast<double>(x_hat0.size());
}

struct TotalLossResult {
    LossBreakdown loss;
    DenoiserGradients grads;
};

/// Combined objective: one denoiser forward per batch, then exact gradients
/// of l_simple + lambda * l_reg through the whole graph. The regularizer
/// differentiates through the (pre-clamp) predicted x_0 and the soft
/// histogram back into the noise prediction.
inline TotalLossResult loss_total(const std::vector<TrainingTriple>& batch,
                                  const DenoiserParams& params,
                                  const NoiseSchedule& sched, double lambda,
                                  double temperature) {
    if (batch.empty()) throw ConfigError("loss_total: empty batch");
    if (lambda < 0.0) throw ConfigError("loss_total: lambda must be >= 0");
    const std::size_t B = batch.size();
    const std::size_t D = params.dims.input;

    std::vector<std::vector<double>> x_flat(B), cond_vec(B);
    std::vector<std::size_t> t_batch(B);
    for (std::size_t i = 0; i < B; ++i) {
        x_flat[i] = batch[i].x_t.values();
        cond_vec[i] = batch[i].cond.as_vector();
        t_batch[i] = batch[i].t;
    }
    ForwardCache cache;
    auto eps_hat = denoiser_forward(params, x_flat, t_batch, sched.T, cond_vec, &cache);

    // l_simple and its gradient wrt eps_hat.
    double acc_sq = 0.0;
    std::vector<std::vector<double>> d_eps(B, std::vector<double>(D, 0.0));
    const double inv_bd = 1.0 / static_cast<double>(B * D);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < D; ++j) {
            double d = batch[i].eps[j] - eps_hat[i][j];
            acc_sq += d * d;
            d_eps[i][j] = 2.0 * (eps_hat[i][j] - batch[i].eps[j]) * inv_bd;
        }
    }
    double l_simple = acc_sq * inv_bd;

    double l_reg = 0.0;
    if (lambda > 0.0) {
        const std::size_t H = batch[0].x0.shape()[1];
        const std::size_t W = batch[0].x0.shape()[2];
        const std::size_t K = batch[0].x0.shape()[0];
        const double inv_b = 1.0 / static_cast<double>(B);
        for (std::size_t i = 0; i < B; ++i) {
            double a = std::sqrt(sched.alpha_bar_at(batch[i].t));
            double b = std::sqrt(sched.one_minus_alpha_bar_at(batch[i].t));
            LayoutGrid xh(H, W, K);
            for (std::size_t j = 0; j < D; ++j) {
                xh.data[j] = (batch[i].x_t[j] - b * eps_hat[i][j]) / a;
            }
            std::vector<double> q = soft_histogram(xh, temperature);
            l_reg += kl_divergence(batch[i].cond.histogram, q) * inv_b;

            // dKL/dq_k = -p_k / q_k (zero where the floor engages), then
            // back through the soft histogram and the x_hat0 map.
            std::vector<double> d_hist(K, 0.0);
            for (std::size_t k = 0; k < K; ++k) {
                double p = batch[i].cond.histogram[k];
                if (p > 0.0 && q[k] > 1e-12) {
                    d_hist[k] = -(p / q[k]) * lambda * inv_b;
                }
            }
            Tensor d_grid(xh.data.shape());
            soft_histogram_backward(xh, temperature, d_hist, d_grid);
            double d_x0_d_eps = -b / a;
            for (std::size_t j = 0; j < D; ++j) {
                d_eps[i][j] += d_grid[j] * d_x0_d_eps;
            }
        }
    }

    TotalLossResult result;
    result.loss = LossBreakdown::combine(l_simple, l_reg, lambda);
    if (!std::isfinite(result.loss.l_total)) {
        throw NumericError("loss is not finite");
    }
    result.grads = denoiser_backward(params, cache, d_eps);
    return result;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    AdamConfig cfg;
    std::size_t step = 0;
    DenoiserParams m;  // first moments, parameter-shaped
    DenoiserParams v;  // second moments

    static OptimizerState init(const DenoiserParams& params, AdamConfig cfg) {
        OptimizerState s;
        s.cfg = cfg;
        s.m = zero_like(params);
        s.v = zero_like(params);
        return s;
    }
};

/// Standard Adam with bias correction; mutates params and state in place.
inline void adam_step(DenoiserParams& params, const DenoiserParams& grads,
                      OptimizerState& state) {
    state.step += 1;
    const AdamConfig& c = state.cfg;
    double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

    std::vector<std::vector<double>*> p_arrays, m_arrays, v_arrays;
    std::vector<const std::vector<double>*> g_arrays;
    params.for_each_array([&](std::vector<double>& a) { p_arrays.push_back(&a); });
    grads.for_each_array([&](const std::vector<double>& a) { g_arrays.push_back(&a); });
    state.m.for_each_array([&](std::vector<double>& a) { m_arrays.push_back(&a); });
    state.v.for_each_array([&](std::vector<double>& a) { v_arrays.push_back(&a); });

    for (std::size_t a = 0; a < p_arrays.size(); ++a) {
        auto& p = *p_arrays[a];
        const auto& g = *g_arrays[a];
        auto& m = *m_arrays[a];
        auto& v = *v_arrays[a];
        if (p.size() != g.size()) throw ShapeError("adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double lambda = 0.1;
    double temperature = 0.5;
    std::uint64_t seed = 1;
    std::size_t checkpoint_every = 0;  // 0 = only at the end
    std::string checkpoint_path;       // empty = no periodic checkpoints
};

struct TrainResult {
    DenoiserParams params;
    std::vector<LossBreakdown> history;
};

/// Full training loop: init -> { make_batch -> loss_total -> adam_step }.
/// Deterministic per (config, seed); a non-finite loss aborts with a
/// NumericError carrying the failing step.
inline TrainResult train(const TrainConfig& cfg, const DenoiserDims& dims,
                         const std::vector<LayoutGrid>& corpus,
                         const std::vector<Condition>& conditions,
                         const NoiseSchedule& sched) {
    if (corpus.empty()) throw ConfigError("train: empty corpus");
    TrainResult result;
    result.params = denoiser_init(cfg.seed, dims);
    AdamConfig adam;
    adam.lr = cfg.lr;
    OptimizerState opt = OptimizerState::init(result.params, adam);
    Rng rng(Rng::mix_seed(cfg.seed, 0x7261696eULL));
    result.history.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        auto batch = make_batch(corpus, conditions, sched, rng, cfg.batch_size);
        TotalLossResult r;
        try {
            r = loss_total(batch, result.params, sched, cfg.lambda, cfg.temperature);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at training step " +
                               std::to_string(step));
        }
        adam_step(result.params, r.grads.wrt_params, opt);
        result.history.push_back(r.loss);
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
            (step + 1) % cfg.checkpoint_every == 0) {
            save_checkpoint(result.params, sched,
                            {{"step", std::to_string(step + 1)}}, cfg.checkpoint_path);
        }
    }
    return result;
}

}  // namespace ifdiff
