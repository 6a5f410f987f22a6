#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ifdiff/errors.hpp"
#include "ifdiff/rng.hpp"
#include "ifdiff/tensor.hpp"

namespace ifdiff {

/// Architecture dimensions of the noise-prediction MLP.
struct DenoiserDims {
    std::size_t input = 0;     // D = K*H*W
    std::size_t hidden = 256;  // h
    std::size_t layers = 3;    // L: first layer + (L-1) hidden blocks + output
    std::size_t time_dim = 32;
    std::size_t cond_dim = 0;  // K + M

    void validate() const {
        if (input == 0 || hidden == 0 || layers < 1 || cond_dim == 0) {
            throw ConfigError("denoiser dims must be positive");
        }
        if (time_dim == 0 || time_dim % 2 != 0) {
            throw ConfigError("time embedding dimension must be even and positive");
        }
    }
};

/// Weights of the network. Matrices are row-major [out, in].
///
///   pre0 = W_in x + b_in + W_c c + W_t timeemb(t)
///   a0   = silu(pre0)
///   for l in 1..L-1:  pre_l = W_l a_{l-1} + b_l ; a_l = silu(pre_l)
///   eps_hat = W_out a_{L-1} + b_out
struct DenoiserParams {
    DenoiserDims dims;
    std::vector<double> w_in, b_in;
    std::vector<double> w_cond;  // [hidden, cond_dim], no bias (b_in covers it)
    std::vector<double> w_time;  // [hidden, time_dim]
    std::vector<std::vector<double>> w_hidden, b_hidden;  // L-1 blocks
    std::vector<double> w_out, b_out;

    /// Visit every parameter array in declaration order. Used by the
    /// optimizer, the checkpoint writer and the gradient check, so all
    /// three agree on the flattened parameter order.
    template <typename F>
    void for_each_array(F&& f) {
        f(w_in);
        f(b_in);
        f(w_cond);
        f(w_time);
        for (std::size_t l = 0; l + 1 < dims.layers; ++l) {
            f(w_hidden[l]);
            f(b_hidden[l]);
        }
        f(w_out);
        f(b_out);
    }
    template <typename F>
    void for_each_array(F&& f) const {
        f(w_in);
        f(b_in);
        f(w_cond);
        f(w_time);
        for (std::size_t l = 0; l + 1 < dims.layers; ++l) {
            f(w_hidden[l]);
            f(b_hidden[l]);
        }
        f(w_out);
        f(b_out);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each_array([&](const std::vector<double>& a) { n += a.size(); });
        return n;
    }
};

/// Parameter-shaped gradient accumulator plus input gradients.
struct DenoiserGradients {
    DenoiserParams wrt_params;                   // same layout, gradient values
    std::vector<std::vector<double>> wrt_input;  // dL/dx per batch item
};

/// Sinusoidal step embedding: pairs (sin(w_j t), cos(w_j t)) with
/// w_j = 10000^(-2j/d_t).
inline std::vector<double> time_embedding(std::size_t t, std::size_t T,
                                          std::size_t d_t) {
    if (d_t == 0 || d_t % 2 != 0) throw ConfigError("time_dim must be even");
    if (t < 1 || t > T) throw ConfigError("t outside 1..T");
    std::vector<double> emb(d_t);
    for (std::size_t j = 0; j < d_t / 2; ++j) {
        double omega = std::pow(1.0 / 10000.0,
                                2.0 * static_cast<double>(j) / static_cast<double>(d_t));
        emb[2 * j] = std::sin(omega * static_cast<double>(t));
        emb[2 * j + 1] = std::cos(omega * static_cast<double>(t));
    }
    return emb;
}

namespace detail {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

// y += M v  with M row-major [rows, cols]
inline void matvec_acc(const std::vector<double>& m, const double* v,
                       std::size_t rows, std::size_t cols, double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = m.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * v[c];
        y[r] += acc;
    }
}

// y += M^T v
inline void matvec_t_acc(const std::vector<double>& m, const double* v,
                         std::size_t rows, std::size_t cols, double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = m.data() + r * cols;
        double vr = v[r];
        for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * vr;
    }
}

// dM += outer(dy, x)
inline void outer_acc(const double* dy, const double* x, std::size_t rows,
                      std::size_t cols, std::vector<double>& dm) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = dm.data() + r * cols;
        double g = dy[r];
        for (std::size_t c = 0; c < cols; ++c) row[c] += g * x[c];
    }
}

}  // namespace detail

/// Everything the backward pass needs from a forward evaluation.
struct ForwardCache {
    std::size_t batch = 0;
    std::vector<std::vector<double>> x;     // flattened inputs
    std::vector<std::vector<double>> cond;  // condition vectors
    std::vector<std::vector<double>> temb;  // time embeddings
    // pre[i][l] and act[i][l] for l = 0..L-1
    std::vector<std::vector<std::vector<double>>> pre, act;
    const DenoiserParams* source = nullptr;
};

/// Batched forward pass. Inputs are flat D-vectors; the caller flattens
/// LayoutGrids. Pure function of (params, inputs).
inline std::vector<std::vector<double>> denoiser_forward(
    const DenoiserParams& params, const std::vector<std::vector<double>>& x_batch,
    const std::vector<std::size_t>& t_batch, std::size_t T,
    const std::vector<std::vector<double>>& cond_batch, ForwardCache* cache = nullptr) {
    const DenoiserDims& d = params.dims;
    const std::size_t B = x_batch.size();
    if (t_batch.size() != B || cond_batch.size() != B) {
        throw ShapeError("denoiser_forward: batch size mismatch");
    }
    if (cache) {
        cache->batch = B;
        cache->x.resize(B);
        cache->cond.resize(B);
        cache->temb.resize(B);
        cache->pre.assign(B, {});
        cache->act.assign(B, {});
        cache->source = &params;
    }
    std::vector<std::vector<double>> out(B);
    for (std::size_t i = 0; i < B; ++i) {
        if (x_batch[i].size() != d.input) {
            throw ShapeError("denoiser_forward: input size != D");
        }
        if (cond_batch[i].size() != d.cond_dim) {
            throw ShapeError("denoiser_forward: condition size != cond_dim");
        }
        std::vector<double> temb = time_embedding(t_batch[i], T, d.time_dim);

        std::vector<std::vector<double>> pre(d.layers), act(d.layers);
        pre[0].assign(d.hidden, 0.0);
        for (std::size_t r = 0; r < d.hidden; ++r) pre[0][r] = params.b_in[r];
        detail::matvec_acc(params.w_in, x_batch[i].data(), d.hidden, d.input,
                           pre[0].data());
        detail::matvec_acc(params.w_cond, cond_batch[i].data(), d.hidden, d.cond_dim,
                           pre[0].data());
        detail::matvec_acc(params.w_time, temb.data(), d.hidden, d.time_dim,
                           pre[0].data());
        act[0].resize(d.hidden);
        for (std::size_t r = 0; r < d.hidden; ++r) act[0][r] = detail::silu(pre[0][r]);

        for (std::size_t l = 1; l < d.layers; ++l) {
            pre[l] = params.b_hidden[l - 1];
            detail::matvec_acc(params.w_hidden[l - 1], act[l - 1].data(), d.hidden,
                               d.hidden, pre[l].data());
            act[l].resize(d.hidden);
            for (std::size_t r = 0; r < d.hidden; ++r) {
                act[l][r] = detail::silu(pre[l][r]);
            }
        }

        out[i] = params.b_out;
        detail::matvec_acc(params.w_out, act[d.layers - 1].data(), d.input, d.hidden,
                           out[i].data());

        if (cache) {
            cache->x[i] = x_batch[i];
            cache->cond[i] = cond_batch[i];
            cache->temb[i] = std::move(temb);
            cache->pre[i] = std::move(pre);
            cache->act[i] = std::move(act);
        }
    }
    return out;
}

inline DenoiserParams zero_like(const DenoiserParams& params) {
    DenoiserParams z = params;
    z.for_each_array([](std::vector<double>& a) {
        std::fill(a.begin(), a.end(), 0.0);
    });
    return z;
}

/// Exact reverse-mode pass. d_eps[i] is dL/d(eps_hat_i); returns gradients
/// for every parameter (summed over the batch) and for every input.
inline DenoiserGradients denoiser_backward(const DenoiserParams& params,
                                           const ForwardCache& cache,
                                           const std::vector<std::vector<double>>& d_eps) {
    if (cache.source != &params) {
        throw ContractError("denoiser_backward: cache does not match params");
    }
    const DenoiserDims& d = params.dims;
    if (d_eps.size() != cache.batch) {
        throw ContractError("denoiser_backward: gradient batch size mismatch");
    }
    DenoiserGradients g;
    g.wrt_params = zero_like(params);
    g.wrt_input.assign(cache.batch, std::vector<double>(d.input, 0.0));

    for (std::size_t i = 0; i < cache.batch; ++i) {
        if (d_eps[i].size() != d.input) {
            throw ContractError("denoiser_backward: d_eps size != D");
        }
        // Output layer.
        std::vector<double> delta(d.hidden, 0.0);
        detail::outer_acc(d_eps[i].data(), cache.act[i][d.layers - 1].data(), d.input,
                          d.hidden, g.wrt_params.w_out);
        for (std::size_t r = 0; r < d.input; ++r) g.wrt_params.b_out[r] += d_eps[i][r];
        detail::matvec_t_acc(params.w_out, d_eps[i].data(), d.input, d.hidden,
                             delta.data());

        // Hidden blocks in reverse.
        for (std::size_t l = d.layers - 1; l >= 1; --l) {
            for (std::size_t r = 0; r < d.hidden; ++r) {
                delta[r] *= detail::silu_grad(cache.pre[i][l][r]);
            }
            detail::outer_acc(delta.data(), cache.act[i][l - 1].data(), d.hidden,
                              d.hidden, g.wrt_params.w_hidden[l - 1]);
            for (std::size_t r = 0; r < d.hidden; ++r) {
                g.wrt_params.b_hidden[l - 1][r] += delta[r];
            }
            std::vector<double> prev(d.hidden, 0.0);
            detail::matvec_t_acc(params.w_hidden[l - 1], delta.data(), d.hidden,
                                 d.hidden, prev.data());
            delta = std::move(prev);
        }

        // First layer.
        for (std::size_t r = 0; r < d.hidden; ++r) {
            delta[r] *= detail::silu_grad(cache.pre[i][0][r]);
        }
        detail::outer_acc(delta.data(), cache.x[i].data(), d.hidden, d.input,
                          g.wrt_params.w_in);
        for (std::size_t r = 0; r < d.hidden; ++r) g.wrt_params.b_in[r] += delta[r];
        detail::outer_acc(delta.data(), cache.cond[i].data(), d.hidden, d.cond_dim,
                          g.wrt_params.w_cond);
        detail::outer_acc(delta.data(), cache.temb[i].data(), d.hidden, d.time_dim,
                          g.wrt_params.w_time);
        detail::matvec_t_acc(params.w_in, delta.data(), d.hidden, d.input,
                             g.wrt_input[i].data());
    }
    return g;
}

/// Xavier-uniform weights, zero biases, deterministic per seed.
inline DenoiserParams denoiser_init(std::uint64_t seed, const DenoiserDims& dims) {
    dims.validate();
    DenoiserParams p;
    p.dims = dims;
    Rng rng(seed);
    auto xavier = [&](std::vector<double>& w, std::size_t fan_out, std::size_t fan_in) {
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        w.resize(fan_out * fan_in);
        for (double& v : w) v = (2.0 * rng.uniform() - 1.0) * bound;
    };
    xavier(p.w_in, dims.hidden, dims.input);
    p.b_in.assign(dims.hidden, 0.0);
    xavier(p.w_cond, dims.hidden, dims.cond_dim);
    xavier(p.w_time, dims.hidden, dims.time_dim);
    p.w_hidden.resize(dims.layers - 1);
    p.b_hidden.resize(dims.layers - 1);
    for (std::size_t l = 0; l + 1 < dims.layers; ++l) {
        xavier(p.w_hidden[l], dims.hidden, dims.hidden);
        p.b_hidden[l].assign(dims.hidden, 0.0);
    }
    xavier(p.w_out, dims.input, dims.hidden);
    p.b_out.assign(dims.input, 0.0);
    return p;
}

}  // namespace ifdiff
