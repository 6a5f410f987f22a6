#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifdiff/checkpoint.hpp"
#include "ifdiff/config.hpp"
#include "ifdiff/diffusion.hpp"
#include "ifdiff/errors.hpp"
#include "ifdiff/layout.hpp"
#include "ifdiff/metrics.hpp"
#include "ifdiff/training.hpp"

namespace ifdiff {

namespace detail {

inline NoiseSchedule schedule_from_config(const RunConfig& cfg) {
    if (cfg.schedule_family == "cosine") return cosine_schedule(cfg.T, cfg.cosine_s);
    return linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
}

inline ReverseVariance variance_from_config(const RunConfig& cfg) {
    return cfg.variance == "beta" ? ReverseVariance::Beta : ReverseVariance::Posterior;
}

inline std::vector<ViewHierarchy> corpus_from_config(const RunConfig& cfg) {
    if (!cfg.corpus_path.empty()) return load_jsonl(cfg.corpus_path);
    return synth_corpus(cfg.corpus_seed, cfg.corpus_size, cfg.H, cfg.W, cfg.K);
}

inline void rasterize_corpus(const RunConfig& cfg,
                             const std::vector<ViewHierarchy>& corpus,
                             std::vector<LayoutGrid>& grids,
                             std::vector<Condition>& conds) {
    grids.clear();
    conds.clear();
    grids.reserve(corpus.size());
    conds.reserve(corpus.size());
    for (const ViewHierarchy& vh : corpus) {
        grids.push_back(rasterize(vh, cfg.H, cfg.W, cfg.K));
        conds.push_back(extract_condition(grids.back(), cfg.context_dim));
    }
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << content;
}

}  // namespace detail

/// Generate the synthetic corpus and write it as JSONL; returns a summary
/// of per-class occupancy means.
inline std::vector<double> cmd_gen_data(const RunConfig& cfg, const std::string& out_path) {
    cfg.validate();
    auto corpus = synth_corpus(cfg.corpus_seed, cfg.corpus_size, cfg.H, cfg.W, cfg.K);
    save_jsonl(corpus, out_path);
    std::vector<double> occupancy(cfg.K, 0.0);
    for (const ViewHierarchy& vh : corpus) {
        Condition c = extract_condition(rasterize(vh, cfg.H, cfg.W, cfg.K));
        for (std::size_t k = 0; k < cfg.K; ++k) occupancy[k] += c.histogram[k];
    }
    for (double& v : occupancy) v /= static_cast<double>(corpus.size());
    return occupancy;
}

/// Full training run: writes a checkpoint and the loss-history CSV
/// (header: step,l_simple,l_reg,l_total).
inline TrainResult cmd_train(const RunConfig& cfg, const std::string& checkpoint_path,
                             const std::string& loss_csv_path) {
    cfg.validate();
    auto vhs = detail::corpus_from_config(cfg);
    std::vector<LayoutGrid> grids;
    std::vector<Condition> conds;
    detail::rasterize_corpus(cfg, vhs, grids, conds);

    NoiseSchedule sched = detail::schedule_from_config(cfg);
    DenoiserDims dims;
    dims.input = cfg.K * cfg.H * cfg.W;
    dims.hidden = cfg.hidden;
    dims.layers = cfg.layers;
    dims.time_dim = cfg.time_dim;
    dims.cond_dim = cfg.K + cfg.context_dim;

    TrainConfig tc;
    tc.steps = cfg.steps;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.lambda = cfg.lambda;
    tc.temperature = cfg.temperature;
    tc.seed = cfg.seed;
    tc.checkpoint_every = cfg.checkpoint_every;
    tc.checkpoint_path = checkpoint_path;

    TrainResult result = train(tc, dims, grids, conds, sched);

    CheckpointMeta meta;
    meta["H"] = std::to_string(cfg.H);
    meta["W"] = std::to_string(cfg.W);
    meta["K"] = std::to_string(cfg.K);
    meta["steps"] = std::to_string(cfg.steps);
    save_checkpoint(result.params, sched, meta, checkpoint_path);

    std::ostringstream csv;
    csv << "step,l_simple,l_reg,l_total\n";
    for (std::size_t i = 0; i < result.history.size(); ++i) {
        const LossBreakdown& b = result.history[i];
        csv << i << "," << detail::format_double(b.l_simple) << ","
            << detail::format_double(b.l_reg) << ","
            << detail::format_double(b.l_total) << "\n";
    }
    detail::write_file(loss_csv_path, csv.str());
    return result;
}

struct EvalSummary {
    std::vector<metrics::MetricsRow> items;
    metrics::MetricsRow mean;
    double psnr_std = 0.0;
};

/// Reconstruction evaluation on a schedule (the checkpoint's by default,
/// or a scaled one during sweeps). Deterministic: item i uses the seed
/// mix(eval_seed, i). The eps model hook exists so tests can substitute a
/// perfect-oracle predictor.
inline EvalSummary eval_reconstruction(const RunConfig& cfg, const DenoiserParams& params,
                                       const NoiseSchedule& sched,
                                       const std::vector<LayoutGrid>& grids,
                                       const EpsModel* model_override = nullptr,
                                       bool deterministic = false) {
    if (grids.empty()) throw DataError("eval: empty corpus");
    EpsModel model = model_override ? *model_override : make_eps_model(params, sched.T);
    std::size_t t_star = static_cast<std::size_t>(
        std::llround(cfg.t_star_fraction * static_cast<double>(sched.T)));
    t_star = std::clamp<std::size_t>(t_star, 1, sched.T);
    std::size_t n = std::min(cfg.eval_size, grids.size());
    ReverseVariance var = detail::variance_from_config(cfg);

    EvalSummary summary;
    for (std::size_t i = 0; i < n; ++i) {
        const LayoutGrid& x0 = grids[i];
        Condition c = extract_condition(x0, cfg.context_dim);
        Rng rng(Rng::mix_seed(cfg.eval_seed, i));
        LayoutGrid rec = reconstruct(model, x0, c, sched, t_star, rng, var, deterministic);
        summary.items.push_back(metrics::all(x0.data, rec.data));
    }
    double inv_n = 1.0 / static_cast<double>(summary.items.size());
    for (const auto& r : summary.items) {
        summary.mean.mse += r.mse * inv_n;
        summary.mean.mae += r.mae * inv_n;
        summary.mean.psnr += r.psnr * inv_n;
        summary.mean.ssim += r.ssim * inv_n;
    }
    double var_acc = 0.0;
    for (const auto& r : summary.items) {
        double d = r.psnr - summary.mean.psnr;
        var_acc += d * d * inv_n;
    }
    summary.psnr_std = std::sqrt(var_acc);
    return summary;
}

inline std::string eval_csv(const EvalSummary& summary) {
    using detail::format_double;
    std::ostringstream csv;
    csv << "item,mse,mae,psnr,ssim\n";
    for (std::size_t i = 0; i < summary.items.size(); ++i) {
        const auto& r = summary.items[i];
        csv << i << "," << format_double(r.mse) << "," << format_double(r.mae) << ","
            << format_double(r.psnr) << "," << format_double(r.ssim) << "\n";
    }
    csv << "MEAN," << format_double(summary.mean.mse) << ","
        << format_double(summary.mean.mae) << "," << format_double(summary.mean.psnr)
        << "," << format_double(summary.mean.ssim) << "\n";
    return csv.str();
}

/// Metric evaluation of a checkpoint against a corpus; writes the per-item
/// CSV plus a MEAN row.
inline EvalSummary cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                            const std::string& corpus_path, const std::string& out_csv) {
    cfg.validate();
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    RunConfig local = cfg;
    if (!corpus_path.empty()) local.corpus_path = corpus_path;
    auto vhs = detail::corpus_from_config(local);
    std::vector<LayoutGrid> grids;
    std::vector<Condition> conds;
    detail::rasterize_corpus(local, vhs, grids, conds);
    if (ckpt.params.dims.input != local.K * local.H * local.W) {
        throw DataError("checkpoint dims incompatible with corpus/config grid size");
    }
    EvalSummary summary = eval_reconstruction(local, ckpt.params, ckpt.sched, grids);
    detail::write_file(out_csv, eval_csv(summary));
    return summary;
}

struct SweepRow {
    double factor = 0.0;
    double psnr_mean = 0.0;
    double psnr_std = 0.0;
    double mse_mean = 0.0;
    double ssim_mean = 0.0;
};

/// Noise-schedule sensitivity sweep: rescale beta by each factor, rerun the
/// reconstruction protocol (noising and denoising both use the scaled
/// schedule), one CSV row per factor.
inline std::vector<SweepRow> cmd_sweep(const RunConfig& cfg,
                                       const std::string& checkpoint_path,
                                       const std::string& corpus_path,
                                       const std::string& out_csv) {
    cfg.validate();
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    RunConfig local = cfg;
    if (!corpus_path.empty()) local.corpus_path = corpus_path;
    auto vhs = detail::corpus_from_config(local);
    std::vector<LayoutGrid> grids;
    std::vector<Condition> conds;
    detail::rasterize_corpus(local, vhs, grids, conds);
    if (ckpt.params.dims.input != local.K * local.H * local.W) {
        throw DataError("checkpoint dims incompatible with corpus/config grid size");
    }

    // Validate every factor before running anything.
    std::vector<NoiseSchedule> scheds;
    for (double f : cfg.sweep_factors) scheds.push_back(scale_schedule(ckpt.sched, f));

    std::vector<SweepRow> rows;
    std::ostringstream csv;
    csv << "factor,psnr_mean,psnr_std,mse_mean,ssim_mean\n";
    for (std::size_t i = 0; i < scheds.size(); ++i) {
        EvalSummary s = eval_reconstruction(local, ckpt.params, scheds[i], grids);
        SweepRow row{cfg.sweep_factors[i], s.mean.psnr, s.psnr_std, s.mean.mse,
                     s.mean.ssim};
        rows.push_back(row);
        csv << detail::format_double(row.factor) << ","
            << detail::format_double(row.psnr_mean) << ","
            << detail::format_double(row.psnr_std) << ","
            << detail::format_double(row.mse_mean) << ","
            << detail::format_double(row.ssim_mean) << "\n";
    }
    detail::write_file(out_csv, csv.str());
    return rows;
}

/// Parse a "p0,p1,..." histogram spec and normalize it.
inline Condition parse_condition_spec(const std::string& spec, std::size_t K,
                                      std::size_t context_dim) {
    std::vector<double> vals;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        vals.push_back(detail::parse_double(detail::trim(item), "condition"));
    }
    if (vals.size() != K) {
        throw DataError("condition spec needs exactly " + std::to_string(K) + " values");
    }
    double total = 0.0;
    for (double v : vals) {
        if (v < 0.0) throw DataError("condition entries must be >= 0");
        total += v;
    }
    if (total <= 0.0) throw DataError("condition spec is not normalizable");
    Condition c;
    c.histogram = vals;
    for (double& v : c.histogram) v /= total;
    c.context.assign(context_dim, 0.0);
    return c;
}

/// Flat-color PPM render of a decoded grid, one tile per cell.
inline void write_ppm(const std::vector<int>& cells, std::size_t H, std::size_t W,
                      std::size_t K, const std::string& path, int tile = 16) {
    static const unsigned char palette[8][3] = {
        {240, 240, 240}, {70, 130, 180}, {220, 120, 60},  {90, 170, 90},
        {170, 90, 170},  {200, 200, 80}, {100, 200, 200}, {150, 150, 150}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "P6\n" << W * tile << " " << H * tile << "\n255\n";
    for (std::size_t r = 0; r < H * tile; ++r) {
        for (std::size_t c = 0; c < W * tile; ++c) {
            int cls = cells[(r / tile) * W + (c / tile)];
            const unsigned char* rgb = palette[cls % 8];
            out.write(reinterpret_cast<const char*>(rgb), 3);
        }
    }
    (void)K;
}

/// Conditional sampling: n grids for one condition spec, decoded to cell
/// maps (JSONL) plus PPM renders in out_dir.
inline std::vector<LayoutGrid> cmd_sample(const RunConfig& cfg,
                                          const std::string& checkpoint_path,
                                          const std::string& condition_spec,
                                          std::size_t n, const std::string& out_dir) {
    cfg.validate();
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    std::size_t K = cfg.K, H = cfg.H, W = cfg.W;
    if (ckpt.params.dims.input != K * H * W) {
        throw DataError("checkpoint dims incompatible with config grid size");
    }
    Condition c = parse_condition_spec(condition_spec, K, cfg.context_dim);
    EpsModel model = make_eps_model(ckpt.params, ckpt.sched.T);
    Rng rng(cfg.seed);
    auto samples = sample(model, c, ckpt.sched, rng, n, H, W, K,
                          detail::variance_from_config(cfg));

    std::filesystem::create_directories(out_dir);
    std::ofstream jsonl(out_dir + "/samples.jsonl", std::ios::binary | std::ios::trunc);
    if (!jsonl) throw DataError("cannot write samples.jsonl in " + out_dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::vector<int> cells = samples[i].decode();
        nlohmann::json j;
        j["H"] = H;
        j["W"] = W;
        j["cells"] = cells;
        jsonl << j.dump() << "\n";
        write_ppm(cells, H, W, K, out_dir + "/sample_" + std::to_string(i) + ".ppm");
    }
    return samples;
}

}  // namespace ifdiff
