// Command-line front end: gen-data, train, eval, sweep, sample.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ifdiff/ifdiff.hpp"

namespace {

ifdiff::RunConfig load_config(const std::string& config_path, bool seed_set,
                              std::uint64_t seed) {
    ifdiff::RunConfig cfg = config_path.empty() ? ifdiff::RunConfig{}
                                                : ifdiff::RunConfig::load(config_path);
    if (seed_set) cfg.seed = seed;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional diffusion over UI layout grids"};
    app.require_subcommand(1);
    // global options may appear after the subcommand name
    app.fallthrough();

    std::string config_path, checkpoint_path, corpus_path, out_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "Run config file")->expected(1);
    app.add_option("--checkpoint", checkpoint_path, "Checkpoint file");
    app.add_option("--corpus", corpus_path, "JSONL corpus file");
    app.add_option("--out", out_path, "Output path");
    app.add_option("--seed", seed, "Override the config seed")
        ->each([&](const std::string&) { seed_set = true; });

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic JSONL corpus");
    auto* train = app.add_subcommand("train", "Train a denoiser");
    auto* eval = app.add_subcommand("eval", "Reconstruction metrics for a checkpoint");
    auto* sweep = app.add_subcommand("sweep", "Noise-schedule sensitivity sweep");
    auto* sample = app.add_subcommand("sample", "Conditional sampling");

    std::string condition_spec = "1";
    std::size_t n_samples = 4;
    sample->add_option("--condition", condition_spec,
                       "Target occupancy histogram, comma-separated");
    sample->add_option("-n,--num", n_samples, "Number of samples");

    std::string loss_csv;
    train->add_option("--loss-csv", loss_csv, "Loss history CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        ifdiff::RunConfig cfg = load_config(config_path, seed_set, seed);
        if (gen->parsed()) {
            std::string out = out_path.empty() ? "corpus.jsonl" : out_path;
            auto occupancy = ifdiff::cmd_gen_data(cfg, out);
            std::cout << "wrote " << cfg.corpus_size << " layouts to " << out << "\n";
            std::cout << "mean occupancy:";
            for (double v : occupancy) std::cout << " " << v;
            std::cout << "\n";
        } else if (train->parsed()) {
            std::string ckpt = checkpoint_path.empty() ? "model.ckpt" : checkpoint_path;
            std::string csv = loss_csv.empty() ? "loss.csv" : loss_csv;
            auto result = ifdiff::cmd_train(cfg, ckpt, csv);
            std::cout << "trained " << result.history.size() << " steps; checkpoint "
                      << ckpt << ", losses " << csv << "\n";
            if (!result.history.empty()) {
                const auto& last = result.history.back();
                std::cout << "final l_total "
                          << ifdiff::detail::format_double(last.l_total) << "\n";
            }
        } else if (eval->parsed()) {
            if (checkpoint_path.empty()) throw ifdiff::ConfigError("eval needs --checkpoint");
            std::string out = out_path.empty() ? "eval.csv" : out_path;
            auto summary = ifdiff::cmd_eval(cfg, checkpoint_path, corpus_path, out);
            std::cout << "eval: mean psnr "
                      << ifdiff::detail::format_double(summary.mean.psnr) << " dB over "
                      << summary.items.size() << " items -> " << out << "\n";
        } else if (sweep->parsed()) {
            if (checkpoint_path.empty()) throw ifdiff::ConfigError("sweep needs --checkpoint");
            std::string out = out_path.empty() ? "sweep.csv" : out_path;
            auto rows = ifdiff::cmd_sweep(cfg, checkpoint_path, corpus_path, out);
            std::cout << "sweep: " << rows.size() << " factors -> " << out << "\n";
        } else if (sample->parsed()) {
            if (checkpoint_path.empty()) throw ifdiff::ConfigError("sample needs --checkpoint");
            std::string out = out_path.empty() ? "samples" : out_path;
            ifdiff::cmd_sample(cfg, checkpoint_path, condition_spec, n_samples, out);
            std::cout << "wrote " << n_samples << " samples to " << out << "/\n";
        }
    } catch (const ifdiff::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ifdiff::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ifdiff::ShapeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ifdiff::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
