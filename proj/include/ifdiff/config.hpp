#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ifdiff/errors.hpp"

namespace ifdiff {

namespace detail {

/// Shortest round-trip formatting: parse(format(x)) == x bitwise, which is
/// what makes config and CSV emission canonical.
inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

inline double parse_double(const std::string& s, const std::string& key) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw ConfigError("cannot parse number for key '" + key + "': " + s);
    }
    return v;
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& key) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw ConfigError("cannot parse integer for key '" + key + "': " + s);
    }
    return v;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Every experiment knob in one place. Serialized as "key = value" lines in
/// a fixed canonical order, so parse -> emit is byte-identical.
struct RunConfig {
    // data
    std::size_t H = 8, W = 8, K = 3;
    std::size_t corpus_size = 256;
    std::uint64_t corpus_seed = 1;
    std::string corpus_path;  // empty: generate synthetically

    // schedule
    std::string schedule_family = "linear";  // linear | cosine
    std::size_t T = 200;
    double beta_min = 1e-4;
    double beta_max = 0.05;
    double cosine_s = 0.008;
    std::string variance = "posterior";  // posterior | beta

    // model
    std::size_t hidden = 256;
    std::size_t layers = 3;
    std::size_t time_dim = 32;
    std::size_t context_dim = 0;

    // training
    std::size_t steps = 2000;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double lambda = 0.1;
    double temperature = 0.5;
    std::uint64_t seed = 1;
    std::size_t checkpoint_every = 0;

    // eval
    double t_star_fraction = 0.4;
    std::size_t eval_size = 16;
    std::uint64_t eval_seed = 7;

    // sweep
    std::vector<double> sweep_factors = {0.25, 0.5, 1.0, 2.0, 4.0};

    void validate() const {
        if (H < 2 || W < 2 || K < 3) throw ConfigError("need H, W >= 2 and K >= 3");
        if (schedule_family != "linear" && schedule_family != "cosine") {
            throw ConfigError("schedule.family must be linear or cosine");
        }
        if (variance != "posterior" && variance != "beta") {
            throw ConfigError("schedule.variance must be posterior or beta");
        }
        if (T < 2) throw ConfigError("schedule.T must be >= 2");
        if (!(t_star_fraction > 0.0 && t_star_fraction <= 1.0)) {
            throw ConfigError("eval.t_star_fraction must be in (0, 1]");
        }
        if (sweep_factors.empty()) throw ConfigError("sweep.factors must be nonempty");
    }

    std::string emit() const {
        using detail::format_double;
        std::ostringstream out;
        out << "data.H = " << H << "\n";
        out << "data.W = " << W << "\n";
        out << "data.K = " << K << "\n";
        out << "data.corpus_size = " << corpus_size << "\n";
        out << "data.corpus_seed = " << corpus_seed << "\n";
        out << "data.corpus_path = " << corpus_path << "\n";
        out << "schedule.family = " << schedule_family << "\n";
        out << "schedule.T = " << T << "\n";
        out << "schedule.beta_min = " << format_double(beta_min) << "\n";
        out << "schedule.beta_max = " << format_double(beta_max) << "\n";
        out << "schedule.s = " << format_double(cosine_s) << "\n";
        out << "schedule.variance = " << variance << "\n";
        out << "model.hidden = " << hidden << "\n";
        out << "model.layers = " << layers << "\n";
        out << "model.time_dim = " << time_dim << "\n";
        out << "model.context_dim = " << context_dim << "\n";
        out << "training.steps = " << steps << "\n";
        out << "training.batch_size = " << batch_size << "\n";
        out << "training.lr = " << format_double(lr) << "\n";
        out << "training.lambda = " << format_double(lambda) << "\n";
        out << "training.temperature = " << format_double(temperature) << "\n";
        out << "training.seed = " << seed << "\n";
        out << "training.checkpoint_every = " << checkpoint_every << "\n";
        out << "eval.t_star_fraction = " << format_double(t_star_fraction) << "\n";
        out << "eval.eval_size = " << eval_size << "\n";
        out << "eval.seed = " << eval_seed << "\n";
        out << "sweep.factors = ";
        for (std::size_t i = 0; i < sweep_factors.size(); ++i) {
            if (i) out << ",";
            out << format_double(sweep_factors[i]);
        }
        out << "\n";
        return out.str();
    }

    static RunConfig parse(const std::string& text) {
        RunConfig cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            std::size_t eq = t.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
            }
            std::string key = detail::trim(t.substr(0, eq));
            std::string value = detail::trim(t.substr(eq + 1));
            cfg.set(key, value);
        }
        cfg.validate();
        return cfg;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open config: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write config: " + path);
        out << emit();
    }

    void set(const std::string& key, const std::string& value) {
        using detail::parse_double;
        using detail::parse_uint;
        if (key == "data.H") H = parse_uint(value, key);
        else if (key == "data.W") W = parse_uint(value, key);
        else if (key == "data.K") K = parse_uint(value, key);
        else if (key == "data.corpus_size") corpus_size = parse_uint(value, key);
        else if (key == "data.corpus_seed") corpus_seed = parse_uint(value, key);
        else if (key == "data.corpus_path") corpus_path = value;
        else if (key == "schedule.family") schedule_family = value;
        else if (key == "schedule.T") T = parse_uint(value, key);
        else if (key == "schedule.beta_min") beta_min = parse_double(value, key);
        else if (key == "schedule.beta_max") beta_max = parse_double(value, key);
        else if (key == "schedule.s") cosine_s = parse_double(value, key);
        else if (key == "schedule.variance") variance = value;
        else if (key == "model.hidden") hidden = parse_uint(value, key);
        else if (key == "model.layers") layers = parse_uint(value, key);
        else if (key == "model.time_dim") time_dim = parse_uint(value, key);
        else if (key == "model.context_dim") context_dim = parse_uint(value, key);
        else if (key == "training.steps") steps = parse_uint(value, key);
        else if (key == "training.batch_size") batch_size = parse_uint(value, key);
        else if (key == "training.lr") lr = parse_double(value, key);
        else if (key == "training.lambda") lambda = parse_double(value, key);
        else if (key == "training.temperature") temperature = parse_double(value, key);
        else if (key == "training.seed") seed = parse_uint(value, key);
        else if (key == "training.checkpoint_every") checkpoint_every = parse_uint(value, key);
        else if (key == "eval.t_star_fraction") t_star_fraction = parse_double(value, key);
        else if (key == "eval.eval_size") eval_size = parse_uint(value, key);
        else if (key == "eval.seed") eval_seed = parse_uint(value, key);
        else if (key == "sweep.factors") {
            sweep_factors.clear();
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) {
                sweep_factors.push_back(parse_double(detail::trim(item), key));
            }
            if (sweep_factors.empty()) throw ConfigError("sweep.factors is empty");
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }
};

}  // namespace ifdiff
