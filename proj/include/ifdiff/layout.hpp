#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifdiff/errors.hpp"
#include "ifdiff/rng.hpp"
#include "ifdiff/tensor.hpp"

namespace ifdiff {

struct Element {
    int class_id = 0;
    // Pixel-space bbox, (x, y) top-left.
    double x = 0, y = 0, w = 0, h = 0;
};

/// Structured record of a screen: element classes, bounding boxes and
/// z-order (later entries draw on top).
struct ViewHierarchy {
    int screen_w = 0;
    int screen_h = 0;
    std::vector<Element> elements;

    void validate(int K) const {
        if (screen_w <= 0 || screen_h <= 0) {
            throw DataError("screen dimensions must be positive");
        }
        for (const Element& e : elements) {
            if (e.class_id < 0 || e.class_id >= K) {
                throw DataError("class_id " + std::to_string(e.class_id) +
                                " outside [0, " + std::to_string(K) + ")");
            }
            if (e.w <= 0 || e.h <= 0) {
                throw DataError("element width/height must be positive");
            }
            if (e.x < 0 || e.y < 0 || e.x + e.w > screen_w || e.y + e.h > screen_h) {
                throw DataError("element bbox leaves the screen");
            }
        }
    }
};

/// Class-channel grid in [-1, 1], the continuous interface state the
/// diffusion chain operates on. data has shape [K, H, W]; channel 0 is
/// background.
struct LayoutGrid {
    std::size_t H = 0, W = 0, K = 0;
    Tensor data;

    LayoutGrid() = default;
    LayoutGrid(std::size_t H_, std::size_t W_, std::size_t K_)
        : H(H_), W(W_), K(K_), data({K_, H_, W_}) {}

    double& at(std::size_t k, std::size_t r, std::size_t c) {
        return data[(k * H + r) * W + c];
    }
    double at(std::size_t k, std::size_t r, std::size_t c) const {
        return data[(k * H + r) * W + c];
    }

    /// Per-cell argmax decode back to discrete class ids, row-major.
    std::vector<int> decode() const {
        std::vector<int> cells(H * W, 0);
        for (std::size_t r = 0; r < H; ++r) {
            for (std::size_t c = 0; c < W; ++c) {
                int best = 0;
                double best_v = at(0, r, c);
                for (std::size_t k = 1; k < K; ++k) {
                    if (at(k, r, c) > best_v) {
                        best_v = at(k, r, c);
                        best = static_cast<int>(k);
                    }
                }
                cells[r * W + c] = best;
            }
        }
        return cells;
    }
};

/// Condition vector c: target class-occupancy histogram plus optional 0/1
/// context flags.
struct Condition {
    std::vector<double> histogram;
    std::vector<double> context;

    void validate() const {
        double total = 0.0;
        for (double p : histogram) {
            if (p < 0.0) throw DataError("histogram entries must be >= 0");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw DataError("histogram must sum to 1");
        }
    }

    std::vector<double> as_vector() const {
        std::vector<double> v = histogram;
        v.insert(v.end(), context.begin(), context.end());
        return v;
    }
};

/// Rasterize a hierarchy onto an H x W grid. Each cell takes the class of
/// the topmost element covering the cell center; uncovered cells are
/// background. Output is exactly one-hot in {-1, +1}.
inline LayoutGrid rasterize(const ViewHierarchy& vh, std::size_t H, std::size_t W,
                            std::size_t K) {
    if (H < 2 || W < 2) throw DataError("grid needs H, W >= 2");
    vh.validate(static_cast<int>(K));
    LayoutGrid grid(H, W, K);
    std::fill(grid.data.values().begin(), grid.data.values().end(), -1.0);
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) {
            double cx = (static_cast<double>(c) + 0.5) / static_cast<double>(W) *
                        vh.screen_w;
            double cy = (static_cast<double>(r) + 0.5) / static_cast<double>(H) *
                        vh.screen_h;
            int cls = 0;
            for (const Element& e : vh.elements) {  // later elements override
                if (cx >= e.x && cx < e.x + e.w && cy >= e.y && cy < e.y + e.h) {
                    cls = e.class_id;
                }
            }
            grid.at(static_cast<std::size_t>(cls), r, c) = 1.0;
        }
    }
    return grid;
}

/// Exact occupancy histogram of a one-hot grid. Rejects fractional grids;
/// use soft_histogram for generated ones.
inline Condition extract_condition(const LayoutGrid& grid, std::size_t context_dim = 0) {
    std::vector<std::size_t> counts(grid.K, 0);
    for (std::size_t r = 0; r < grid.H; ++r) {
        for (std::size_t c = 0; c < grid.W; ++c) {
            std::size_t ones = 0, hot = 0;
            for (std::size_t k = 0; k < grid.K; ++k) {
                double v = grid.at(k, r, c);
                if (v == 1.0) {
                    ++ones;
                    hot = k;
                } else if (v != -1.0) {
                    throw DataError("grid is not one-hot valued");
                }
            }
            if (ones != 1) throw DataError("cell has no unique +1 channel");
            ++counts[hot];
        }
    }
    Condition cond;
    cond.histogram.resize(grid.K);
    double cells = static_cast<double>(grid.H * grid.W);
    for (std::size_t k = 0; k < grid.K; ++k) {
        cond.histogram[k] = static_cast<double>(counts[k]) / cells;
    }
    cond.context.assign(context_dim, 0.0);
    return cond;
}

/// Differentiable occupancy estimate: per-cell softmax over channel values
/// at the given temperature, averaged over cells. Output lies on the
/// simplex.
inline std::vector<double> soft_histogram(const LayoutGrid& grid, double temperature) {
    if (!(temperature > 0.0)) throw DataError("temperature must be positive");
    std::vector<double> hist(grid.K, 0.0);
    std::vector<double> sm(grid.K);
    for (std::size_t r = 0; r < grid.H; ++r) {
        for (std::size_t c = 0; c < grid.W; ++c) {
            double max_v = grid.at(0, r, c);
            for (std::size_t k = 1; k < grid.K; ++k) {
                max_v = std::max(max_v, grid.at(k, r, c));
            }
            double denom = 0.0;
            for (std::size_t k = 0; k < grid.K; ++k) {
                sm[k] = std::exp((grid.at(k, r, c) - max_v) / temperature);
                denom += sm[k];
            }
            for (std::size_t k = 0; k < grid.K; ++k) hist[k] += sm[k] / denom;
        }
    }
    double cells = static_cast<double>(grid.H * grid.W);
    for (double& v : hist) v /= cells;
    return hist;
}

/// Backward pass of soft_histogram: given dL/d(histogram), accumulate
/// dL/d(grid values) into d_grid (same shape as grid.data, preallocated).
inline void soft_histogram_backward(const LayoutGrid& grid, double temperature,
                                    const std::vector<double>& d_hist,
                                    Tensor& d_grid) {
    if (!grid.data.same_shape(d_grid)) {
        throw ShapeError("soft_histogram_backward: gradient shape mismatch");
    }
    double cells = static_cast<double>(grid.H * grid.W);
    std::vector<double> sm(grid.K);
    for (std::size_t r = 0; r < grid.H; ++r) {
        for (std::size_t c = 0; c < grid.W; ++c) {
            double max_v = grid.at(0, r, c);
            for (std::size_t k = 1; k < grid.K; ++k) {
                max_v = std::max(max_v, grid.at(k, r, c));
            }
            double denom = 0.0;
            for (std::size_t k = 0; k < grid.K; ++k) {
                sm[k] = std::exp((grid.at(k, r, c) - max_v) / temperature);
                denom += sm[k];
            }
            double dot = 0.0;
            for (std::size_t k = 0; k < grid.K; ++k) {
                sm[k] /= denom;
                dot += d_hist[k] * sm[k];
            }
            for (std::size_t j = 0; j < grid.K; ++j) {
                d_grid[(j * grid.H + r) * grid.W + c] +=
                    sm[j] * (d_hist[j] - dot) / (cells * temperature);
            }
        }
    }
}

/// Deterministic synthetic corpus: every layout has a class-1 top bar plus
/// 1-4 non-overlapping widget rectangles of classes 2..K-1 placed on a
/// coarse slot grid, remainder background.
inline std::vector<ViewHierarchy> synth_corpus(std::uint64_t seed, std::size_t n,
                                               std::size_t H, std::size_t W,
                                               std::size_t K) {
    if (n < 1) throw ConfigError("corpus size must be >= 1");
    if (K < 3) throw ConfigError("need K >= 3 (background + bar + widgets)");
    const int cell = 16;  // pixels per grid cell
    const int screen_w = static_cast<int>(W) * cell;
    const int screen_h = static_cast<int>(H) * cell;
    const std::size_t bar_rows = (H + 7) / 8;

    std::vector<ViewHierarchy> corpus;
    corpus.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(Rng::mix_seed(seed, i));
        ViewHierarchy vh;
        vh.screen_w = screen_w;
        vh.screen_h = screen_h;
        vh.elements.push_back(
            {1, 0.0, 0.0, static_cast<double>(screen_w),
             static_cast<double>(bar_rows * cell)});

        // Slot the free area into a 2x2 arrangement of regions and fill a
        // random subset, so placement never needs rejection sampling.
        const std::size_t free_rows = H - bar_rows;
        const std::size_t half_r = free_rows / 2;
        const std::size_t half_c = W / 2;
        struct Slot {
            std::size_t r0, c0, rows, cols;
        };
        const Slot slots[4] = {
            {bar_rows, 0, half_r, half_c},
            {bar_rows, half_c, half_r, W - half_c},
            {bar_rows + half_r, 0, free_rows - half_r, half_c},
            {bar_rows + half_r, half_c, free_rows - half_r, W - half_c},
        };
        std::size_t n_widgets = 1 + rng.below(4);
        for (std::size_t s = 0; s < n_widgets; ++s) {
            const Slot& slot = slots[s];
            if (slot.rows == 0 || slot.cols == 0) continue;
            std::size_t wr = 1 + rng.below(slot.rows);
            std::size_t wc = 1 + rng.below(slot.cols);
            std::size_t orr = rng.below(slot.rows - wr + 1);
            std::size_t occ = rng.below(slot.cols - wc + 1);
            int cls = 2 + static_cast<int>(rng.below(K - 2));
            vh.elements.push_back({cls,
                                   static_cast<double>((slot.c0 + occ) * cell),
                                   static_cast<double>((slot.r0 + orr) * cell),
                                   static_cast<double>(wc * cell),
                                   static_cast<double>(wr * cell)});
        }
        corpus.push_back(std::move(vh));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// JSONL persistence. One object per line:
// {"screen_w": int, "screen_h": int,
//  "elements": [{"class_id": int, "bbox": [x, y, w, h]}]}

inline void save_jsonl(const std::vector<ViewHierarchy>& corpus,
                       const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const ViewHierarchy& vh : corpus) {
        nlohmann::json j;
        j["screen_w"] = vh.screen_w;
        j["screen_h"] = vh.screen_h;
        j["elements"] = nlohmann::json::array();
        for (const Element& e : vh.elements) {
            j["elements"].push_back(
                {{"class_id", e.class_id}, {"bbox", {e.x, e.y, e.w, e.h}}});
        }
        out << j.dump() << "\n";
    }
}

inline std::vector<ViewHierarchy> load_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for reading: " + path);
    std::vector<ViewHierarchy> corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fail = [&](const std::string& why) {
            throw DataError("line " + std::to_string(line_no) + ": " + why);
        };
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) fail("malformed JSON");
        if (!j.contains("screen_w") || !j.contains("screen_h") ||
            !j.contains("elements")) {
            fail("missing required field");
        }
        ViewHierarchy vh;
        vh.screen_w = j["screen_w"].get<int>();
        vh.screen_h = j["screen_h"].get<int>();
        if (vh.screen_w <= 0 || vh.screen_h <= 0) fail("non-positive screen size");
        for (const auto& je : j["elements"]) {
            if (!je.contains("class_id") || !je.contains("bbox") ||
                !je["bbox"].is_array() || je["bbox"].size() != 4) {
                fail("malformed element");
            }
            Element e;
            e.class_id = je["class_id"].get<int>();
            e.x = je["bbox"][0].get<double>();
            e.y = je["bbox"][1].get<double>();
            e.w = je["bbox"][2].get<double>();
            e.h = je["bbox"][3].get<double>();
            if (e.class_id < 0) fail("negative class_id");
            if (e.w <= 0 || e.h <= 0) fail("non-positive bbox extent");
            if (e.x < 0 || e.y < 0 || e.x + e.w > vh.screen_w ||
                e.y + e.h > vh.screen_h) {
                fail("bbox leaves the screen");
            }
            vh.elements.push_back(e);
        }
        corpus.push_back(std::move(vh));
    }
    return corpus;
}

}  // namespace ifdiff
