#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "ifdiff/errors.hpp"
#include "ifdiff/tensor.hpp"

namespace ifdiff {

/// Deterministic seeded random stream. The uniform source is mt19937_64,
/// whose output sequence is fixed by the standard, so streams are identical
/// across platforms. Normals come from Box-Muller on those uniforms: no
/// rejection loop, so the number of uniforms consumed per draw is fixed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), base_seed_(seed) {}

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// One standard-normal draw. Box-Muller produces a pair; the second
    /// value is cached for the next call.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] keeps the log finite.
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Multiply-shift mapping; bias is < 2^-64 per draw, irrelevant at
        // desk scale, and it keeps consumption at exactly one word.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

    /// SplitMix-style seed derivation. Callers split streams instead of
    /// sharing one Rng across tasks; the result depends only on the
    /// original seed and the index, never on engine state.
    static std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t child_seed(std::uint64_t index) const {
        return mix_seed(base_seed_, index);
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t base_seed_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Tensor of i.i.d. standard normals. Advances rng by exactly size(shape)
/// draws (rounded up to pairs inside Box-Muller).
inline Tensor normal(Rng& rng, const std::vector<std::size_t>& shape) {
    Tensor out(shape);  // Tensor ctor rejects zero/empty dims
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.normal();
    return out;
}

}  // namespace ifdiff
