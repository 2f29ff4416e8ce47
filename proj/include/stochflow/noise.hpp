#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stochflow/common.hpp"

namespace stochflow {

/// Philox 4x32 counter-based block cipher, 10 rounds.
/// A pure function of (counter, key): any evaluation order and any thread
/// schedule yields the same stream, which is what makes the noise reproducible.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Standard normal draw addressed by (seed, path, step, axis) via Box-Muller
/// on one Philox block.
double philox_normal(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t axis);

/// Uniform draw in [0,1) addressed the same way, on a separate stream tag.
double philox_uniform(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t axis);

/// Brownian increments dW[path][step][axis] ~ N(0, dt) for a family of paths.
/// Each (seed, path, step, axis) cell is an independent substream draw, so
/// regenerating any single cell reproduces it bit for bit.
struct NoiseEnsemble {
    std::uint64_t seed = 0;
    int paths = 0;
    int dim = 0;
    double dt = 0.0;
    double horizon = 0.0;  // steps * dt after rounding
    int steps = 0;
    std::vector<double> dw;  // [(path * steps + step) * dim + axis]
    std::vector<std::string> warnings;

    double increment(int path, int step, int axis) const {
        return dw[(static_cast<std::size_t>(path) * steps + step) * dim + axis];
    }

    /// Sum of consecutive increment blocks: same Brownian paths on a step m
    /// times coarser clock. steps must be divisible by m.
    NoiseEnsemble coarsened(int m) const;
};

/// paths >= 1, dim in {1,2}, dt > 0, horizon >= dt. A horizon that is not an
/// integer multiple of dt is rounded down to one and noted in warnings.
NoiseEnsemble sample_noise(std::uint64_t seed, int paths, int dim, double dt, double horizon,
                           int threads = 1);

}  // namespace stochflow
