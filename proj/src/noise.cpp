#include "stochflow/noise.hpp"

#include <cmath>

#include "stochflow/threading.hpp"

namespace stochflow {

namespace {

constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline std::array<std::uint32_t, 4> round_once(const std::array<std::uint32_t, 4>& c,
                                               const std::array<std::uint32_t, 2>& k) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mul_hi_lo(kPhiloxM4x32A, c[0], hi0, lo0);
    mul_hi_lo(kPhiloxM4x32B, c[2], hi1, lo1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

// One block -> two uniforms with 53-bit mantissas. u1 lands in (0,1] so the
// Box-Muller logarithm is always finite.
inline void block_uniforms(const std::array<std::uint32_t, 4>& w, double& u1, double& u2) {
    const std::uint64_t a = (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
    const std::uint64_t b = (static_cast<std::uint64_t>(w[2]) << 32) | w[3];
    u1 = 1.0 - static_cast<double>(a >> 11) * 0x1.0p-53;
    u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
}

inline std::array<std::uint32_t, 4> cell_counter(std::uint64_t path, std::uint32_t step,
                                                 std::uint32_t axis, std::uint32_t tag) {
    return {step, axis ^ (tag << 16), static_cast<std::uint32_t>(path),
            static_cast<std::uint32_t>(path >> 32)};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) {
        counter = round_once(counter, key);
        key[0] += kPhiloxW32A;
        key[1] += kPhiloxW32B;
    }
    return counter;
}

double philox_normal(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t axis) {
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                              static_cast<std::uint32_t>(seed >> 32)};
    const auto w = philox4x32(cell_counter(path, step, axis, 0), key);
    double u1, u2;
    block_uniforms(w, u1, u2);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

double philox_uniform(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t axis) {
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                              static_cast<std::uint32_t>(seed >> 32)};
    const auto w = philox4x32(cell_counter(path, step, axis, 1), key);
    double u1, u2;
    block_uniforms(w, u1, u2);
    return u2;
}

NoiseEnsemble sample_noise(std::uint64_t seed, int paths, int dim, double dt, double horizon,
                           int threads) {
    if (paths < 1) throw DomainError("sample_noise: need at least one path");
    if (dim < 1 || dim > kMaxDim) throw DomainError("sample_noise: dim must be 1 or 2");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("sample_noise: dt must be positive");
    if (!(horizon >= dt)) throw DomainError("sample_noise: horizon shorter than one step");

    NoiseEnsemble e;
    e.seed = seed;
    e.paths = paths;
    e.dim = dim;
    e.dt = dt;
    e.steps = static_cast<int>(std::floor(horizon / dt + 1e-9));
    e.horizon = e.steps * dt;
    if (std::abs(e.horizon - horizon) > 1e-12 * std::max(1.0, horizon))
        e.warnings.push_back("horizon rounded down to " + std::to_string(e.horizon) +
                             " (not an integer multiple of dt)");

    const double root_dt = std::sqrt(dt);
    e.dw.resize(static_cast<std::size_t>(paths) * e.steps * dim);
    parallel_for(static_cast<std::size_t>(paths), threads, [&](std::size_t p) {
        const std::size_t base = p * static_cast<std::size_t>(e.steps) * dim;
        for (int k = 0; k < e.steps; ++k)
            for (int a = 0; a < dim; ++a)
                e.dw[base + static_cast<std::size_t>(k) * dim + a] =
                    root_dt * philox_normal(seed, p, static_cast<std::uint32_t>(k),
                                            static_cast<std::uint32_t>(a));
    });
    return e;
}

NoiseEnsemble NoiseEnsemble::coarsened(int m) const {
    if (m < 1) throw DomainError("coarsened: factor must be >= 1");
    if (steps % m != 0) throw DomainError("coarsened: step count not divisible by factor");
    NoiseEnsemble e;
    e.seed = seed;
    e.paths = paths;
    e.dim = dim;
    e.dt = dt * m;
    e.steps = steps / m;
    e.horizon = horizon;
    e.warnings = warnings;
    e.dw.resize(static_cast<std::size_t>(paths) * e.steps * dim);
    for (int p = 0; p < paths; ++p)
        for (int k = 0; k < e.steps; ++k)
            for (int a = 0; a < dim; ++a) {
                double s = 0.0;
                for (int j = 0; j < m; ++j) s += increment(p, k * m + j, a);
                e.dw[(static_cast<std::size_t>(p) * e.steps + k) * dim + a] = s;
            }
    return e;
}

}  // namespace stochflow
