#pragma once

#include <cstdint>
#include <vector>

#include "stochflow/common.hpp"
#include "stochflow/drift.hpp"
#include "stochflow/grid.hpp"
#include "stochflow/transport.hpp"

namespace stochflow {

/// Estimated Holder quotient sup |f(x)-f(y)| / |x-y|^alpha over node pairs.
struct HolderEstimate {
    double constant = 0.0;
    std::size_t pairs = 0;   // pairs actually compared
    bool subsampled = false; // true when the point set exceeded the brute-force cap
};

/// Brute force over all pairs when the region holds at most 2000 valid nodes;
/// deterministic random-pair subsampling (2e6 pairs) above that. Masked nodes
/// are left out of the pair set. 0 < alpha <= 1. Fewer than two usable nodes
/// is an empty region.
HolderEstimate holder_constant_detail(const ScalarFieldGrid& field, double alpha,
                                      const Region& region = Region::all());

double holder_constant(const ScalarFieldGrid& field, double alpha,
                       const Region& region = Region::all());

struct SobolevNorms {
    double field_norm = 0.0;     // midpoint L^r norm of the samples
    double gradient_norm = 0.0;  // midpoint L^r norm of the central-difference gradient
};

/// r >= 1. The gradient is taken at nodes whose full central stencil stays in
/// the region and unmasked; no such node means the region is smaller than one
/// stencil.
SobolevNorms sobolev_w1r_norm(const ScalarFieldGrid& field, double r,
                              const Region& region = Region::all());

/// Interpolation-inequality ratio
///   (int v^alpha)^{1/alpha} / [ ||v||_{L^2}^{1-s} ||grad v||_{L^2}^s ],
/// s = (alpha-2) d / (2 alpha), homogeneous of degree one in v so scaling v
/// leaves it unchanged. v must be nonnegative and not identically zero;
/// alpha > 2 and s in (0,1).
double interpolation_check(const ScalarFieldGrid& v, double alpha_exp, int d);

/// Per-realization separation of two representation series against a Gronwall
/// envelope. D(t) integrates the square of vhat = mean over paths of
/// (u_A - u_B)^2; the envelope is D(0+) exp(C int_0^t (int |b|^p dx)^{2/(p-d)} ds)
/// with C fitted on the first tenth of the horizon.
struct EnergyEnvelopeResult {
    std::vector<double> times;
    std::vector<double> d_values;
    std::vector<double> envelope;
    std::vector<std::uint8_t> verdict;  // D(t) <= envelope(t), per time
    double calibrated_c = 0.0;
    double d0_plus = 0.0;  // D at the first positive output time
    double floor = 0.0;    // numerically-zero threshold for the 4th-power integral
    bool same_initial_data = true;
    bool pass = false;  // all per-time verdicts
};

/// Both series must share grid, output times, and noise realization (seed,
/// path count, horizon); the clocks may differ (dt versus dt/2 refinements of
/// one Brownian family). p > d. A D(0) above the floor flags the run as
/// envelope-tracking only: the initial data differed.
EnergyEnvelopeResult energy_envelope_check(const RepresentationSeries& a,
                                           const RepresentationSeries& b, const DriftField& drift,
                                           double p, int space_cells = 256);

/// Per-time, per-path regularity statistics of a field ensemble.
/// holder[ti][ai][m] and the norm tables are indexed the same way;
/// holder_quantiles[ti][ai][qi] follows quantile_levels.
struct RegularityReport {
    std::vector<double> times;
    std::vector<double> alphas;
    std::vector<double> rs;
    std::vector<double> quantile_levels;
    std::vector<std::vector<std::vector<double>>> holder;
    std::vector<std::vector<std::vector<double>>> holder_quantiles;
    std::vector<std::vector<std::vector<double>>> field_norms;
    std::vector<std::vector<std::vector<double>>> gradient_norms;
    std::size_t holder_pairs = 0;
    bool holder_subsampled = false;
};

/// fields_by_time is [time][path] on one grid. Parallel over (time, path)
/// cells with slot writes; quantiles reduced serially afterwards, so the
/// result is identical for any thread count.
RegularityReport build_regularity_report(
    const std::vector<std::vector<ScalarFieldGrid>>& fields_by_time,
    const std::vector<double>& times, const std::vector<double>& alphas,
    const std::vector<double>& rs, const Region& region,
    const std::vector<double>& quantile_levels, int threads = 1);

}  // namespace stochflow
