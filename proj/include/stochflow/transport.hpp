#pragma once

#include <string>
#include <vector>

#include "stochflow/drift.hpp"
#include "stochflow/flow.hpp"
#include "stochflow/grid.hpp"
#include "stochflow/noise.hpp"

namespace stochflow {

enum class InitialConditionKind { gaussian_bump, asymmetric_smooth, compact_bump, step };

/// Closed-form initial data u0 with its gradient. All kinds except `step` are
/// smooth; `step` is the discontinuous reference datum and its almost-sure
/// gradient is reported as zero.
struct InitialConditionSpec {
    InitialConditionKind kind = InitialConditionKind::gaussian_bump;
    int dim = 1;
    Vec center{};
    double width = 1.0;
    double amplitude = 1.0;

    void validate() const;
    /// Smoothness tag: every kind except `step` has finite W^{1,r} norms on a
    /// bounded box for all r >= 1.
    bool sobolev_regular() const { return kind != InitialConditionKind::step; }
    const char* kind_name() const;

    double value(const Vec& x) const;
    Vec gradient(const Vec& x) const;
};

/// Compactly supported test function chi(x) = (1 - |z|^2)^3, z = (x - c)/w,
/// vanishing for |z| >= 1, with closed-form gradient and Laplacian.
struct TestFunction {
    int dim = 1;
    Vec center{};
    double width = 1.0;

    double value(const Vec& x) const;
    Vec gradient(const Vec& x) const;
    double laplacian(const Vec& x) const;
    /// True when the closed support ball keeps at least `margin` distance from
    /// the box boundary on every axis.
    bool supported_inside(const GridSpec& g, double margin) const;
};

/// One scalar field per path: u(t, x_j) = u0(phi_j) with phi_j the terminal
/// state of backward cell (j, m). Demands t = steps * dt of the run: only the
/// fully rewound state is the pullback to time zero. Escaped cells are masked.
std::vector<ScalarFieldGrid> representation_solution(const InitialConditionSpec& u0,
                                                     const GridSpec& grid,
                                                     const FlowEnsemble& backward_flow, double t);

/// Time ladder of representation fields on a common grid, one backward run per
/// requested output step, all driven by the same noise ensemble. The noise
/// provenance fields let consumers verify two series share a realization.
struct RepresentationSeries {
    GridSpec grid;
    double dt = 0.0;
    std::uint64_t noise_seed = 0;
    int noise_paths = 0;
    double noise_horizon = 0.0;
    std::vector<int> output_steps;
    std::vector<std::vector<ScalarFieldGrid>> fields;  // [time][path]

    std::vector<double> times() const {
        std::vector<double> out(output_steps.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = output_steps[i] * dt;
        return out;
    }
};

/// output_steps must be ascending, within the noise horizon. sigma >= 0;
/// paths and increments come from `noise`.
RepresentationSeries representation_series(const InitialConditionSpec& u0, const DriftField& b,
                                           double sigma, const GridSpec& grid,
                                           const NoiseEnsemble& noise,
                                           const std::vector<int>& output_steps, int threads = 1);

/// Weak-formulation defect of one path's field ladder at step t_step:
///   R = int u(t) chi + int_0^t int (b . grad u) chi - int u0 chi
///       - sigma sum_a int_0^t (int u d_a chi) dW^a - (sigma^2/2) int_0^t int u Lap chi,
/// with central-difference grad u, midpoint space quadrature, left-endpoint
/// time sums, and the stochastic term as the left-endpoint Ito sum against the
/// path's increments. Returns |R|.
/// The support of chi must stay one cell clear of the box boundary and may not
/// touch masked cells.
double weak_form_residual(const std::vector<ScalarFieldGrid>& u_steps, const DriftField& b,
                          double sigma, const InitialConditionSpec& u0, const TestFunction& chi,
                          const NoiseEnsemble& noise, int path, int t_step);

}  // namespace stochflow
