#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stochflow/drift.hpp"
#include "stochflow/flow.hpp"
#include "stochflow/grid.hpp"
#include "stochflow/noise.hpp"

namespace stochflow {

enum class PdeBc { dirichlet_zero, periodic };

/// Space-time grid for the backward parabolic system. Time levels are
/// t_i = i * horizon / nt, i = 0..nt.
struct PdeGrid {
    GridSpec space;
    double horizon = 1.0;
    int nt = 100;
    PdeBc bc = PdeBc::dirichlet_zero;
    /// Dirichlet runs must cover the drift support with at least this margin
    /// on every side, so the boundary condition only truncates field tails.
    double buffer_min = 0.5;

    double dt() const { return horizon / nt; }
};

/// Solution of the vector-valued backward system
///   d_t U + (1/2) Laplace U + b . grad U - lambda U + f = 0,  U(horizon, .) = 0,
/// sampled on a PdeGrid. Spatial derivatives are node finite differences;
/// evaluation between nodes and levels is multilinear. Outside the grid box
/// the field and its derivatives evaluate to zero, matching the Dirichlet
/// far-field behaviour.
class ZvonkinSolution {
public:
    PdeGrid grid;
    int dim = 1;
    double lambda = 0.0;
    std::string drift_name;
    std::vector<double> u;  // [(level * nodes + node) * dim + comp]

    // Filled by the solver.
    double sup_grad = 0.0;       // max Frobenius norm of grad U over levels and nodes
    double sup_u = 0.0;          // max Euclidean norm of U
    double solver_residual = 0.0;  // worst discrete-system residual over all steps
    double mixed_u = 0.0;        // space-time norms with the exponents below
    double mixed_grad = 0.0;
    double mixed_hess = 0.0;
    double mixed_dt = 0.0;
    double schauder_ratio = 0.0;  // (mixed_u + mixed_grad + mixed_hess + mixed_dt) / mixed norm of f
    double norm_p = 4.0;
    double norm_q = 4.0;

    std::size_t nodes() const { return grid.space.size(); }
    double value_at(int level, std::size_t node, int comp) const {
        return u[(static_cast<std::size_t>(level) * nodes() + node) * dim + comp];
    }

    /// Node finite-difference derivatives (ghost zero at Dirichlet edges,
    /// wrap-around when periodic).
    double node_grad(int level, const std::array<int, kMaxDim>& idx, int comp, int axis) const;
    double node_hess(int level, const std::array<int, kMaxDim>& idx, int comp, int ax1, int ax2) const;

    Vec eval(double t, const Vec& x) const;
    Mat2 eval_grad(double t, const Vec& x) const;  // [comp][axis]
    /// Frobenius norm over all components of the interpolated Hessian.
    double eval_hess_frobenius(double t, const Vec& x) const;
};

/// Semi-implicit backward march: implicit half Laplacian, explicit advection,
/// damping, and forcing from the known level. The vector system decouples by
/// component. forcing defaults to the advection field itself; passing a
/// distinct field keeps the advection frozen, which is what makes the map
/// forcing -> U linear.
/// Preconditions checked before any work: lambda >= 0, lambda dt <= 1,
/// advective CFL dt * sup|b| / h <= 1, and (for Dirichlet runs on truncated
/// drifts) the box covers the support with the buffer margin.
ZvonkinSolution solve_backward_pde(const DriftField& b, double lambda, const PdeGrid& grid,
                                   const DriftField* forcing = nullptr,
                                   double norm_p = 4.0, double norm_q = 4.0);

struct SweepRow {
    double lambda = 0.0;
    double sup_grad = 0.0;
    bool solved = false;
    std::string error;
};

/// Solves along an increasing lambda list, recording sup |grad U| per row.
/// Failures are recorded, not thrown.
std::vector<SweepRow> gradient_bound_sweep(const DriftField& b, const std::vector<double>& lambdas,
                                           const PdeGrid& grid);

/// First swept lambda whose gradient bound is at or below `target`.
std::optional<double> find_lambda_star(const std::vector<SweepRow>& rows, double target = 0.5);

/// gamma_t(x) = x + U(t, x).
Vec gamma_apply(const ZvonkinSolution& sol, double t, const Vec& x);

/// Fixed-point inversion of gamma_t; requires sup |grad U| < 1 (contraction)
/// and refuses otherwise. Converges to 1e-10 within 100 iterations and
/// verifies the round trip to 1e-8 before returning.
Vec gamma_invert(const ZvonkinSolution& sol, double t, const Vec& y);

/// Worst deviation max |Y_k - gamma_{t_k}(X_k)| between the drift-free
/// auxiliary process
///   dY = lambda U(t, gamma_t^{-1}(Y)) dt + (Id + grad U(t, gamma_t^{-1}(Y))) dW
/// and the transformed original process, over starts, paths, and steps.
/// The diffusion coefficient of X must be one. Cells that leave the safety
/// box are excluded.
struct ConjugacyResult {
    double max_residual = 0.0;
    std::size_t excluded = 0;
};
ConjugacyResult conjugacy_residual(const DriftField& b, const ZvonkinSolution& sol,
                                   const std::vector<Vec>& starts, const NoiseEnsemble& noise,
                                   double sigma, int threads = 1);

/// Pathwise quadratic-variation functional
///   A_T = c_pd * sum_k |Hess U(t_k, X_k)|_F^2 dt
/// along stored trajectories, with mean, standard error, and max over the
/// (start, path) cells whose trajectory stays inside the solution box.
struct QuadraticVariationEstimate {
    double mean = 0.0;
    double se = 0.0;
    double max_value = 0.0;
    std::size_t excluded = 0;
};
QuadraticVariationEstimate quadratic_variation_estimate(const ZvonkinSolution& sol,
                                                        const FlowEnsemble& flow, double c_pd = 1.0);

/// JSON header plus CSV blocks for U and grad U under `dir`. Large time axes
/// are thinned by `time_stride` (<= 0 picks a stride capping the output near
/// 200 levels).
void save_zvonkin(const ZvonkinSolution& sol, const std::string& dir, int time_stride = 0);
ZvonkinSolution load_zvonkin(const std::string& dir);

}  // namespace stochflow
