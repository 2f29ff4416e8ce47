#pragma once

#include <string>
#include <vector>

#include "stochflow/drift.hpp"
#include "stochflow/noise.hpp"

namespace stochflow {

enum class FlowDirection { forward, backward };

/// Integration controls shared by the flow drivers.
/// A backward run with `steps = K` inverts the forward map over [0, K dt]:
/// it applies the forward scheme with drift -b, consuming the same increments
/// in reversed order and evaluating time-dependent drifts at the reflected
/// times, so state j of the run approximates the forward state at step K - j.
struct FlowParams {
    double sigma = 1.0;
    FlowDirection direction = FlowDirection::forward;
    int steps = -1;               // -1: all steps of the noise ensemble
    double escape_halfwidth = 0;  // 0: escape_factor * drift domain halfwidth
    double escape_factor = 3.0;
    int threads = 1;
};

/// Trajectories for every (initial point, path) cell.
/// x is laid out [(g * paths + m) * (steps + 1) + k][axis]; step 0 holds the
/// initial point. A cell whose trajectory leaves the safety box is frozen at
/// its last inside value from the escape step on and flagged.
struct FlowEnsemble {
    std::vector<Vec> grid;
    int dim = 1;
    FlowDirection direction = FlowDirection::forward;
    double sigma = 1.0;
    double dt = 0.0;
    int steps = 0;
    int paths = 0;
    std::uint64_t noise_seed = 0;
    std::string drift_name;
    std::vector<double> x;  // [((g * paths + m) * (steps + 1) + k) * dim + axis]
    std::vector<std::uint8_t> escaped;  // [g * paths + m]
    std::vector<int> escape_step;       // -1 when not escaped

    Vec at(std::size_t g, int m, int k) const {
        const std::size_t cell = (g * paths + m) * static_cast<std::size_t>(steps + 1) + k;
        Vec v{};
        for (int a = 0; a < dim; ++a) v[a] = x[cell * dim + a];
        return v;
    }
    bool cell_escaped(std::size_t g, int m) const { return escaped[g * paths + m] != 0; }
    std::size_t escape_count() const;
};

/// Endpoint-only variant for large runs; same semantics as FlowEnsemble.
struct EndpointEnsemble {
    std::vector<Vec> grid;
    int dim = 1;
    int steps = 0;
    int paths = 0;
    std::vector<Vec> x_end;             // [g * paths + m]
    std::vector<std::uint8_t> escaped;  // [g * paths + m]

    const Vec& at(std::size_t g, int m) const { return x_end[g * paths + m]; }
    bool cell_escaped(std::size_t g, int m) const { return escaped[g * paths + m] != 0; }
};

FlowEnsemble integrate_flow(const DriftField& b, const FlowParams& params,
                            const std::vector<Vec>& grid, const NoiseEnsemble& noise);

EndpointEnsemble integrate_flow_endpoints(const DriftField& b, const FlowParams& params,
                                          const std::vector<Vec>& grid, const NoiseEnsemble& noise);

/// Endpoint run whose initial points differ per (grid, path) cell; used to
/// invert per-path forward endpoints.
EndpointEnsemble integrate_flow_endpoints_cellwise(const DriftField& b, const FlowParams& params,
                                                   const std::vector<Vec>& starts_by_cell,
                                                   std::size_t grid_count, int paths_hint,
                                                   const NoiseEnsemble& noise);

struct InvertResidual {
    double max_residual = 0.0;  // over cells unescaped in both directions
    std::size_t excluded = 0;   // escaped cells, not part of the maximum
};

/// Forward map over [0, t_step dt] composed with its backward inverse;
/// reports the worst round-trip distance to the initial grid.
InvertResidual invert_flow_residual(const DriftField& b, double sigma, const std::vector<Vec>& grid,
                                    const NoiseEnsemble& noise, int t_step, int threads = 1);

/// Base grid widened with +-h neighbours per axis, laid out
/// [x, x+he_1, x-he_1, (x+he_2, x-he_2)] per base point.
std::vector<Vec> make_stencil_grid(const std::vector<Vec>& base, double h, int dim);

/// Central-difference flow gradients from a run on a stencil grid.
/// grad is [(gb * paths + m) * (steps + 1) + k][i][j] with column j holding
/// d phi_i / d x_j; a stencil cell counts as escaped if any of its points did.
struct FlowGradients {
    std::size_t base_points = 0;
    int paths = 0;
    int steps = 0;
    int dim = 1;
    std::vector<Mat2> grad;
    std::vector<std::uint8_t> escaped;  // [gb * paths + m]

    const Mat2& at(std::size_t gb, int m, int k) const {
        return grad[(gb * paths + m) * static_cast<std::size_t>(steps + 1) + k];
    }
};

/// h must exceed 10 * machine epsilon * domain half-width; the flow must have
/// been integrated on make_stencil_grid(base, h, dim).
FlowGradients flow_gradient_fd(const FlowEnsemble& flow, double h);

double frobenius(const Mat2& m, int dim);

/// Monte Carlo moment tables for a sequence of regularised drifts against a
/// reference field, all driven by the same noise. Backward flows are run for
/// each requested output step; the sup over (time, point) of each cell mean is
/// reported together with the standard error at the maximising cell.
struct MomentTableRow {
    std::string drift_name;
    double convergence_moment = 0.0;  // sup_{t,x} mean |phi_n - phi_ref|^p
    double convergence_se = 0.0;
    double gradient_moment = 0.0;  // sup_{t,x} mean |grad phi_n|_F^p
    double gradient_se = 0.0;
    bool unreliable = false;  // fewer than 30 unescaped paths at some cell
};

struct MomentTable {
    double p_exp = 2.0;
    std::vector<int> output_steps;
    std::vector<MomentTableRow> rows;
};

/// p_exp >= 0 (p_exp = 0 degenerates to moment 1 by convention); fd_h <= 0
/// selects 1e-3 times the drift domain half-width.
MomentTable flow_moment_estimates(const std::vector<DriftField>& b_seq, const DriftField& b_ref,
                                  const FlowParams& params, const std::vector<Vec>& base_grid,
                                  const NoiseEnsemble& noise, double p_exp,
                                  const std::vector<int>& output_steps, double fd_h = 0.0);

struct CoalescenceMetric {
    double min_pair_distance = 0.0;  // min over paths; +inf for a single point
    double coalesced_fraction = 0.0; // paths whose running minimum dips under the threshold
};

CoalescenceMetric coalescence_metric(const FlowEnsemble& flow, double threshold);

/// Rows (grid_index, path, step, t, x_1..x_d).
void export_flow_csv(const FlowEnsemble& flow, const std::string& path);

}  // namespace stochflow
