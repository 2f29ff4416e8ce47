#include "stochflow/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace stochflow {

namespace {

Vec scaled_offset(const Vec& x, const Vec& center, double width, int dim) {
    Vec z{};
    for (int a = 0; a < dim; ++a) z[a] = (x[a] - center[a]) / width;
    return z;
}

// Smooth ramp plus an off-centre hump: the profile takes genuinely different
// values left and right of the origin over an O(1) neighbourhood, so a
// contracting flow folds a visible jump out of it. Profile and derivative
// share the exponentials so the gradient stays consistent with `value` to
// rounding.
double asym_profile(double s) {
    return 0.5 * std::tanh(2.0 * s) + std::exp(-0.5 * (s - 0.5) * (s - 0.5));
}

double asym_profile_d(double s) {
    const double th = std::tanh(2.0 * s);
    return (1.0 - th * th) - (s - 0.5) * std::exp(-0.5 * (s - 0.5) * (s - 0.5));
}

}  // namespace

void InitialConditionSpec::validate() const {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("initial condition: dim must be 1 or 2");
    if (!(width > 0.0) || !std::isfinite(width))
        throw ConfigError("initial condition: width must be positive");
    if (!std::isfinite(amplitude)) throw ConfigError("initial condition: amplitude must be finite");
    for (int a = 0; a < dim; ++a)
        if (!std::isfinite(center[a])) throw ConfigError("initial condition: center must be finite");
}

const char* InitialConditionSpec::kind_name() const {
    switch (kind) {
        case InitialConditionKind::gaussian_bump: return "gaussian-bump";
        case InitialConditionKind::asymmetric_smooth: return "asymmetric-smooth";
        case InitialConditionKind::compact_bump: return "compact-bump";
        case InitialConditionKind::step: return "step";
    }
    return "unknown";
}

double InitialConditionSpec::value(const Vec& x) const {
    const Vec z = scaled_offset(x, center, width, dim);
    switch (kind) {
        case InitialConditionKind::gaussian_bump: {
            const double s = dot(z, z, dim);
            return amplitude * std::exp(-0.5 * s);
        }
        case InitialConditionKind::asymmetric_smooth: {
            double v = asym_profile(z[0]);
            if (dim == 2) v *= std::exp(-0.5 * z[1] * z[1]);
            return amplitude * v;
        }
        case InitialConditionKind::compact_bump: {
            const double s = dot(z, z, dim);
            if (s >= 1.0) return 0.0;
            const double c = 1.0 - s;
            return amplitude * c * c * c;
        }
        case InitialConditionKind::step:
            return x[0] >= center[0] ? amplitude : 0.0;
    }
    return 0.0;
}

Vec InitialConditionSpec::gradient(const Vec& x) const {
    const Vec z = scaled_offset(x, center, width, dim);
    Vec g{};
    switch (kind) {
        case InitialConditionKind::gaussian_bump: {
            const double v = amplitude * std::exp(-0.5 * dot(z, z, dim));
            for (int a = 0; a < dim; ++a) g[a] = -v * z[a] / width;
            return g;
        }
        case InitialConditionKind::asymmetric_smooth: {
            const double tail = dim == 2 ? std::exp(-0.5 * z[1] * z[1]) : 1.0;
            g[0] = amplitude * asym_profile_d(z[0]) * tail / width;
            if (dim == 2) g[1] = amplitude * asym_profile(z[0]) * tail * (-z[1]) / width;
            return g;
        }
        case InitialConditionKind::compact_bump: {
            const double s = dot(z, z, dim);
            if (s >= 1.0) return g;
            const double c = 1.0 - s;
            for (int a = 0; a < dim; ++a) g[a] = -6.0 * amplitude * z[a] * c * c / width;
            return g;
        }
        case InitialConditionKind::step:
            return g;  // zero off the jump set, which has measure zero
    }
    return g;
}

double TestFunction::value(const Vec& x) const {
    const Vec z = scaled_offset(x, center, width, dim);
    const double s = dot(z, z, dim);
    if (s >= 1.0) return 0.0;
    const double c = 1.0 - s;
    return c * c * c;
}

Vec TestFunction::gradient(const Vec& x) const {
    const Vec z = scaled_offset(x, center, width, dim);
    const double s = dot(z, z, dim);
    Vec g{};
    if (s >= 1.0) return g;
    const double c = 1.0 - s;
    for (int a = 0; a < dim; ++a) g[a] = -6.0 * z[a] * c * c / width;
    return g;
}

double TestFunction::laplacian(const Vec& x) const {
    const Vec z = scaled_offset(x, center, width, dim);
    const double s = dot(z, z, dim);
    if (s >= 1.0) return 0.0;
    const double c = 1.0 - s;
    return (-6.0 * dim * c * c + 24.0 * s * c) / (width * width);
}

bool TestFunction::supported_inside(const GridSpec& g, double margin) const {
    for (int a = 0; a < dim; ++a) {
        if (center[a] - width < g.lo[a] + margin) return false;
        if (center[a] + width > g.hi[a] - margin) return false;
    }
    return true;
}

std::vector<ScalarFieldGrid> representation_solution(const InitialConditionSpec& u0,
                                                     const GridSpec& grid,
                                                     const FlowEnsemble& backward_flow, double t) {
    u0.validate();
    grid.validate();
    if (u0.dim != grid.dim || backward_flow.dim != grid.dim)
        throw ContractError("representation: dimension mismatch");
    if (backward_flow.direction != FlowDirection::backward)
        throw ContractError("representation: needs a backward flow run");
    if (backward_flow.grid.size() != grid.size())
        throw ContractError("representation: flow was not run on this grid");
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const Vec node = grid.node(j);
        for (int a = 0; a < grid.dim; ++a)
            if (std::abs(backward_flow.grid[j][a] - node[a]) > 1e-12)
                throw ContractError("representation: flow was not run on this grid");
    }
    if (std::abs(t - backward_flow.steps * backward_flow.dt) > 1e-9)
        throw ContractError(
            "representation: time must equal the full rewind horizon of the flow run");

    const int K = backward_flow.steps;
    std::vector<ScalarFieldGrid> out(backward_flow.paths);
    for (int m = 0; m < backward_flow.paths; ++m) {
        ScalarFieldGrid& f = out[m];
        f.grid = grid;
        f.tag = "u(t)";
        f.values.resize(grid.size());
        bool any_escaped = false;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            f.values[j] = u0.value(backward_flow.at(j, m, K));
            any_escaped = any_escaped || backward_flow.cell_escaped(j, m);
        }
        if (any_escaped) {
            f.mask.assign(grid.size(), 0);
            for (std::size_t j = 0; j < grid.size(); ++j)
                if (backward_flow.cell_escaped(j, m)) f.mask[j] = 1;
        }
    }
    return out;
}

RepresentationSeries representation_series(const InitialConditionSpec& u0, const DriftField& b,
                                           double sigma, const GridSpec& grid,
                                           const NoiseEnsemble& noise,
                                           const std::vector<int>& output_steps, int threads) {
    u0.validate();
    grid.validate();
    if (u0.dim != grid.dim || b.dim() != grid.dim || noise.dim != grid.dim)
        throw ContractError("representation series: dimension mismatch");
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw DomainError("representation series: sigma must be finite and >= 0");
    if (output_steps.empty()) throw ConfigError("representation series: no output steps");
    for (std::size_t i = 0; i < output_steps.size(); ++i) {
        if (output_steps[i] < 0 || output_steps[i] > noise.steps)
            throw ConfigError("representation series: output step outside the noise horizon");
        if (i > 0 && output_steps[i] <= output_steps[i - 1])
            throw ConfigError("representation series: output steps must be strictly ascending");
    }

    RepresentationSeries series;
    series.grid = grid;
    series.dt = noise.dt;
    series.noise_seed = noise.seed;
    series.noise_paths = noise.paths;
    series.noise_horizon = noise.horizon;
    series.output_steps = output_steps;
    series.fields.resize(output_steps.size());

    const std::vector<Vec> nodes = grid.nodes();
    for (std::size_t ti = 0; ti < output_steps.size(); ++ti) {
        const int k = output_steps[ti];
        auto& per_path = series.fields[ti];
        per_path.resize(noise.paths);
        if (k == 0) {
            // Nothing to rewind; the datum itself, one copy per path.
            ScalarFieldGrid f;
            f.grid = grid;
            f.tag = "u0";
            f.values.resize(grid.size());
            for (std::size_t j = 0; j < grid.size(); ++j) f.values[j] = u0.value(nodes[j]);
            for (int m = 0; m < noise.paths; ++m) per_path[m] = f;
            continue;
        }
        FlowParams params;
        params.sigma = sigma;
        params.direction = FlowDirection::backward;
        params.steps = k;
        params.threads = threads;
        const EndpointEnsemble ends = integrate_flow_endpoints(b, params, nodes, noise);
        for (int m = 0; m < noise.paths; ++m) {
            ScalarFieldGrid& f = per_path[m];
            f.grid = grid;
            f.tag = "u(t)";
            f.values.resize(grid.size());
            bool any_escaped = false;
            for (std::size_t j = 0; j < grid.size(); ++j) {
                f.values[j] = u0.value(ends.at(j, m));
                any_escaped = any_escaped || ends.cell_escaped(j, m);
            }
            if (any_escaped) {
                f.mask.assign(grid.size(), 0);
                for (std::size_t j = 0; j < grid.size(); ++j)
                    if (ends.cell_escaped(j, m)) f.mask[j] = 1;
            }
        }
    }
    return series;
}

double weak_form_residual(const std::vector<ScalarFieldGrid>& u_steps, const DriftField& b,
                          double sigma, const InitialConditionSpec& u0, const TestFunction& chi,
                          const NoiseEnsemble& noise, int path, int t_step) {
    if (t_step < 0 || static_cast<std::size_t>(t_step) >= u_steps.size())
        throw ContractError("weak form: field ladder does not reach the requested step");
    if (path < 0 || path >= noise.paths) throw ContractError("weak form: path index out of range");
    if (t_step > noise.steps)
        throw ContractError("weak form: step outside the noise horizon");
    if (!(sigma >= 0.0)) throw DomainError("weak form: sigma must be >= 0");

    const GridSpec& grid = u_steps[0].grid;
    grid.validate();
    if (chi.dim != grid.dim || u0.dim != grid.dim || b.dim() != grid.dim)
        throw ContractError("weak form: dimension mismatch");
    for (int s = 0; s <= t_step; ++s) {
        u_steps[s].require_shape();
        if (!u_steps[s].grid.same_as(grid))
            throw ContractError("weak form: field ladder mixes grids");
    }

    double max_h = 0.0;
    for (int a = 0; a < grid.dim; ++a) max_h = std::max(max_h, grid.spacing(a));
    if (!chi.supported_inside(grid, max_h))
        throw DomainError("weak form: test function support must stay one cell clear of the box");

    // Support nodes in ascending flat order, plus the one-cell dilation the
    // gradient stencil reads. Masked values anywhere in that set would leak
    // frozen states into the integrals, so they are rejected outright.
    std::vector<std::size_t> support;
    std::vector<double> chi_v(grid.size(), 0.0);
    std::vector<Vec> chi_g(grid.size());
    std::vector<double> chi_l(grid.size(), 0.0);
    const std::size_t stride[2] = {1, static_cast<std::size_t>(grid.n[0])};
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const Vec x = grid.node(j);
        const double v = chi.value(x);
        if (v == 0.0) continue;
        chi_v[j] = v;
        chi_g[j] = chi.gradient(x);
        chi_l[j] = chi.laplacian(x);
        support.push_back(j);
    }
    for (int s = 0; s <= t_step; ++s) {
        const auto& f = u_steps[s];
        if (f.mask.empty()) continue;
        for (const std::size_t j : support) {
            if (!f.valid(j))
                throw DomainError("weak form: test function support touches a masked cell");
            for (int a = 0; a < grid.dim; ++a)
                if (!f.valid(j - stride[a]) || !f.valid(j + stride[a]))
                    throw DomainError("weak form: test function support touches a masked cell");
        }
    }

    const double vol = grid.cell_volume();
    const double dt = noise.dt;

    // End and initial terms share loop order and arithmetic so that a ladder
    // whose step-0 values are the sampled datum cancels exactly.
    double end_term = 0.0;
    for (const std::size_t j : support) end_term += vol * u_steps[t_step].values[j] * chi_v[j];
    double init_term = 0.0;
    for (const std::size_t j : support) init_term += vol * u0.value(grid.node(j)) * chi_v[j];

    double drift_term = 0.0;
    for (int s = 0; s < t_step; ++s) {
        const auto& u = u_steps[s].values;
        const double t = s * dt;
        double space = 0.0;
        for (const std::size_t j : support) {
            const Vec bv = b.eval(t, grid.node(j));
            double adv = 0.0;
            for (int a = 0; a < grid.dim; ++a) {
                const double du =
                    (u[j + stride[a]] - u[j - stride[a]]) / (2.0 * grid.spacing(a));
                adv += bv[a] * du;
            }
            space += vol * adv * chi_v[j];
        }
        drift_term += dt * space;
    }

    double ito_sum = 0.0;
    for (int a = 0; a < grid.dim; ++a) {
        for (int s = 0; s < t_step; ++s) {
            const auto& u = u_steps[s].values;
            double space = 0.0;
            for (const std::size_t j : support) space += vol * u[j] * chi_g[j][a];
            ito_sum += space * noise.increment(path, s, a);
        }
    }

    double visc_sum = 0.0;
    for (int s = 0; s < t_step; ++s) {
        const auto& u = u_steps[s].values;
        double space = 0.0;
        for (const std::size_t j : support) space += vol * u[j] * chi_l[j];
        visc_sum += dt * space;
    }

    const double residual =
        end_term + drift_term - init_term - sigma * ito_sum - 0.5 * sigma * sigma * visc_sum;
    if (!std::isfinite(residual)) throw EvaluationError("weak form: residual is not finite");
    return std::abs(residual);
}

}  // namespace stochflow
