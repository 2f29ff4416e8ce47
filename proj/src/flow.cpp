#include "stochflow/flow.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "stochflow/threading.hpp"

namespace stochflow {

namespace {

struct CellOutcome {
    Vec x_end{};
    bool escaped = false;
    int escape_step = -1;
};

// One Euler-Maruyama trajectory. The observer sees every state after the
// initial one, escape-frozen states included.
template <class Obs>
CellOutcome run_cell(const DriftField& b, const FlowParams& p, const NoiseEnsemble& noise,
                     int steps, const Vec& x0, int path, double esc_half, Obs&& obs) {
    CellOutcome out;
    Vec x = x0;
    const double dt = noise.dt;
    const int dim = b.dim();
    const bool backward = p.direction == FlowDirection::backward;
    for (int j = 0; j < steps; ++j) {
        if (!out.escaped) {
            const int k = backward ? steps - 1 - j : j;  // forward step being applied or undone
            const Vec bv = b.eval(k * dt, x);
            Vec next = x;
            if (backward) {
                for (int a = 0; a < dim; ++a)
                    next[a] -= bv[a] * dt + p.sigma * noise.increment(path, k, a);
            } else {
                for (int a = 0; a < dim; ++a)
                    next[a] += bv[a] * dt + p.sigma * noise.increment(path, k, a);
            }
            if (max_abs_component(next, dim) > esc_half) {
                out.escaped = true;
                out.escape_step = j + 1;
            } else {
                x = next;
            }
        }
        obs(j + 1, x);
    }
    out.x_end = x;
    return out;
}

int resolve_steps(const FlowParams& p, const NoiseEnsemble& noise) {
    const int steps = p.steps < 0 ? noise.steps : p.steps;
    if (steps < 1 || steps > noise.steps)
        throw ContractError("flow: step count outside the noise ensemble");
    return steps;
}

double resolve_escape(const FlowParams& p, const DriftField& b) {
    const double h = p.escape_halfwidth > 0.0 ? p.escape_halfwidth
                                              : p.escape_factor * b.domain_halfwidth();
    if (!(h > 0.0)) throw ConfigError("flow: escape box must be positive");
    return h;
}

void check_dims(const DriftField& b, const NoiseEnsemble& noise) {
    if (b.dim() != noise.dim) throw ContractError("flow: drift and noise dimension mismatch");
}

}  // namespace

std::size_t FlowEnsemble::escape_count() const {
    std::size_t c = 0;
    for (auto e : escaped) c += e != 0;
    return c;
}

FlowEnsemble integrate_flow(const DriftField& b, const FlowParams& params,
                            const std::vector<Vec>& grid, const NoiseEnsemble& noise) {
    check_dims(b, noise);
    if (grid.empty()) throw DomainError("integrate_flow: empty grid");
    const int steps = resolve_steps(params, noise);
    const double esc = resolve_escape(params, b);

    FlowEnsemble f;
    f.grid = grid;
    f.dim = b.dim();
    f.direction = params.direction;
    f.sigma = params.sigma;
    f.dt = noise.dt;
    f.steps = steps;
    f.paths = noise.paths;
    f.noise_seed = noise.seed;
    f.drift_name = b.name();
    const std::size_t cells = grid.size() * static_cast<std::size_t>(noise.paths);
    const std::size_t total = cells * static_cast<std::size_t>(steps + 1) * f.dim;
    if (total > (std::size_t{1} << 28))
        throw ConfigError("integrate_flow: trajectory storage too large; use the endpoint driver");
    f.x.resize(total);
    f.escaped.assign(cells, 0);
    f.escape_step.assign(cells, -1);

    parallel_for(cells, params.threads, [&](std::size_t cell) {
        const std::size_t g = cell / noise.paths;
        const int m = static_cast<int>(cell % noise.paths);
        const std::size_t base = cell * static_cast<std::size_t>(steps + 1) * f.dim;
        for (int a = 0; a < f.dim; ++a) f.x[base + a] = grid[g][a];
        const auto outcome = run_cell(b, params, noise, steps, grid[g], m, esc, [&](int k, const Vec& x) {
            for (int a = 0; a < f.dim; ++a)
                f.x[base + static_cast<std::size_t>(k) * f.dim + a] = x[a];
        });
        f.escaped[cell] = outcome.escaped ? 1 : 0;
        f.escape_step[cell] = outcome.escape_step;
    });
    return f;
}

EndpointEnsemble integrate_flow_endpoints(const DriftField& b, const FlowParams& params,
                                          const std::vector<Vec>& grid, const NoiseEnsemble& noise) {
    check_dims(b, noise);
    if (grid.empty()) throw DomainError("integrate_flow_endpoints: empty grid");
    const int steps = resolve_steps(params, noise);
    const double esc = resolve_escape(params, b);

    EndpointEnsemble f;
    f.grid = grid;
    f.dim = b.dim();
    f.steps = steps;
    f.paths = noise.paths;
    const std::size_t cells = grid.size() * static_cast<std::size_t>(noise.paths);
    f.x_end.resize(cells);
    f.escaped.assign(cells, 0);
    parallel_for(cells, params.threads, [&](std::size_t cell) {
        const std::size_t g = cell / noise.paths;
        const int m = static_cast<int>(cell % noise.paths);
        const auto outcome = run_cell(b, params, noise, steps, grid[g], m, esc, [](int, const Vec&) {});
        f.x_end[cell] = outcome.x_end;
        f.escaped[cell] = outcome.escaped ? 1 : 0;
    });
    return f;
}

EndpointEnsemble integrate_flow_endpoints_cellwise(const DriftField& b, const FlowParams& params,
                                                   const std::vector<Vec>& starts_by_cell,
                                                   std::size_t grid_count, int paths_hint,
                                                   const NoiseEnsemble& noise) {
    check_dims(b, noise);
    if (paths_hint != noise.paths) throw ContractError("flow: cellwise start table paths mismatch");
    if (starts_by_cell.size() != grid_count * static_cast<std::size_t>(noise.paths))
        throw ContractError("flow: cellwise start table size mismatch");
    const int steps = resolve_steps(params, noise);
    const double esc = resolve_escape(params, b);

    EndpointEnsemble f;
    f.dim = b.dim();
    f.steps = steps;
    f.paths = noise.paths;
    f.x_end.resize(starts_by_cell.size());
    f.escaped.assign(starts_by_cell.size(), 0);
    parallel_for(starts_by_cell.size(), params.threads, [&](std::size_t cell) {
        const int m = static_cast<int>(cell % noise.paths);
        const auto outcome =
            run_cell(b, params, noise, steps, starts_by_cell[cell], m, esc, [](int, const Vec&) {});
        f.x_end[cell] = outcome.x_end;
        f.escaped[cell] = outcome.escaped ? 1 : 0;
    });
    return f;
}

InvertResidual invert_flow_residual(const DriftField& b, double sigma, const std::vector<Vec>& grid,
                                    const NoiseEnsemble& noise, int t_step, int threads) {
    FlowParams fwd;
    fwd.sigma = sigma;
    fwd.direction = FlowDirection::forward;
    fwd.steps = t_step;
    fwd.threads = threads;
    const auto forward = integrate_flow_endpoints(b, fwd, grid, noise);

    FlowParams bwd = fwd;
    bwd.direction = FlowDirection::backward;
    const auto back = integrate_flow_endpoints_cellwise(b, bwd, forward.x_end, grid.size(),
                                                        noise.paths, noise);

    InvertResidual r;
    for (std::size_t g = 0; g < grid.size(); ++g)
        for (int m = 0; m < noise.paths; ++m) {
            if (forward.cell_escaped(g, m) || back.cell_escaped(g, m)) {
                ++r.excluded;
                continue;
            }
            r.max_residual = std::max(r.max_residual, dist2(back.at(g, m), grid[g], b.dim()));
        }
    return r;
}

std::vector<Vec> make_stencil_grid(const std::vector<Vec>& base, double h, int dim) {
    if (!(h > 0.0)) throw DomainError("make_stencil_grid: h must be positive");
    std::vector<Vec> out;
    out.reserve(base.size() * (1 + 2 * static_cast<std::size_t>(dim)));
    for (const Vec& x : base) {
        out.push_back(x);
        for (int a = 0; a < dim; ++a) {
            Vec p = x, q = x;
            p[a] += h;
            q[a] -= h;
            out.push_back(p);
            out.push_back(q);
        }
    }
    return out;
}

FlowGradients flow_gradient_fd(const FlowEnsemble& flow, double h) {
    const int d = flow.dim;
    const std::size_t group = 1 + 2 * static_cast<std::size_t>(d);
    if (flow.grid.size() % group != 0)
        throw ContractError("flow_gradient_fd: grid is not a +-h stencil layout");
    double scale = 0.0;
    for (const Vec& x : flow.grid) scale = std::max(scale, max_abs_component(x, d));
    if (!(h > 10.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, scale)))
        throw DomainError("flow_gradient_fd: stencil width too small for the domain scale");
    for (std::size_t gb = 0; gb < flow.grid.size() / group; ++gb)
        for (int a = 0; a < d; ++a) {
            const Vec& c = flow.grid[gb * group];
            const Vec& pl = flow.grid[gb * group + 1 + 2 * a];
            const Vec& mi = flow.grid[gb * group + 2 + 2 * a];
            if (std::abs(pl[a] - c[a] - h) > 1e-9 * std::max(1.0, h) ||
                std::abs(c[a] - mi[a] - h) > 1e-9 * std::max(1.0, h))
                throw ContractError("flow_gradient_fd: stencil spacing does not match h");
        }

    FlowGradients g;
    g.base_points = flow.grid.size() / group;
    g.paths = flow.paths;
    g.steps = flow.steps;
    g.dim = d;
    g.grad.resize(g.base_points * static_cast<std::size_t>(flow.paths) *
                  static_cast<std::size_t>(flow.steps + 1));
    g.escaped.assign(g.base_points * static_cast<std::size_t>(flow.paths), 0);
    for (std::size_t gb = 0; gb < g.base_points; ++gb)
        for (int m = 0; m < flow.paths; ++m) {
            bool esc = false;
            for (std::size_t s = 0; s < group; ++s) esc = esc || flow.cell_escaped(gb * group + s, m);
            g.escaped[gb * flow.paths + m] = esc ? 1 : 0;
            for (int k = 0; k <= flow.steps; ++k) {
                Mat2 J{};
                for (int col = 0; col < d; ++col) {
                    const Vec xp = flow.at(gb * group + 1 + 2 * col, m, k);
                    const Vec xm = flow.at(gb * group + 2 + 2 * col, m, k);
                    for (int row = 0; row < d; ++row) J[row][col] = (xp[row] - xm[row]) / (2.0 * h);
                }
                g.grad[(gb * static_cast<std::size_t>(flow.paths) + m) *
                           static_cast<std::size_t>(flow.steps + 1) +
                       k] = J;
            }
        }
    return g;
}

double frobenius(const Mat2& m, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) s += m[i][j] * m[i][j];
    return std::sqrt(s);
}

namespace {

struct SupTracker {
    double value = -std::numeric_limits<double>::infinity();
    double se = 0.0;
    bool seen = false;
    void offer(const MeanSe& ms) {
        if (!seen || ms.mean > value) {
            value = ms.mean;
            se = ms.se;
            seen = true;
        }
    }
};

}  // namespace

MomentTable flow_moment_estimates(const std::vector<DriftField>& b_seq, const DriftField& b_ref,
                                  const FlowParams& params, const std::vector<Vec>& base_grid,
                                  const NoiseEnsemble& noise, double p_exp,
                                  const std::vector<int>& output_steps, double fd_h) {
    if (b_seq.empty()) throw DomainError("flow_moment_estimates: empty drift sequence");
    if (output_steps.empty()) throw DomainError("flow_moment_estimates: no output steps");
    if (p_exp < 0.0) throw DomainError("flow_moment_estimates: moment exponent must be >= 0");
    const int d = b_ref.dim();
    const double h = fd_h > 0.0 ? fd_h : 1e-3 * b_ref.domain_halfwidth();
    const auto stencil = make_stencil_grid(base_grid, h, d);
    const std::size_t group = 1 + 2 * static_cast<std::size_t>(d);

    MomentTable table;
    table.p_exp = p_exp;
    table.output_steps = output_steps;
    table.rows.resize(b_seq.size());
    for (std::size_t i = 0; i < b_seq.size(); ++i) table.rows[i].drift_name = b_seq[i].name();

    std::vector<SupTracker> conv(b_seq.size()), grad(b_seq.size());
    std::vector<char> unreliable(b_seq.size(), 0);

    FlowParams run = params;
    run.direction = FlowDirection::backward;
    for (int K : output_steps) {
        run.steps = K;
        const auto ref = integrate_flow_endpoints(b_ref, run, base_grid, noise);
        for (std::size_t i = 0; i < b_seq.size(); ++i) {
            const auto end = integrate_flow_endpoints(b_seq[i], run, base_grid, noise);
            for (std::size_t g = 0; g < base_grid.size(); ++g) {
                std::vector<double> samples;
                samples.reserve(noise.paths);
                for (int m = 0; m < noise.paths; ++m) {
                    if (ref.cell_escaped(g, m) || end.cell_escaped(g, m)) continue;
                    samples.push_back(std::pow(dist2(ref.at(g, m), end.at(g, m), d), p_exp));
                }
                if (samples.size() < 30) unreliable[i] = 1;
                if (!samples.empty()) conv[i].offer(mean_se(samples));
            }

            const auto sten = integrate_flow_endpoints(b_seq[i], run, stencil, noise);
            for (std::size_t gb = 0; gb < base_grid.size(); ++gb) {
                std::vector<double> samples;
                samples.reserve(noise.paths);
                for (int m = 0; m < noise.paths; ++m) {
                    bool esc = false;
                    for (std::size_t s = 0; s < group; ++s)
                        esc = esc || sten.cell_escaped(gb * group + s, m);
                    if (esc) continue;
                    Mat2 J{};
                    for (int col = 0; col < d; ++col) {
                        const Vec& xp = sten.at(gb * group + 1 + 2 * col, m);
                        const Vec& xm = sten.at(gb * group + 2 + 2 * col, m);
                        for (int row = 0; row < d; ++row) J[row][col] = (xp[row] - xm[row]) / (2.0 * h);
                    }
                    samples.push_back(std::pow(frobenius(J, d), p_exp));
                }
                if (samples.size() < 30) unreliable[i] = 1;
                if (!samples.empty()) grad[i].offer(mean_se(samples));
            }
        }
    }

    for (std::size_t i = 0; i < b_seq.size(); ++i) {
        table.rows[i].convergence_moment = conv[i].seen ? conv[i].value : 0.0;
        table.rows[i].convergence_se = conv[i].se;
        table.rows[i].gradient_moment = grad[i].seen ? grad[i].value : 0.0;
        table.rows[i].gradient_se = grad[i].se;
        table.rows[i].unreliable = unreliable[i] != 0;
    }
    return table;
}

CoalescenceMetric coalescence_metric(const FlowEnsemble& flow, double threshold) {
    CoalescenceMetric out;
    out.min_pair_distance = std::numeric_limits<double>::infinity();
    if (flow.grid.size() < 2) return out;
    std::size_t coalesced = 0;
    for (int m = 0; m < flow.paths; ++m) {
        double path_min = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= flow.steps; ++k)
            for (std::size_t i = 0; i < flow.grid.size(); ++i) {
                if (flow.cell_escaped(i, m)) continue;
                for (std::size_t j = i + 1; j < flow.grid.size(); ++j) {
                    if (flow.cell_escaped(j, m)) continue;
                    path_min = std::min(path_min, dist2(flow.at(i, m, k), flow.at(j, m, k), flow.dim));
                }
            }
        out.min_pair_distance = std::min(out.min_pair_distance, path_min);
        if (path_min < threshold) ++coalesced;
    }
    out.coalesced_fraction = static_cast<double>(coalesced) / flow.paths;
    return out;
}

void export_flow_csv(const FlowEnsemble& flow, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw ConfigError("export_flow_csv: cannot open " + path);
    std::fputs("grid_index,path,step,t", f);
    for (int a = 0; a < flow.dim; ++a) std::fprintf(f, ",x_%d", a + 1);
    std::fputc('\n', f);
    for (std::size_t g = 0; g < flow.grid.size(); ++g)
        for (int m = 0; m < flow.paths; ++m)
            for (int k = 0; k <= flow.steps; ++k) {
                std::fprintf(f, "%zu,%d,%d,%.12g", g, m, k, k * flow.dt);
                const Vec x = flow.at(g, m, k);
                for (int a = 0; a < flow.dim; ++a) std::fprintf(f, ",%.12g", x[a]);
                std::fputc('\n', f);
            }
    std::fclose(f);
}

}  // namespace stochflow
