#include "stochflow/zvonkin.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "stochflow/threading.hpp"

namespace stochflow {

namespace {

int wrap_index(int i, int n) {
    i %= n;
    return i < 0 ? i + n : i;
}

/// Node lookup on one time-level slice [node * dim + comp] with the boundary
/// convention applied to out-of-range indices.
double slice_value(const GridSpec& g, PdeBc bc, int dim, const double* slice,
                   std::array<int, kMaxDim> idx, int comp) {
    for (int a = 0; a < g.dim; ++a) {
        if (idx[a] < 0 || idx[a] >= g.n[a]) {
            if (bc == PdeBc::dirichlet_zero) return 0.0;
            idx[a] = wrap_index(idx[a], g.n[a]);
        }
    }
    return slice[g.flatten(idx) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(comp)];
}

double slice_grad(const GridSpec& g, PdeBc bc, int dim, const double* slice,
                  const std::array<int, kMaxDim>& idx, int comp, int axis) {
    auto ip = idx;
    auto im = idx;
    ip[axis] += 1;
    im[axis] -= 1;
    return (slice_value(g, bc, dim, slice, ip, comp) - slice_value(g, bc, dim, slice, im, comp)) /
           (2.0 * g.spacing(axis));
}

double slice_hess(const GridSpec& g, PdeBc bc, int dim, const double* slice,
                  const std::array<int, kMaxDim>& idx, int comp, int ax1, int ax2) {
    if (ax1 == ax2) {
        auto ip = idx;
        auto im = idx;
        ip[ax1] += 1;
        im[ax1] -= 1;
        const double h = g.spacing(ax1);
        return (slice_value(g, bc, dim, slice, ip, comp) -
                2.0 * slice_value(g, bc, dim, slice, idx, comp) +
                slice_value(g, bc, dim, slice, im, comp)) /
               (h * h);
    }
    auto pp = idx, pm = idx, mp = idx, mm = idx;
    pp[ax1] += 1;
    pp[ax2] += 1;
    pm[ax1] += 1;
    pm[ax2] -= 1;
    mp[ax1] -= 1;
    mp[ax2] += 1;
    mm[ax1] -= 1;
    mm[ax2] -= 1;
    return (slice_value(g, bc, dim, slice, pp, comp) - slice_value(g, bc, dim, slice, pm, comp) -
            slice_value(g, bc, dim, slice, mp, comp) + slice_value(g, bc, dim, slice, mm, comp)) /
           (4.0 * g.spacing(ax1) * g.spacing(ax2));
}

bool on_boundary(const GridSpec& g, const std::array<int, kMaxDim>& idx) {
    for (int a = 0; a < g.dim; ++a)
        if (idx[a] == 0 || idx[a] == g.n[a] - 1) return true;
    return false;
}

/// y = x - c * Laplace_h x. Dirichlet boundary rows act as the identity, which
/// keeps the operator symmetric on the subspace of vectors vanishing there.
void apply_diffusion_operator(const GridSpec& g, PdeBc bc, double c, const std::vector<double>& x,
                              std::vector<double>& y) {
    const std::size_t nn = g.size();
    for (std::size_t j = 0; j < nn; ++j) {
        const auto idx = g.unflatten(j);
        if (bc == PdeBc::dirichlet_zero && on_boundary(g, idx)) {
            y[j] = x[j];
            continue;
        }
        double lap = 0.0;
        for (int a = 0; a < g.dim; ++a) {
            auto ip = idx;
            auto im = idx;
            ip[a] += 1;
            im[a] -= 1;
            const double h = g.spacing(a);
            lap += (slice_value(g, bc, 1, x.data(), ip, 0) - 2.0 * x[j] +
                    slice_value(g, bc, 1, x.data(), im, 0)) /
                   (h * h);
        }
        y[j] = x[j] - c * lap;
    }
}

/// Tridiagonal factorisation of I - c * Laplace_h on the interior nodes of a
/// 1-d Dirichlet grid. Constant diagonals, so the factorisation is reused
/// across steps and components.
struct ThomasSolver {
    int n_total = 0;
    double off = 0.0;
    std::vector<double> cp;        // modified super-diagonal
    std::vector<double> inv_den;   // pivot reciprocals
    mutable std::vector<double> fwd;

    void factor(int n, double diag, double off_diag) {
        n_total = n;
        off = off_diag;
        const int m = n - 2;
        cp.resize(m);
        inv_den.resize(m);
        fwd.resize(m);
        double den = diag;
        for (int i = 0; i < m; ++i) {
            if (i > 0) den = diag - off * cp[i - 1];
            inv_den[i] = 1.0 / den;
            cp[i] = off * inv_den[i];
        }
    }

    /// Solves in place: rhs holds the full-grid right-hand side on entry and
    /// the solution on exit, with the boundary entries forced to zero.
    void solve(std::vector<double>& rhs) const {
        const int m = n_total - 2;
        fwd[0] = rhs[1] * inv_den[0];
        for (int i = 1; i < m; ++i) fwd[i] = (rhs[i + 1] - off * fwd[i - 1]) * inv_den[i];
        rhs[m] = fwd[m - 1];
        for (int i = m - 2; i >= 0; --i) rhs[i + 1] = fwd[i] - cp[i] * rhs[i + 2];
        rhs[0] = 0.0;
        rhs[n_total - 1] = 0.0;
    }
};

double dot_serial(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Matrix-free conjugate gradients for the SPD operator behind `apply`.
/// Starts from x = rhs, which is already exact for spatially constant states.
template <class Op>
void conjugate_gradient(const Op& apply, const std::vector<double>& rhs, std::vector<double>& x,
                        std::vector<double>& r, std::vector<double>& p, std::vector<double>& ap,
                        double tol_rel, int max_iter) {
    const double bnorm2 = dot_serial(rhs, rhs);
    if (bnorm2 == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return;
    }
    x = rhs;
    apply(x, ap);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rhs[i] - ap[i];
    double rr = dot_serial(r, r);
    const double tol2 = tol_rel * tol_rel * bnorm2;
    if (rr <= tol2) return;
    p = r;
    for (int it = 0; it < max_iter; ++it) {
        apply(p, ap);
        const double pap = dot_serial(p, ap);
        if (!(pap > 0.0))
            throw SolverError("conjugate_gradient: operator lost positive definiteness (p.Ap = " +
                              std::to_string(pap) + ")");
        const double alpha = rr / pap;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += alpha * p[i];
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= alpha * ap[i];
        const double rr_new = dot_serial(r, r);
        if (rr_new <= tol2) return;
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    }
    throw SolverError("conjugate_gradient: no convergence after " + std::to_string(max_iter) +
                      " iterations, residual " + std::to_string(std::sqrt(rr / bnorm2)));
}

double sampled_sup_advection_ratio(const DriftField& b, const GridSpec& space, double horizon) {
    std::vector<double> times{0.0};
    if (b.time_dependent())
        for (int i = 1; i <= 8; ++i) times.push_back(horizon * i / 8.0);
    double worst = 0.0;
    const std::size_t nn = space.size();
    for (double t : times)
        for (std::size_t j = 0; j < nn; ++j) {
            const Vec v = b.eval(t, space.node(j));
            for (int a = 0; a < space.dim; ++a)
                worst = std::max(worst, std::abs(v[a]) / space.spacing(a));
        }
    return worst;
}

void check_support_coverage(const DriftField& field, const PdeGrid& grid, const char* role) {
    if (field.kind() == DriftField::Kind::zero) return;  // empty support
    if (!std::isfinite(field.trunc_radius())) return;
    const double reach = field.trunc_radius() + grid.buffer_min;
    for (int a = 0; a < grid.space.dim; ++a)
        if (grid.space.lo[a] > -reach + 1e-12 || grid.space.hi[a] < reach - 1e-12)
            throw ConfigError(std::string("solve_backward_pde: box does not cover the ") + role +
                              " support radius " + std::to_string(field.trunc_radius()) +
                              " plus buffer " + std::to_string(grid.buffer_min));
}

struct TimeBlend {
    int i0 = 0;
    int i1 = 0;
    double w1 = 0.0;  // weight of level i1; i0 carries 1 - w1
};

TimeBlend time_blend(const PdeGrid& g, double t) {
    const double s = t / g.dt();
    if (!(s > 0.0)) return {0, 0, 0.0};
    if (s >= static_cast<double>(g.nt)) return {g.nt, g.nt, 0.0};
    int i = static_cast<int>(s);
    if (i > g.nt - 1) i = g.nt - 1;
    return {i, i + 1, s - i};
}

/// Multilinear combination of per-node values at a point inside the box.
template <class F>
double interp_cell(const GridSpec& g, const Vec& x, F&& node_value) {
    std::array<int, kMaxDim> base{};
    std::array<double, kMaxDim> frac{};
    for (int a = 0; a < g.dim; ++a) {
        double s = (x[a] - g.lo[a]) / g.spacing(a);
        if (s < 0.0) s = 0.0;
        if (s > g.n[a] - 1.0) s = g.n[a] - 1.0;
        int i = static_cast<int>(s);
        if (i > g.n[a] - 2) i = g.n[a] - 2;
        base[a] = i;
        frac[a] = s - i;
    }
    if (g.dim == 1)
        return node_value(std::array<int, kMaxDim>{base[0], 0}) * (1.0 - frac[0]) +
               node_value(std::array<int, kMaxDim>{base[0] + 1, 0}) * frac[0];
    const double v0 = node_value(std::array<int, kMaxDim>{base[0], base[1]}) * (1.0 - frac[0]) +
                      node_value(std::array<int, kMaxDim>{base[0] + 1, base[1]}) * frac[0];
    const double v1 = node_value(std::array<int, kMaxDim>{base[0], base[1] + 1}) * (1.0 - frac[0]) +
                      node_value(std::array<int, kMaxDim>{base[0] + 1, base[1] + 1}) * frac[0];
    return v0 * (1.0 - frac[1]) + v1 * frac[1];
}

/// Space-time norms of the computed solution plus the forcing-relative ratio.
void accumulate_norms(ZvonkinSolution& sol, const DriftField& f) {
    const GridSpec& space = sol.grid.space;
    const int d = sol.dim;
    const int nt = sol.grid.nt;
    const double dt = sol.grid.dt();
    const double vol = space.cell_volume();
    const std::size_t nn = space.size();
    const double p = sol.norm_p, q = sol.norm_q;

    double acc_u = 0.0, acc_g = 0.0, acc_h = 0.0, acc_dt = 0.0, acc_f = 0.0;
    for (int i = 0; i <= nt; ++i) {
        const double* slice = sol.u.data() + static_cast<std::size_t>(i) * nn * d;
        const double* next =
            i < nt ? sol.u.data() + static_cast<std::size_t>(i + 1) * nn * d : nullptr;
        const double t = i * dt;
        double su = 0.0, sg = 0.0, sh = 0.0, sdt = 0.0, sf = 0.0;
        for (std::size_t j = 0; j < nn; ++j) {
            const auto idx = space.unflatten(j);
            double u2 = 0.0, g2 = 0.0;
            for (int c = 0; c < d; ++c) {
                const double uc = slice[j * d + c];
                u2 += uc * uc;
                for (int a = 0; a < space.dim; ++a) {
                    const double g = slice_grad(space, sol.grid.bc, d, slice, idx, c, a);
                    g2 += g * g;
                }
            }
            sol.sup_u = std::max(sol.sup_u, std::sqrt(u2));
            sol.sup_grad = std::max(sol.sup_grad, std::sqrt(g2));
            if (i == nt) continue;
            double h2 = 0.0, dt2 = 0.0, f2 = 0.0;
            const Vec fv = f.eval(t, space.node(idx));
            for (int c = 0; c < d; ++c) {
                for (int a1 = 0; a1 < space.dim; ++a1)
                    for (int a2 = 0; a2 < space.dim; ++a2) {
                        const double h = slice_hess(space, sol.grid.bc, d, slice, idx, c, a1, a2);
                        h2 += h * h;
                    }
                const double du = (next[j * d + c] - slice[j * d + c]) / dt;
                dt2 += du * du;
                f2 += fv[c] * fv[c];
            }
            su += vol * std::pow(u2, 0.5 * p);
            sg += vol * std::pow(g2, 0.5 * p);
            sh += vol * std::pow(h2, 0.5 * p);
            sdt += vol * std::pow(dt2, 0.5 * p);
            sf += vol * std::pow(f2, 0.5 * p);
        }
        if (i == nt) continue;
        acc_u += dt * std::pow(su, q / p);
        acc_g += dt * std::pow(sg, q / p);
        acc_h += dt * std::pow(sh, q / p);
        acc_dt += dt * std::pow(sdt, q / p);
        acc_f += dt * std::pow(sf, q / p);
    }
    sol.mixed_u = std::pow(acc_u, 1.0 / q);
    sol.mixed_grad = std::pow(acc_g, 1.0 / q);
    sol.mixed_hess = std::pow(acc_h, 1.0 / q);
    sol.mixed_dt = std::pow(acc_dt, 1.0 / q);
    const double denom = std::pow(acc_f, 1.0 / q);
    sol.schauder_ratio =
        denom > 0.0 ? (sol.mixed_u + sol.mixed_grad + sol.mixed_hess + sol.mixed_dt) / denom : 0.0;
}

bool inside_box(const Vec& x, const Vec& lo, const Vec& hi, int dim) {
    for (int a = 0; a < dim; ++a)
        if (x[a] < lo[a] || x[a] > hi[a]) return false;
    return true;
}

int normalize_stride(int nt, int requested) {
    int s = requested > 0 ? requested : std::max(1, (nt + 199) / 200);
    if (s > nt) s = nt;
    while (nt % s != 0) ++s;
    return s;
}

const char* bc_name(PdeBc bc) { return bc == PdeBc::periodic ? "periodic" : "dirichlet_zero"; }

PdeBc bc_from_name(const std::string& s) {
    if (s == "periodic") return PdeBc::periodic;
    if (s == "dirichlet_zero") return PdeBc::dirichlet_zero;
    throw ConfigError("load_zvonkin: unknown boundary condition '" + s + "'");
}

}  // namespace

double ZvonkinSolution::node_grad(int level, const std::array<int, kMaxDim>& idx, int comp,
                                  int axis) const {
    const double* slice = u.data() + static_cast<std::size_t>(level) * nodes() * dim;
    return slice_grad(grid.space, grid.bc, dim, slice, idx, comp, axis);
}

double ZvonkinSolution::node_hess(int level, const std::array<int, kMaxDim>& idx, int comp, int ax1,
                                  int ax2) const {
    const double* slice = u.data() + static_cast<std::size_t>(level) * nodes() * dim;
    return slice_hess(grid.space, grid.bc, dim, slice, idx, comp, ax1, ax2);
}

Vec ZvonkinSolution::eval(double t, const Vec& x) const {
    Vec out{};
    if (!grid.space.contains(x)) return out;
    const TimeBlend tb = time_blend(grid, t);
    for (int c = 0; c < dim; ++c) {
        const auto at_level = [&](int level) {
            return interp_cell(grid.space, x, [&](const std::array<int, kMaxDim>& idx) {
                return value_at(level, grid.space.flatten(idx), c);
            });
        };
        double v = at_level(tb.i0);
        if (tb.w1 > 0.0) v = v * (1.0 - tb.w1) + at_level(tb.i1) * tb.w1;
        out[c] = v;
    }
    return out;
}

Mat2 ZvonkinSolution::eval_grad(double t, const Vec& x) const {
    Mat2 out{};
    if (!grid.space.contains(x)) return out;
    const TimeBlend tb = time_blend(grid, t);
    for (int c = 0; c < dim; ++c)
        for (int a = 0; a < grid.space.dim; ++a) {
            const auto at_level = [&](int level) {
                return interp_cell(grid.space, x, [&](const std::array<int, kMaxDim>& idx) {
                    return node_grad(level, idx, c, a);
                });
            };
            double v = at_level(tb.i0);
            if (tb.w1 > 0.0) v = v * (1.0 - tb.w1) + at_level(tb.i1) * tb.w1;
            out[c][a] = v;
        }
    return out;
}

double ZvonkinSolution::eval_hess_frobenius(double t, const Vec& x) const {
    if (!grid.space.contains(x)) return 0.0;
    const TimeBlend tb = time_blend(grid, t);
    double sum = 0.0;
    for (int c = 0; c < dim; ++c)
        for (int a1 = 0; a1 < grid.space.dim; ++a1)
            for (int a2 = 0; a2 < grid.space.dim; ++a2) {
                const auto at_level = [&](int level) {
                    return interp_cell(grid.space, x, [&](const std::array<int, kMaxDim>& idx) {
                        return node_hess(level, idx, c, a1, a2);
                    });
                };
                double v = at_level(tb.i0);
                if (tb.w1 > 0.0) v = v * (1.0 - tb.w1) + at_level(tb.i1) * tb.w1;
                sum += v * v;
            }
    return std::sqrt(sum);
}

ZvonkinSolution solve_backward_pde(const DriftField& b, double lambda, const PdeGrid& grid,
                                   const DriftField* forcing, double norm_p, double norm_q) {
    grid.space.validate();
    const DriftField& f = forcing ? *forcing : b;
    const bool shared_field = forcing == nullptr;
    const int d = grid.space.dim;
    if (b.dim() != d || f.dim() != d)
        throw ConfigError("solve_backward_pde: field dimension does not match the grid");
    if (grid.nt < 1) throw ConfigError("solve_backward_pde: need at least one time step");
    if (!(grid.horizon > 0.0) || !std::isfinite(grid.horizon))
        throw ConfigError("solve_backward_pde: horizon must be positive and finite");
    if (!(lambda >= 0.0)) throw ConfigError("solve_backward_pde: lambda must be nonnegative");
    if (!(norm_p >= 1.0) || !(norm_q >= 1.0))
        throw ConfigError("solve_backward_pde: norm exponents must be at least 1");
    const double dt = grid.dt();
    if (lambda * dt > 1.0 + 1e-12)
        throw ConfigError("solve_backward_pde: damping is unstable, lambda * dt = " +
                          std::to_string(lambda * dt) + " exceeds 1; refine the time grid");
    if (b.time_dependent() && b.horizon() + 1e-9 < grid.horizon)
        throw ConfigError("solve_backward_pde: drift horizon is shorter than the grid horizon");
    if (!shared_field && f.time_dependent() && f.horizon() + 1e-9 < grid.horizon)
        throw ConfigError("solve_backward_pde: forcing horizon is shorter than the grid horizon");
    const double cfl = dt * sampled_sup_advection_ratio(b, grid.space, grid.horizon);
    if (cfl > 1.0 + 1e-12)
        throw ConfigError("solve_backward_pde: advective step ratio " + std::to_string(cfl) +
                          " exceeds 1; refine the time grid or coarsen space");
    if (grid.bc == PdeBc::dirichlet_zero) {
        check_support_coverage(b, grid, "drift");
        if (!shared_field) check_support_coverage(f, grid, "forcing");
    }

    const std::size_t nn = grid.space.size();
    ZvonkinSolution sol;
    sol.grid = grid;
    sol.dim = d;
    sol.lambda = lambda;
    sol.drift_name = b.name();
    sol.norm_p = norm_p;
    sol.norm_q = norm_q;
    sol.u.assign(static_cast<std::size_t>(grid.nt + 1) * nn * d, 0.0);

    const auto pts = grid.space.nodes();
    const double cdiff = 0.5 * dt;
    const bool use_thomas = d == 1 && grid.bc == PdeBc::dirichlet_zero;
    ThomasSolver thomas;
    if (use_thomas) {
        const double h = grid.space.spacing(0);
        thomas.factor(grid.space.n[0], 1.0 + dt / (h * h), -cdiff / (h * h));
    }
    const auto apply = [&](const std::vector<double>& xv, std::vector<double>& yv) {
        apply_diffusion_operator(grid.space, grid.bc, cdiff, xv, yv);
    };

    std::vector<Vec> bn(nn), fn(nn);
    std::vector<double> rhs(nn), xcomp(nn), r(nn), pvec(nn), ap(nn);
    double worst_res = 0.0;

    for (int i = grid.nt - 1; i >= 0; --i) {
        const double t_next = dt * (i + 1);
        const double* up = sol.u.data() + static_cast<std::size_t>(i + 1) * nn * d;
        double* uc = sol.u.data() + static_cast<std::size_t>(i) * nn * d;
        for (std::size_t j = 0; j < nn; ++j) {
            bn[j] = b.eval(t_next, pts[j]);
            fn[j] = shared_field ? bn[j] : f.eval(t_next, pts[j]);
            for (int a = 0; a < d; ++a)
                if (!std::isfinite(bn[j][a]) || !std::isfinite(fn[j][a]))
                    throw EvaluationError("solve_backward_pde: non-finite field value at t = " +
                                          std::to_string(t_next));
        }
        for (int c = 0; c < d; ++c) {
            for (std::size_t j = 0; j < nn; ++j) {
                const auto idx = grid.space.unflatten(j);
                double adv = 0.0;
                for (int a = 0; a < grid.space.dim; ++a)
                    adv += bn[j][a] * slice_grad(grid.space, grid.bc, d, up, idx, c, a);
                const double u1 = up[j * d + c];
                rhs[j] = u1 + dt * (adv - lambda * u1 + fn[j][c]);
            }
            if (grid.bc == PdeBc::dirichlet_zero)
                for (std::size_t j = 0; j < nn; ++j)
                    if (on_boundary(grid.space, grid.space.unflatten(j))) rhs[j] = 0.0;
            if (use_thomas) {
                xcomp = rhs;
                thomas.solve(xcomp);
            } else {
                conjugate_gradient(apply, rhs, xcomp, r, pvec, ap, 1e-12, 10000);
            }
            apply(xcomp, ap);
            for (std::size_t j = 0; j < nn; ++j)
                worst_res = std::max(worst_res, std::abs(ap[j] - rhs[j]));
            for (std::size_t j = 0; j < nn; ++j) uc[j * d + c] = xcomp[j];
        }
    }
    sol.solver_residual = worst_res;
    accumulate_norms(sol, f);
    return sol;
}

std::vector<SweepRow> gradient_bound_sweep(const DriftField& b, const std::vector<double>& lambdas,
                                           const PdeGrid& grid) {
    std::vector<SweepRow> rows;
    rows.reserve(lambdas.size());
    for (double lambda : lambdas) {
        SweepRow row;
        row.lambda = lambda;
        try {
            const auto sol = solve_backward_pde(b, lambda, grid);
            row.sup_grad = sol.sup_grad;
            row.solved = true;
        } catch (const std::runtime_error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::optional<double> find_lambda_star(const std::vector<SweepRow>& rows, double target) {
    for (const auto& row : rows)
        if (row.solved && row.sup_grad <= target) return row.lambda;
    return std::nullopt;
}

Vec gamma_apply(const ZvonkinSolution& sol, double t, const Vec& x) {
    const Vec u = sol.eval(t, x);
    Vec y = x;
    for (int a = 0; a < sol.dim; ++a) y[a] += u[a];
    return y;
}

Vec gamma_invert(const ZvonkinSolution& sol, double t, const Vec& y) {
    if (!(sol.sup_grad < 1.0))
        throw DomainError("gamma_invert: displacement gradient bound " +
                          std::to_string(sol.sup_grad) +
                          " is not below 1, the map is not certified invertible");
    Vec z = y;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
        const Vec u = sol.eval(t, z);
        Vec zn = y;
        for (int a = 0; a < sol.dim; ++a) zn[a] -= u[a];
        const double delta = dist2(zn, z, sol.dim);
        z = zn;
        if (delta <= 1e-10) {
            converged = true;
            break;
        }
    }
    if (!converged) throw SolverError("gamma_invert: fixed-point iteration did not converge");
    const double roundtrip = dist2(gamma_apply(sol, t, z), y, sol.dim);
    if (roundtrip > 1e-8)
        throw SolverError("gamma_invert: round trip error " + std::to_string(roundtrip) +
                          " exceeds 1e-8");
    return z;
}

ConjugacyResult conjugacy_residual(const DriftField& b, const ZvonkinSolution& sol,
                                   const std::vector<Vec>& starts, const NoiseEnsemble& noise,
                                   double sigma, int threads) {
    if (std::abs(sigma - 1.0) > 1e-12)
        throw DomainError("conjugacy_residual: the transformation assumes unit diffusion, got sigma = " +
                          std::to_string(sigma));
    if (noise.dim != sol.dim || b.dim() != sol.dim)
        throw DomainError("conjugacy_residual: dimension mismatch between drift, solution, and noise");
    if (noise.horizon > sol.grid.horizon + 1e-9)
        throw DomainError("conjugacy_residual: noise horizon exceeds the solution horizon");
    if (b.time_dependent() && noise.horizon > b.horizon() + 1e-9)
        throw DomainError("conjugacy_residual: noise horizon exceeds the drift horizon");
    if (!(sol.sup_grad < 1.0))
        throw DomainError("conjugacy_residual: solution is not certified invertible (sup grad " +
                          std::to_string(sol.sup_grad) + ")");
    ConjugacyResult out;
    if (starts.empty() || noise.paths == 0) return out;

    const int d = sol.dim;
    const double dt = noise.dt;
    Vec xlo{}, xhi{}, ylo{}, yhi{};
    for (int a = 0; a < d; ++a) {
        xlo[a] = sol.grid.space.lo[a];
        xhi[a] = sol.grid.space.hi[a];
        // The inversion iterates stay within sup_u of the target, so the
        // target must keep that margin from the box edge.
        ylo[a] = xlo[a] + sol.sup_u;
        yhi[a] = xhi[a] - sol.sup_u;
    }

    const std::size_t cells = starts.size() * static_cast<std::size_t>(noise.paths);
    std::vector<double> res(cells, 0.0);
    std::vector<std::uint8_t> excl(cells, 0);
    parallel_for(cells, threads, [&](std::size_t cell) {
        const std::size_t g = cell / noise.paths;
        const int m = static_cast<int>(cell % noise.paths);
        Vec x = starts[g];
        Vec y = gamma_apply(sol, 0.0, x);
        double worst = 0.0;
        for (int k = 0; k < noise.steps; ++k) {
            if (!inside_box(x, xlo, xhi, d) || !inside_box(y, ylo, yhi, d)) {
                excl[cell] = 1;
                return;
            }
            const double t = k * dt;
            const Vec z = gamma_invert(sol, t, y);
            const Vec uv = sol.eval(t, z);
            const Mat2 gm = sol.eval_grad(t, z);
            const Vec bv = b.eval(t, x);
            Vec dw{};
            for (int a = 0; a < d; ++a) dw[a] = noise.increment(m, k, a);
            for (int a = 0; a < d; ++a) {
                double gd = 0.0;
                for (int c = 0; c < d; ++c) gd += gm[a][c] * dw[c];
                y[a] += sol.lambda * uv[a] * dt + gd + dw[a];
                x[a] += bv[a] * dt + sigma * dw[a];
            }
            if (!inside_box(x, xlo, xhi, d) || !inside_box(y, ylo, yhi, d)) {
                excl[cell] = 1;
                return;
            }
            const Vec gx = gamma_apply(sol, (k + 1) * dt, x);
            worst = std::max(worst, dist2(y, gx, d));
        }
        res[cell] = worst;
    });
    for (std::size_t cell = 0; cell < cells; ++cell) {
        if (excl[cell]) {
            ++out.excluded;
            continue;
        }
        out.max_residual = std::max(out.max_residual, res[cell]);
    }
    return out;
}

QuadraticVariationEstimate quadratic_variation_estimate(const ZvonkinSolution& sol,
                                                        const FlowEnsemble& flow, double c_pd) {
    if (flow.dim != sol.dim)
        throw DomainError("quadratic_variation_estimate: flow and solution dimensions differ");
    if (flow.steps * flow.dt > sol.grid.horizon + 1e-9)
        throw DomainError("quadratic_variation_estimate: flow horizon exceeds the solution horizon");
    QuadraticVariationEstimate out;
    std::vector<double> values;
    values.reserve(flow.grid.size() * static_cast<std::size_t>(flow.paths));
    for (std::size_t g = 0; g < flow.grid.size(); ++g)
        for (int m = 0; m < flow.paths; ++m) {
            if (flow.cell_escaped(g, m)) {
                ++out.excluded;
                continue;
            }
            bool inside = true;
            for (int k = 0; k <= flow.steps && inside; ++k)
                inside = sol.grid.space.contains(flow.at(g, m, k));
            if (!inside) {
                ++out.excluded;
                continue;
            }
            double acc = 0.0;
            for (int k = 0; k < flow.steps; ++k) {
                const double h = sol.eval_hess_frobenius(k * flow.dt, flow.at(g, m, k));
                acc += h * h * flow.dt;
            }
            values.push_back(c_pd * acc);
        }
    if (values.empty()) return out;
    const MeanSe ms = mean_se(values);
    out.mean = ms.mean;
    out.se = ms.se;
    out.max_value = *std::max_element(values.begin(), values.end());
    return out;
}

void save_zvonkin(const ZvonkinSolution& sol, const std::string& dir, int time_stride) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const int stride = normalize_stride(sol.grid.nt, time_stride);
    const int levels = sol.grid.nt / stride;
    const double dt = sol.grid.dt();
    const std::size_t nn = sol.nodes();

    nlohmann::json meta;
    meta["dim"] = sol.dim;
    meta["lambda"] = sol.lambda;
    meta["drift_name"] = sol.drift_name;
    meta["sup_grad"] = sol.sup_grad;
    meta["sup_u"] = sol.sup_u;
    meta["solver_residual"] = sol.solver_residual;
    meta["mixed_u"] = sol.mixed_u;
    meta["mixed_grad"] = sol.mixed_grad;
    meta["mixed_hess"] = sol.mixed_hess;
    meta["mixed_dt"] = sol.mixed_dt;
    meta["schauder_ratio"] = sol.schauder_ratio;
    meta["norm_p"] = sol.norm_p;
    meta["norm_q"] = sol.norm_q;
    meta["time_stride"] = stride;
    meta["source_nt"] = sol.grid.nt;
    auto& g = meta["grid"];
    g["dim"] = sol.grid.space.dim;
    g["horizon"] = sol.grid.horizon;
    g["nt"] = levels;
    g["bc"] = bc_name(sol.grid.bc);
    g["buffer_min"] = sol.grid.buffer_min;
    for (int a = 0; a < sol.grid.space.dim; ++a) {
        g["lo"].push_back(sol.grid.space.lo[a]);
        g["hi"].push_back(sol.grid.space.hi[a]);
        g["n"].push_back(sol.grid.space.n[a]);
    }
    std::ofstream((fs::path(dir) / "solution.json").string()) << meta.dump(2) << '\n';

    const auto upath = (fs::path(dir) / "u.csv").string();
    std::FILE* fu = std::fopen(upath.c_str(), "wb");
    if (!fu) throw ConfigError("save_zvonkin: cannot open " + upath);
    std::fputs("level,t,node,comp,value\n", fu);
    for (int li = 0; li <= levels; ++li) {
        const int i = li * stride;
        for (std::size_t j = 0; j < nn; ++j)
            for (int c = 0; c < sol.dim; ++c)
                std::fprintf(fu, "%d,%.17g,%zu,%d,%.17g\n", li, i * dt, j, c,
                             sol.value_at(i, j, c));
    }
    std::fclose(fu);

    const auto gpath = (fs::path(dir) / "u_grad.csv").string();
    std::FILE* fg = std::fopen(gpath.c_str(), "wb");
    if (!fg) throw ConfigError("save_zvonkin: cannot open " + gpath);
    std::fputs("level,t,node,comp,axis,value\n", fg);
    for (int li = 0; li <= levels; ++li) {
        const int i = li * stride;
        for (std::size_t j = 0; j < nn; ++j) {
            const auto idx = sol.grid.space.unflatten(j);
            for (int c = 0; c < sol.dim; ++c)
                for (int a = 0; a < sol.grid.space.dim; ++a)
                    std::fprintf(fg, "%d,%.17g,%zu,%d,%d,%.17g\n", li, i * dt, j, c, a,
                                 sol.node_grad(i, idx, c, a));
        }
    }
    std::fclose(fg);
}

ZvonkinSolution load_zvonkin(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto jpath = (fs::path(dir) / "solution.json").string();
    std::ifstream jf(jpath);
    if (!jf) throw ConfigError("load_zvonkin: cannot open " + jpath);
    nlohmann::json meta;
    jf >> meta;

    ZvonkinSolution sol;
    sol.dim = meta.at("dim").get<int>();
    sol.lambda = meta.at("lambda").get<double>();
    sol.drift_name = meta.at("drift_name").get<std::string>();
    sol.sup_grad = meta.at("sup_grad").get<double>();
    sol.sup_u = meta.at("sup_u").get<double>();
    sol.solver_residual = meta.at("solver_residual").get<double>();
    sol.mixed_u = meta.at("mixed_u").get<double>();
    sol.mixed_grad = meta.at("mixed_grad").get<double>();
    sol.mixed_hess = meta.at("mixed_hess").get<double>();
    sol.mixed_dt = meta.at("mixed_dt").get<double>();
    sol.schauder_ratio = meta.at("schauder_ratio").get<double>();
    sol.norm_p = meta.at("norm_p").get<double>();
    sol.norm_q = meta.at("norm_q").get<double>();
    const auto& g = meta.at("grid");
    const int sdim = g.at("dim").get<int>();
    if (sdim == 1)
        sol.grid.space = GridSpec::line(g.at("lo")[0], g.at("hi")[0], g.at("n")[0]);
    else
        sol.grid.space = GridSpec::box2(g.at("lo")[0], g.at("hi")[0], g.at("n")[0], g.at("lo")[1],
                                        g.at("hi")[1], g.at("n")[1]);
    sol.grid.horizon = g.at("horizon").get<double>();
    sol.grid.nt = g.at("nt").get<int>();
    sol.grid.bc = bc_from_name(g.at("bc").get<std::string>());
    sol.grid.buffer_min = g.at("buffer_min").get<double>();

    const std::size_t nn = sol.nodes();
    const std::size_t expected = static_cast<std::size_t>(sol.grid.nt + 1) * nn * sol.dim;
    sol.u.assign(expected, 0.0);

    const auto upath = (fs::path(dir) / "u.csv").string();
    std::ifstream uf(upath);
    if (!uf) throw ConfigError("load_zvonkin: cannot open " + upath);
    std::string line;
    std::getline(uf, line);  // header
    std::size_t rows = 0;
    while (std::getline(uf, line)) {
        if (line.empty()) continue;
        int lev = 0, comp = 0;
        unsigned long node = 0;
        double t = 0.0, val = 0.0;
        if (std::sscanf(line.c_str(), "%d,%lf,%lu,%d,%lf", &lev, &t, &node, &comp, &val) != 5)
            throw ContractError("load_zvonkin: malformed row '" + line + "'");
        if (lev < 0 || lev > sol.grid.nt || node >= nn || comp < 0 || comp >= sol.dim)
            throw ContractError("load_zvonkin: row indices out of range in '" + line + "'");
        sol.u[(static_cast<std::size_t>(lev) * nn + node) * sol.dim + comp] = val;
        ++rows;
    }
    if (rows != expected)
        throw ContractError("load_zvonkin: expected " + std::to_string(expected) +
                            " samples, found " + std::to_string(rows));
    return sol;
}

}  // namespace stochflow
