#include "stochflow/drift.hpp"

#include <cmath>

namespace stochflow {

KrylovRocknerResult krylov_rockner_check(double p, double q, int d) {
    if (d < 1) throw DomainError("krylov_rockner_check: dimension must be positive");
    if (!(p >= 2.0)) throw DomainError("krylov_rockner_check: requires p >= 2");
    if (!(q >= 2.0)) throw DomainError("krylov_rockner_check: requires q >= 2");
    KrylovRocknerResult r;
    r.slack = 1.0 - static_cast<double>(d) / p - 2.0 / q;
    r.admissible = r.slack > 0.0;
    return r;
}

Vec DriftField::eval(double t, const Vec& x) const {
    if (std::isfinite(trunc_radius_)) {
        double r2 = 0.0;
        for (int a = 0; a < dim_; ++a) r2 += x[a] * x[a];
        if (r2 > trunc_radius_ * trunc_radius_) return Vec{};
    }
    Vec out{};
    switch (kind_) {
        case Kind::zero:
            break;
        case Kind::constant:
            out = const_c_;
            break;
        case Kind::linear:
            for (int i = 0; i < dim_; ++i)
                for (int j = 0; j < dim_; ++j) out[i] += linear_a_[i][j] * x[j];
            break;
        case Kind::coalescing:
            for (int a = 0; a < dim_; ++a) {
                const double s = x[a] > 0.0 ? 1.0 : (x[a] < 0.0 ? -1.0 : 0.0);
                out[a] = -s * std::sqrt(std::abs(x[a]));
            }
            break;
        case Kind::tabulated: {
            if (!table_->grid.contains(x)) return Vec{};
            // Components are stored interleaved; interpolate each separately.
            for (int a = 0; a < dim_; ++a) {
                // Strided view realised by gathering the component corners.
                const GridSpec& g = table_->grid;
                std::array<int, kMaxDim> base{};
                std::array<double, kMaxDim> frac{};
                for (int ax = 0; ax < g.dim; ++ax) {
                    const double h = g.spacing(ax);
                    double u = (x[ax] - g.lo[ax]) / h;
                    if (u < 0.0) u = 0.0;
                    if (u > g.n[ax] - 1.0) u = g.n[ax] - 1.0;
                    int i = static_cast<int>(u);
                    if (i > g.n[ax] - 2) i = g.n[ax] - 2;
                    base[ax] = i;
                    frac[ax] = u - i;
                }
                const auto sample = [&](int di, int dj) {
                    const std::size_t node = g.flatten({base[0] + di, g.dim > 1 ? base[1] + dj : 0});
                    return table_->samples[node * dim_ + a];
                };
                if (g.dim == 1) {
                    out[a] = sample(0, 0) * (1.0 - frac[0]) + sample(1, 0) * frac[0];
                } else {
                    const double v0 = sample(0, 0) * (1.0 - frac[0]) + sample(1, 0) * frac[0];
                    const double v1 = sample(0, 1) * (1.0 - frac[0]) + sample(1, 1) * frac[0];
                    out[a] = v0 * (1.0 - frac[1]) + v1 * frac[1];
                }
            }
            break;
        }
        case Kind::custom:
            out = fn_(t, x);
            break;
    }
    return out;
}

DriftField DriftField::zero(int dim, double domain_halfwidth, double horizon) {
    DriftField b;
    b.kind_ = Kind::zero;
    b.dim_ = dim;
    b.domain_halfwidth_ = domain_halfwidth;
    b.horizon_ = horizon;
    b.trunc_radius_ = domain_halfwidth;
    b.name_ = "zero";
    return b;
}

DriftField DriftField::constant(int dim, double domain_halfwidth, double horizon, const Vec& c,
                                double trunc_radius) {
    DriftField b;
    b.kind_ = Kind::constant;
    b.dim_ = dim;
    b.domain_halfwidth_ = domain_halfwidth;
    b.horizon_ = horizon;
    b.trunc_radius_ = trunc_radius;
    b.const_c_ = c;
    b.name_ = "constant";
    return b;
}

DriftField DriftField::linear(int dim, double domain_halfwidth, double horizon, const Mat2& a,
                              double trunc_radius) {
    DriftField b;
    b.kind_ = Kind::linear;
    b.dim_ = dim;
    b.domain_halfwidth_ = domain_halfwidth;
    b.horizon_ = horizon;
    b.trunc_radius_ = trunc_radius;
    b.linear_a_ = a;
    b.name_ = "linear";
    return b;
}

DriftField DriftField::coalescing(int dim, double domain_halfwidth, double horizon,
                                  double trunc_radius) {
    DriftField b;
    b.kind_ = Kind::coalescing;
    b.dim_ = dim;
    b.domain_halfwidth_ = domain_halfwidth;
    b.horizon_ = horizon;
    b.trunc_radius_ = trunc_radius;
    b.smooth_ = false;  // kink on the coordinate hyperplanes, jump at the truncation edge
    b.name_ = "coalescing";
    return b;
}

DriftField DriftField::tabulated(int dim, double domain_halfwidth, double horizon,
                                 double trunc_radius, GridSpec table_grid,
                                 std::vector<double> samples, bool smooth, std::string name) {
    table_grid.validate();
    if (table_grid.dim != dim) throw ConfigError("tabulated drift: grid dimension mismatch");
    if (samples.size() != table_grid.size() * static_cast<std::size_t>(dim))
        throw ConfigError("tabulated drift: sample count does not match grid");
    DriftField b;
    b.kind_ = Kind::tabulated;
    b.dim_ = dim;
    b.domain_halfwidth_ = domain_halfwidth;
    b.horizon_ = horizon;
    b.trunc_radius_ = trunc_radius;
    b.smooth_ = smooth;
    b.name_ = std::move(name);
    auto t = std::make_shared<Table>();
    t->grid = table_grid;
    t->samples = std::move(samples);
    b.table_ = std::move(t);
    return b;
}

DriftField DriftField::custom(int dim, double domain_halfwidth, double horizon, double trunc_radius,
                              std::function<Vec(double, const Vec&)> f, bool time_dependent,
                              bool smooth, std::string name) {
    DriftField b;
    b.kind_ = Kind::custom;
    b.dim_ = dim;
    b.domain_halfwidth_ = domain_halfwidth;
    b.horizon_ = horizon;
    b.trunc_radius_ = trunc_radius;
    b.fn_ = std::move(f);
    b.time_dependent_ = time_dependent;
    b.smooth_ = smooth;
    b.name_ = std::move(name);
    return b;
}

DriftField DriftField::difference(const DriftField& a, const DriftField& b) {
    if (a.dim() != b.dim()) throw ContractError("drift difference: dimension mismatch");
    const double radius = std::max(a.trunc_radius(), b.trunc_radius());
    return custom(
        a.dim(), a.domain_halfwidth(), std::min(a.horizon(), b.horizon()), radius,
        [a, b](double t, const Vec& x) {
            const Vec va = a.eval(t, x);
            const Vec vb = b.eval(t, x);
            Vec out{};
            for (int i = 0; i < a.dim(); ++i) out[i] = va[i] - vb[i];
            return out;
        },
        a.time_dependent() || b.time_dependent(), a.smooth() && b.smooth(),
        a.name() + "-minus-" + b.name());
}

double DriftField::table_spacing() const {
    if (kind_ != Kind::tabulated) throw DomainError("table_spacing: drift is not tabulated");
    double h = table_->grid.spacing(0);
    for (int a = 1; a < table_->grid.dim; ++a) h = std::max(h, table_->grid.spacing(a));
    return h;
}

namespace {

double mixed_norm_at(const DriftField& b, const MixedNormSpec& spec, int nx, int nt) {
    const double r = b.trunc_radius();
    const int d = b.dim();
    const double hx = 2.0 * r / nx;
    const double dt = spec.horizon / nt;
    const double cell = d == 1 ? hx : hx * hx;

    double time_sum = 0.0;
    const int ny = d == 1 ? 1 : nx;
    for (int k = 0; k < nt; ++k) {
        const double t = (k + 0.5) * dt;
        double space_sum = 0.0;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                Vec x{-r + (i + 0.5) * hx, d == 1 ? 0.0 : -r + (j + 0.5) * hx};
                const Vec v = b.eval(t, x);
                const double mag = norm2(v, d);
                if (!std::isfinite(mag)) throw EvaluationError("mixed_norm: non-finite drift value");
                space_sum += std::pow(mag, spec.p);
            }
        const double lp = std::pow(space_sum * cell, 1.0 / spec.p);
        time_sum += std::pow(lp, spec.q) * dt;
    }
    return std::pow(time_sum, 1.0 / spec.q);
}

}  // namespace

MixedNormResult mixed_norm(const DriftField& b, const MixedNormSpec& spec,
                           const QuadratureSpec& quad) {
    if (!(spec.p >= 1.0) || !(spec.q >= 1.0)) throw DomainError("mixed_norm: exponents must be >= 1");
    if (!std::isfinite(b.trunc_radius())) throw DomainError("mixed_norm: drift support is not truncated");
    if (!(spec.horizon > 0.0)) throw DomainError("mixed_norm: horizon must be positive");
    if (spec.horizon > b.horizon() * (1.0 + 1e-12))
        throw DomainError("mixed_norm: horizon exceeds drift horizon");
    if (quad.space_cells < 4 || quad.time_cells < 2) throw ConfigError("mixed_norm: resolution too low");

    MixedNormResult out;
    out.value = mixed_norm_at(b, spec, quad.space_cells, quad.time_cells);
    const double coarse =
        mixed_norm_at(b, spec, std::max(2, quad.space_cells / 2), std::max(1, quad.time_cells / 2));
    out.refinement_error = std::abs(out.value - coarse);
    return out;
}

DriftField mollify_drift(const DriftField& b, const MollifierFamily& family, int n,
                         const MollifyOptions& opts) {
    if (n < 1) throw DomainError("mollify_drift: scale index must be >= 1");
    if (b.time_dependent()) throw DomainError("mollify_drift: field must be time-independent");
    if (!std::isfinite(b.trunc_radius())) throw DomainError("mollify_drift: drift support is not truncated");
    const double radius = 1.0 / n;
    double spacing = opts.table_spacing > 0.0 ? opts.table_spacing : radius / 8.0;
    if (spacing > radius)
        throw ConfigError("mollify_drift: mollifier radius smaller than the output table spacing");
    if (b.kind() == DriftField::Kind::tabulated && radius < b.table_spacing())
        throw ConfigError("mollify_drift: mollifier radius below the input table resolution");

    const int d = b.dim();
    const int cells = opts.stencil_cells > 0 ? opts.stencil_cells : (d == 1 ? 64 : 32);
    if (cells % 2 != 0) throw ConfigError("mollify_drift: stencil cell count must be even");

    // Midpoint stencil over the support cube, then restricted to the ball and
    // renormalised so the discrete mass is exactly one. The symmetric node
    // placement preserves odd symmetry of the input.
    const double hq = 2.0 * radius / cells;
    struct Node {
        Vec y;
        double w;
    };
    std::vector<Node> stencil;
    double mass = 0.0;
    const int ny = d == 1 ? 1 : cells;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < cells; ++i) {
            Vec y{-radius + (i + 0.5) * hq, d == 1 ? 0.0 : -radius + (j + 0.5) * hq};
            const double s = dot(y, y, d) / (radius * radius);
            const double w = family.profile(s);
            if (w <= 0.0) continue;
            stencil.push_back({y, w});
            mass += w;
        }
    for (auto& nd : stencil) nd.w /= mass;

    const double out_radius = b.trunc_radius() + radius;
    const int half_nodes = static_cast<int>(std::ceil(out_radius / spacing));
    const int nodes = 2 * half_nodes + 1;
    const double extent = half_nodes * spacing;
    GridSpec g = d == 1 ? GridSpec::line(-extent, extent, nodes)
                        : GridSpec::box2(-extent, extent, nodes, -extent, extent, nodes);

    std::vector<double> samples(g.size() * static_cast<std::size_t>(d));
    for (std::size_t f = 0; f < g.size(); ++f) {
        const Vec x = g.node(f);
        Vec acc{};
        for (const auto& nd : stencil) {
            Vec xy{};
            for (int a = 0; a < d; ++a) xy[a] = x[a] - nd.y[a];
            const Vec v = b.eval(0.0, xy);
            for (int a = 0; a < d; ++a) acc[a] += nd.w * v[a];
        }
        for (int a = 0; a < d; ++a) {
            if (!std::isfinite(acc[a])) throw EvaluationError("mollify_drift: non-finite convolution value");
            samples[f * d + a] = acc[a];
        }
    }
    return DriftField::tabulated(d, b.domain_halfwidth(), b.horizon(), out_radius, g,
                                 std::move(samples), true,
                                 b.name() + "-mollified-n" + std::to_string(n));
}

}  // namespace stochflow
