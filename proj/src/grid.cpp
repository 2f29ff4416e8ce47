#include "stochflow/grid.hpp"

#include <cmath>
#include <limits>

namespace stochflow {

GridSpec GridSpec::line(double a, double b, int nodes) {
    GridSpec g;
    g.dim = 1;
    g.lo[0] = a;
    g.hi[0] = b;
    g.n[0] = nodes;
    g.validate();
    return g;
}

GridSpec GridSpec::box2(double ax, double bx, int nx, double ay, double by, int ny) {
    GridSpec g;
    g.dim = 2;
    g.lo = {ax, ay};
    g.hi = {bx, by};
    g.n = {nx, ny};
    g.validate();
    return g;
}

GridSpec GridSpec::symmetric(int dim, double halfwidth, int nodes) {
    if (dim == 1) return line(-halfwidth, halfwidth, nodes);
    return box2(-halfwidth, halfwidth, nodes, -halfwidth, halfwidth, nodes);
}

void GridSpec::validate() const {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("GridSpec: dim must be 1 or 2");
    for (int a = 0; a < dim; ++a) {
        if (n[a] < 2) throw ConfigError("GridSpec: need at least 2 nodes per axis");
        if (!(hi[a] > lo[a])) throw ConfigError("GridSpec: empty axis extent");
        if (!std::isfinite(lo[a]) || !std::isfinite(hi[a])) throw ConfigError("GridSpec: non-finite extent");
    }
}

std::size_t GridSpec::size() const {
    std::size_t s = 1;
    for (int a = 0; a < dim; ++a) s *= static_cast<std::size_t>(n[a]);
    return s;
}

double GridSpec::cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim; ++a) v *= spacing(a);
    return v;
}

std::array<int, kMaxDim> GridSpec::unflatten(std::size_t flat) const {
    std::array<int, kMaxDim> idx{};
    idx[0] = static_cast<int>(flat % static_cast<std::size_t>(n[0]));
    if (dim > 1) idx[1] = static_cast<int>(flat / static_cast<std::size_t>(n[0]));
    return idx;
}

std::size_t GridSpec::flatten(const std::array<int, kMaxDim>& idx) const {
    std::size_t f = static_cast<std::size_t>(idx[0]);
    if (dim > 1) f += static_cast<std::size_t>(idx[1]) * static_cast<std::size_t>(n[0]);
    return f;
}

Vec GridSpec::node(std::size_t flat) const { return node(unflatten(flat)); }

Vec GridSpec::node(const std::array<int, kMaxDim>& idx) const {
    Vec x{};
    for (int a = 0; a < dim; ++a) x[a] = lo[a] + spacing(a) * idx[a];
    return x;
}

bool GridSpec::contains(const Vec& x) const {
    for (int a = 0; a < dim; ++a)
        if (x[a] < lo[a] || x[a] > hi[a]) return false;
    return true;
}

bool GridSpec::same_as(const GridSpec& other, double tol) const {
    if (dim != other.dim) return false;
    for (int a = 0; a < dim; ++a) {
        if (n[a] != other.n[a]) return false;
        if (std::abs(lo[a] - other.lo[a]) > tol || std::abs(hi[a] - other.hi[a]) > tol) return false;
    }
    return true;
}

std::vector<Vec> GridSpec::nodes() const {
    std::vector<Vec> pts(size());
    for (std::size_t f = 0; f < pts.size(); ++f) pts[f] = node(f);
    return pts;
}

Region Region::all() {
    Region r;
    const double inf = std::numeric_limits<double>::infinity();
    r.lo = {-inf, -inf};
    r.hi = {inf, inf};
    return r;
}

bool Region::contains(const Vec& x, int dim) const {
    for (int a = 0; a < dim; ++a)
        if (x[a] < lo[a] || x[a] > hi[a]) return false;
    return true;
}

void ScalarFieldGrid::require_shape() const {
    grid.validate();
    if (values.size() != grid.size()) throw ContractError("ScalarFieldGrid: values do not match grid size");
    if (!mask.empty() && mask.size() != grid.size())
        throw ContractError("ScalarFieldGrid: mask does not match grid size");
}

ScalarFieldGrid ScalarFieldGrid::sample(const GridSpec& g, const std::function<double(const Vec&)>& f,
                                        std::string tag) {
    ScalarFieldGrid out;
    out.grid = g;
    out.tag = std::move(tag);
    out.values.resize(g.size());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = f(g.node(i));
    out.closed_form = f;
    return out;
}

double interpolate(const GridSpec& g, const std::vector<double>& values, const Vec& x) {
    std::array<int, kMaxDim> base{};
    std::array<double, kMaxDim> frac{};
    for (int a = 0; a < g.dim; ++a) {
        const double h = g.spacing(a);
        double u = (x[a] - g.lo[a]) / h;
        if (u < 0.0) u = 0.0;
        if (u > g.n[a] - 1.0) u = g.n[a] - 1.0;
        int i = static_cast<int>(u);
        if (i > g.n[a] - 2) i = g.n[a] - 2;
        base[a] = i;
        frac[a] = u - i;
    }
    if (g.dim == 1) {
        const double v0 = values[static_cast<std::size_t>(base[0])];
        const double v1 = values[static_cast<std::size_t>(base[0] + 1)];
        return v0 * (1.0 - frac[0]) + v1 * frac[0];
    }
    const auto at = [&](int i, int j) {
        return values[g.flatten({base[0] + i, base[1] + j})];
    };
    const double v0 = at(0, 0) * (1.0 - frac[0]) + at(1, 0) * frac[0];
    const double v1 = at(0, 1) * (1.0 - frac[0]) + at(1, 1) * frac[0];
    return v0 * (1.0 - frac[1]) + v1 * frac[1];
}

}  // namespace stochflow
