#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "stochflow/common.hpp"

namespace stochflow {

/// Uniform node-centred grid on an axis-aligned box, dimension 1 or 2.
/// Flat indices run x-fastest: flat = i0 + n[0] * i1.
struct GridSpec {
    int dim = 1;
    std::array<double, kMaxDim> lo{};
    std::array<double, kMaxDim> hi{};
    std::array<int, kMaxDim> n{};  // nodes per axis, >= 2

    static GridSpec line(double a, double b, int nodes);
    static GridSpec box2(double ax, double bx, int nx, double ay, double by, int ny);
    /// Symmetric box [-h, h]^dim with the same node count per axis.
    static GridSpec symmetric(int dim, double halfwidth, int nodes);

    void validate() const;

    double spacing(int axis) const { return (hi[axis] - lo[axis]) / (n[axis] - 1); }
    std::size_t size() const;
    /// Volume weight of the midpoint quadrature cell attached to each node.
    double cell_volume() const;

    std::array<int, kMaxDim> unflatten(std::size_t flat) const;
    std::size_t flatten(const std::array<int, kMaxDim>& idx) const;
    Vec node(std::size_t flat) const;
    Vec node(const std::array<int, kMaxDim>& idx) const;

    bool contains(const Vec& x) const;
    bool same_as(const GridSpec& other, double tol = 1e-12) const;
    std::vector<Vec> nodes() const;
};

/// Axis-aligned coordinate box used to restrict diagnostics to a subregion.
struct Region {
    Vec lo{};
    Vec hi{};
    static Region all();  // unbounded
    bool contains(const Vec& x, int dim) const;
};

/// Scalar samples on a grid, with an optional validity mask and an optional
/// closed form for resampling at other resolutions.
struct ScalarFieldGrid {
    GridSpec grid;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;  // empty: all valid; nonzero entries are invalid
    std::string tag;
    std::function<double(const Vec&)> closed_form;  // may be empty

    bool valid(std::size_t flat) const { return mask.empty() || mask[flat] == 0; }
    void require_shape() const;

    static ScalarFieldGrid sample(const GridSpec& g, const std::function<double(const Vec&)>& f,
                                  std::string tag = {});
};

/// Multilinear interpolation of node samples at x. Clamps to the box.
double interpolate(const GridSpec& g, const std::vector<double>& values, const Vec& x);

}  // namespace stochflow
