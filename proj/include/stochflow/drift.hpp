#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "stochflow/common.hpp"
#include "stochflow/grid.hpp"

namespace stochflow {

/// Admissibility check for the integrability exponents (p, q) of a drift in
/// L^q([0,T]; L^p): requires p, q >= 2 and d/p + 2/q < 1 (Krylov-Rockner).
struct KrylovRocknerResult {
    bool admissible = false;
    double slack = 0.0;  // 1 - d/p - 2/q
};
KrylovRocknerResult krylov_rockner_check(double p, double q, int d);

/// Exponents and horizon for the mixed space-time norm
/// ( integral_0^T ||b(t, .)||_{L^p}^q dt )^{1/q}.
struct MixedNormSpec {
    double p = 4.0;
    double q = 4.0;
    double horizon = 1.0;
};

struct QuadratureSpec {
    int space_cells = 256;  // midpoint cells per spatial axis
    int time_cells = 64;    // midpoint cells in time
};

struct MixedNormResult {
    double value = 0.0;
    /// |value - value at half resolution|; shrinks at least first order for
    /// piecewise-smooth fields.
    double refinement_error = 0.0;
};

/// 2x2 matrix for linear drifts; only the leading dim x dim block is used.
using Mat2 = std::array<std::array<double, kMaxDim>, kMaxDim>;

/// Time-dependent vector field b(t, x) with bounded support.
/// Evaluation returns zero outside the truncation radius (Euclidean); a
/// non-finite truncation radius means the field is not truncated and is then
/// rejected by the operations that need finite support.
class DriftField {
public:
    enum class Kind { zero, constant, linear, coalescing, tabulated, custom };

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    double domain_halfwidth() const { return domain_halfwidth_; }
    double horizon() const { return horizon_; }
    double trunc_radius() const { return trunc_radius_; }
    bool time_dependent() const { return time_dependent_; }
    bool smooth() const { return smooth_; }
    const std::string& name() const { return name_; }

    Vec eval(double t, const Vec& x) const;

    static DriftField zero(int dim, double domain_halfwidth, double horizon);
    static DriftField constant(int dim, double domain_halfwidth, double horizon, const Vec& c,
                               double trunc_radius = std::numeric_limits<double>::infinity());
    static DriftField linear(int dim, double domain_halfwidth, double horizon, const Mat2& a,
                             double trunc_radius = std::numeric_limits<double>::infinity());
    /// Componentwise -sign(x_i) sqrt(|x_i|): characteristics from opposite
    /// sides of a hyperplane {x_i = 0} meet on it in finite time.
    static DriftField coalescing(int dim, double domain_halfwidth, double horizon,
                                 double trunc_radius = 1.0);
    /// Node samples (interleaved components) with multilinear interpolation.
    static DriftField tabulated(int dim, double domain_halfwidth, double horizon, double trunc_radius,
                                GridSpec table_grid, std::vector<double> samples, bool smooth,
                                std::string name);
    static DriftField custom(int dim, double domain_halfwidth, double horizon, double trunc_radius,
                             std::function<Vec(double, const Vec&)> f, bool time_dependent,
                             bool smooth, std::string name);
    /// Pointwise a - b, for convergence studies. Metadata from a.
    static DriftField difference(const DriftField& a, const DriftField& b);

    /// Grid spacing of the sample table; only valid for tabulated fields.
    double table_spacing() const;

private:
    DriftField() = default;

    Kind kind_ = Kind::zero;
    int dim_ = 1;
    double domain_halfwidth_ = 1.0;
    double horizon_ = 1.0;
    double trunc_radius_ = std::numeric_limits<double>::infinity();
    bool time_dependent_ = false;
    bool smooth_ = true;
    std::string name_ = "zero";

    Vec const_c_{};
    Mat2 linear_a_{};
    struct Table {
        GridSpec grid;
        std::vector<double> samples;  // [node * dim + comp]
    };
    std::shared_ptr<const Table> table_;
    std::function<Vec(double, const Vec&)> fn_;
};

/// Midpoint quadrature of the mixed norm over the truncation box and [0, T].
/// Requires exponents admissible per krylov_rockner_check is NOT enforced
/// here; p >= 1, q >= 1, finite truncation radius, and spec.horizon <= b
/// horizon are.
MixedNormResult mixed_norm(const DriftField& b, const MixedNormSpec& spec,
                           const QuadratureSpec& quad = {});

/// Smooth compactly supported bump profile (1 - |x|^2 / r^2)^power, r = 1/n.
/// The discrete mass is normalised on the convolution stencil, so the family
/// integrates to one on that stencil exactly.
struct MollifierFamily {
    int power = 3;
    double profile(double s) const {  // s = |y|^2 / r^2
        if (s >= 1.0) return 0.0;
        double v = 1.0 - s;
        double out = 1.0;
        for (int i = 0; i < power; ++i) out *= v;
        return out;
    }
};

struct MollifyOptions {
    double table_spacing = 0.0;  // 0: choose radius/8 automatically
    int stencil_cells = 0;       // midpoint cells per axis across the support; 0: 64 (1-d) or 32 (2-d)
};

/// Convolution of b with the scale-n member of the family, tabulated on a grid
/// covering the support of the result (original support widened by 1/n).
/// Time-dependent inputs are rejected: mollification acts in space only.
DriftField mollify_drift(const DriftField& b, const MollifierFamily& family, int n,
                         const MollifyOptions& opts = {});

}  // namespace stochflow
