#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "stochflow/drift.hpp"

using namespace stochflow;

namespace {

// Adaptive Simpson quadrature, used as an independent oracle for the
// space-time norm values below.
double simpson(const std::function<double(double)>& f, double a, double b) {
    const double c = 0.5 * (a + b);
    return (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b));
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int depth = 24) {
    const double c = 0.5 * (a + b);
    const double whole = simpson(f, a, b);
    const double halves = simpson(f, a, c) + simpson(f, c, b);
    if (depth <= 0 || std::abs(whole - halves) < 15.0 * tol) return halves + (halves - whole) / 15.0;
    return adaptive_simpson(f, a, c, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, c, b, 0.5 * tol, depth - 1);
}

}  // namespace

TEST_CASE("integrability exponent check: worked values") {
    auto r = krylov_rockner_check(4, 4, 1);
    CHECK(r.admissible);
    CHECK(r.slack == doctest::Approx(0.25).epsilon(1e-14));

    r = krylov_rockner_check(2, 2, 1);
    CHECK_FALSE(r.admissible);
    CHECK(r.slack == doctest::Approx(-0.5).epsilon(1e-14));

    r = krylov_rockner_check(4, 4, 3);
    CHECK_FALSE(r.admissible);
    CHECK(r.slack == doctest::Approx(-0.25).epsilon(1e-14));
}

TEST_CASE("integrability exponent check rejects exponents below two") {
    CHECK_THROWS_WITH_AS((void)krylov_rockner_check(1.5, 4, 1),
                         doctest::Contains("p >= 2"), DomainError);
    CHECK_THROWS_WITH_AS((void)krylov_rockner_check(4, 1.0, 1),
                         doctest::Contains("q >= 2"), DomainError);
}

TEST_CASE("mixed norm of the zero field vanishes") {
    const auto b = DriftField::zero(1, 2.0, 1.0);
    const auto r = mixed_norm(b, {4.0, 4.0, 1.0});
    CHECK(r.value == 0.0);
    CHECK(r.refinement_error == 0.0);
}

TEST_CASE("mixed norm of a unit-mass space-time indicator is one for all exponents") {
    // |b| = 1 on [0,1] x [0,1]^d, zero elsewhere; every L^p and L^q layer
    // evaluates to one, so the quadrature must reproduce 1 exactly once the
    // cell boundaries align with the indicator edges.
    for (int d : {1, 2}) {
        const auto b = DriftField::custom(
            d, 2.0, 2.0, 2.0,
            [d](double t, const Vec& x) {
                Vec v{};
                bool inside = t <= 1.0;
                for (int a = 0; a < d; ++a) inside = inside && x[a] >= 0.0 && x[a] <= 1.0;
                if (inside) v[0] = 1.0;
                return v;
            },
            true, false, "indicator");
        QuadratureSpec quad;
        quad.space_cells = 64;  // h = 4/64: edges 0 and 1 are cell boundaries
        quad.time_cells = 64;
        for (double p : {2.0, 3.0, 4.0})
            for (double q : {2.0, 2.5, 4.0}) {
                const auto r = mixed_norm(b, {p, q, 2.0}, quad);
                CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));
            }
    }
}

TEST_CASE("mixed norm of the truncated coalescing field matches quadrature oracles") {
    const auto b = DriftField::coalescing(1, 2.0, 1.0, 1.0);
    QuadratureSpec quad;
    quad.space_cells = 512;
    quad.time_cells = 32;
    const auto r = mixed_norm(b, {4.0, 2.0, 1.0}, quad);

    const double closed_form = std::pow(2.0 / 3.0, 0.25);  // (int_{-1}^{1} |x|^2 dx)^{1/4}
    CHECK(closed_form == doctest::Approx(0.90360).epsilon(1e-4));
    CHECK(r.value == doctest::Approx(closed_form).epsilon(5e-4));

    const double oracle_space =
        adaptive_simpson([](double x) { return x * x; }, -1.0, 1.0, 1e-12);
    CHECK(r.value == doctest::Approx(std::pow(oracle_space, 0.25)).epsilon(5e-4));
    CHECK(r.refinement_error < 5e-3);
}

TEST_CASE("mixed norm refinement error halves when resolution doubles") {
    const auto b = DriftField::coalescing(1, 2.0, 1.0, 1.0);
    QuadratureSpec base{128, 16}, fine{256, 32};
    const double e_base = mixed_norm(b, {4.0, 2.0, 1.0}, base).refinement_error;
    const double e_fine = mixed_norm(b, {4.0, 2.0, 1.0}, fine).refinement_error;
    CHECK(e_fine <= 0.6 * e_base);
}

TEST_CASE("mixed norm requires truncation and sane exponents") {
    const auto open = DriftField::constant(1, 2.0, 1.0, vec1(1.0));
    CHECK_THROWS_AS((void)mixed_norm(open, {4.0, 4.0, 1.0}), DomainError);

    const auto b = DriftField::coalescing(1, 2.0, 1.0, 1.0);
    CHECK_THROWS_AS((void)mixed_norm(b, {0.5, 4.0, 1.0}), DomainError);
    CHECK_THROWS_AS((void)mixed_norm(b, {4.0, 4.0, 2.0}), DomainError);  // horizon beyond the field's

    const auto nan_field = DriftField::custom(
        1, 2.0, 1.0, 1.0,
        [](double, const Vec& x) { return vec1(x[0] == 0.0 ? 0.0 : 0.0 / 0.0); }, false, false, "nan");
    CHECK_THROWS_AS((void)mixed_norm(nan_field, {4.0, 4.0, 1.0}), EvaluationError);
}

TEST_CASE("drift evaluation is truncated and pure") {
    const auto b = DriftField::coalescing(1, 2.0, 1.0, 1.0);
    CHECK(b.eval(0.0, vec1(1.5))[0] == 0.0);
    const double v = b.eval(0.0, vec1(0.25))[0];
    CHECK(v == doctest::Approx(-0.5).epsilon(1e-14));
    CHECK(b.eval(0.3, vec1(0.25))[0] == v);

    const auto lin = DriftField::linear(2, 2.0, 1.0, Mat2{{{0.0, 1.0}, {-1.0, 0.0}}});
    const Vec w = lin.eval(0.0, vec2(0.5, 0.25));
    CHECK(w[0] == doctest::Approx(0.25));
    CHECK(w[1] == doctest::Approx(-0.5));
}

TEST_CASE("mollified constant field reproduces the constant away from the support edge") {
    const auto b = DriftField::constant(1, 2.0, 1.0, vec1(0.7), 1.0);
    const auto bn = mollify_drift(b, {}, 8);
    CHECK(bn.kind() == DriftField::Kind::tabulated);
    CHECK(bn.trunc_radius() == doctest::Approx(1.0 + 1.0 / 8.0));
    for (double x : {-0.5, 0.0, 0.25, 0.8})
        CHECK(bn.eval(0.0, vec1(x))[0] == doctest::Approx(0.7).epsilon(1e-13));
}

TEST_CASE("mollifying the zero field gives zero") {
    const auto bn = mollify_drift(DriftField::zero(1, 2.0, 1.0), {}, 4);
    for (double x : {-1.0, -0.2, 0.0, 0.6}) CHECK(bn.eval(0.0, vec1(x))[0] == 0.0);
}

TEST_CASE("odd fields stay zero at the origin under mollification") {
    const auto b = DriftField::coalescing(1, 2.0, 1.0, 1.0);
    for (int n : {2, 4, 16}) {
        const auto bn = mollify_drift(b, {}, n);
        CHECK(std::abs(bn.eval(0.0, Vec{})[0]) < 1e-14);
    }
}

TEST_CASE("mollification error decreases along a doubling scale sequence") {
    const auto b = DriftField::coalescing(1, 2.0, 1.0, 1.0);
    QuadratureSpec quad{256, 8};
    const MixedNormSpec spec{4.0, 2.0, 1.0};
    double prev = -1.0;
    for (int n : {4, 8, 16}) {
        const auto bn = mollify_drift(b, {}, n);
        const double err = mixed_norm(DriftField::difference(bn, b), spec, quad).value;
        if (prev >= 0.0) CHECK(err <= prev * 1.02);
        prev = err;
    }
}

TEST_CASE("mollification does not inflate the mixed norm beyond quadrature slack") {
    const auto b = DriftField::coalescing(1, 2.0, 1.0, 1.0);
    QuadratureSpec quad{256, 8};
    const MixedNormSpec spec{4.0, 2.0, 1.0};
    const double base = mixed_norm(b, spec, quad).value;
    for (int n : {4, 16}) {
        const auto bn = mollify_drift(b, {}, n);
        CHECK(mixed_norm(bn, spec, quad).value <= base * 1.02 + 1e-6);
    }
}

TEST_CASE("mollification rejects unusable inputs") {
    const auto timedep = DriftField::custom(
        1, 2.0, 1.0, 1.0, [](double t, const Vec&) { return vec1(t); }, true, true, "timedep");
    CHECK_THROWS_AS((void)mollify_drift(timedep, {}, 4), DomainError);

    const auto b = DriftField::coalescing(1, 2.0, 1.0, 1.0);
    MollifyOptions wide;
    wide.table_spacing = 0.5;  // coarser than the n = 4 support radius
    CHECK_THROWS_AS((void)mollify_drift(b, {}, 4, wide), ConfigError);

    const auto tab = mollify_drift(b, {}, 4);  // table spacing 1/32
    CHECK_THROWS_AS((void)mollify_drift(tab, {}, 64), ConfigError);
    CHECK_NOTHROW((void)mollify_drift(tab, {}, 8));
}

TEST_CASE("difference wrapper evaluates pointwise differences") {
    const auto a = DriftField::constant(1, 2.0, 1.0, vec1(1.0), 1.0);
    const auto c = DriftField::constant(1, 2.0, 1.0, vec1(0.25), 1.0);
    const auto d = DriftField::difference(a, c);
    CHECK(d.eval(0.0, vec1(0.5))[0] == doctest::Approx(0.75));
    CHECK(d.eval(0.0, vec1(1.5))[0] == 0.0);
}
