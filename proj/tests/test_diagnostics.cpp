#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "stochflow/diagnostics.hpp"
#include "stochflow/noise.hpp"

using namespace stochflow;

namespace {

ScalarFieldGrid gaussian_field(const GridSpec& g) {
    return ScalarFieldGrid::sample(g, [](const Vec& x) { return std::exp(-0.5 * x[0] * x[0]); });
}

InitialConditionSpec gaussian_ic() {
    InitialConditionSpec ic;
    ic.kind = InitialConditionKind::gaussian_bump;
    ic.width = 0.4;
    return ic;
}

}  // namespace

TEST_CASE("holder constant of a constant field is exactly zero") {
    const auto g = GridSpec::line(-1.0, 1.0, 101);
    const auto f = ScalarFieldGrid::sample(g, [](const Vec&) { return 3.7; });
    CHECK(holder_constant(f, 0.5) == 0.0);
    CHECK(holder_constant(f, 1.0) == 0.0);
}

TEST_CASE("holder constant of the identity at alpha one is one") {
    // Dyadic spacing keeps node coordinates exact.
    const auto g = GridSpec::line(-1.0, 1.0, 257);
    const auto f = ScalarFieldGrid::sample(g, [](const Vec& x) { return x[0]; });
    CHECK(holder_constant(f, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("square root profile attains holder quotient one at the origin pair") {
    const auto g = GridSpec::line(-1.0, 1.0, 257);
    const auto f = ScalarFieldGrid::sample(g, [](const Vec& x) { return std::sqrt(std::abs(x[0])); });
    const auto est = holder_constant_detail(f, 0.5);
    CHECK_FALSE(est.subsampled);
    CHECK(est.constant == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("holder constant scales linearly with the field and shrinks on subregions") {
    const auto g = GridSpec::line(-1.0, 1.0, 257);
    const auto f = gaussian_field(g);
    auto scaled = f;
    for (auto& v : scaled.values) v *= 2.5;
    const double base = holder_constant(f, 0.7);
    CHECK(holder_constant(scaled, 0.7) == doctest::Approx(2.5 * base).epsilon(1e-12));

    const Region sub{vec1(-0.5), vec1(0.5)};
    CHECK(holder_constant(f, 0.7, sub) <= base);
}

TEST_CASE("large point sets switch to reported deterministic pair subsampling") {
    const auto g = GridSpec::line(-1.0, 1.0, 2049);
    const auto f = ScalarFieldGrid::sample(g, [](const Vec& x) { return x[0]; });
    const auto est = holder_constant_detail(f, 1.0);
    CHECK(est.subsampled);
    CHECK(est.pairs >= 1'900'000);
    CHECK(est.constant == doctest::Approx(1.0).epsilon(1e-12));
    const auto again = holder_constant_detail(f, 1.0);
    CHECK(again.constant == est.constant);
    CHECK(again.pairs == est.pairs);
}

TEST_CASE("holder constant rejects bad exponents and empty regions") {
    const auto g = GridSpec::line(-1.0, 1.0, 51);
    const auto f = gaussian_field(g);
    CHECK_THROWS_AS((void)holder_constant(f, 0.0), DomainError);
    CHECK_THROWS_AS((void)holder_constant(f, 1.2), DomainError);
    const Region far{vec1(5.0), vec1(6.0)};
    CHECK_THROWS_AS((void)holder_constant(f, 0.5, far), DomainError);
}

TEST_CASE("sobolev norms of a constant field have zero gradient part") {
    const auto g = GridSpec::line(-1.0, 1.0, 201);
    const auto f = ScalarFieldGrid::sample(g, [](const Vec&) { return 2.0; });
    const auto n = sobolev_w1r_norm(f, 2.0);
    CHECK(n.gradient_norm == 0.0);
    const double measure = g.size() * g.cell_volume();
    CHECK(n.field_norm == doctest::Approx(2.0 * std::sqrt(measure)).epsilon(1e-12));
}

TEST_CASE("gaussian sobolev norms match the closed forms") {
    const auto g = GridSpec::line(-6.0, 6.0, 601);
    const auto f = gaussian_field(g);
    const auto n = sobolev_w1r_norm(f, 2.0);
    // int e^{-x^2} = sqrt(pi); int x^2 e^{-x^2} = sqrt(pi)/2.
    CHECK(n.field_norm == doctest::Approx(std::pow(M_PI, 0.25)).epsilon(1e-3));
    CHECK(n.gradient_norm == doctest::Approx(std::sqrt(std::sqrt(M_PI) / 2.0)).epsilon(1e-3));
}

TEST_CASE("step gradient norm diverges at the predicted rate under refinement") {
    InitialConditionSpec step;
    step.kind = InitialConditionKind::step;
    std::vector<double> log2_norms, levels;
    for (int level = 0; level < 3; ++level) {
        const auto g = GridSpec::line(-1.0, 1.0, 101 * (1 << level) - (1 << level) + 1);
        const auto f =
            ScalarFieldGrid::sample(g, [&](const Vec& x) { return step.value(x); });
        const auto n2 = sobolev_w1r_norm(f, 2.0);
        log2_norms.push_back(std::log2(n2.gradient_norm));
        levels.push_back(level);
        // r = 1 integrates the jump itself: the norm is the jump height.
        const auto n1 = sobolev_w1r_norm(f, 1.0);
        CHECK(n1.gradient_norm == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(fit_slope(levels, log2_norms) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("adding a constant moves only the field part of the sobolev norms") {
    const auto g = GridSpec::line(-2.0, 2.0, 201);
    const auto f = gaussian_field(g);
    auto shifted = f;
    for (auto& v : shifted.values) v += 5.0;
    const auto a = sobolev_w1r_norm(f, 3.0);
    const auto b = sobolev_w1r_norm(shifted, 3.0);
    CHECK(b.gradient_norm == doctest::Approx(a.gradient_norm).epsilon(1e-10));
    CHECK(b.field_norm > a.field_norm);
}

TEST_CASE("sobolev gradient needs a region at least one stencil wide") {
    const auto g = GridSpec::line(-1.0, 1.0, 201);
    const auto f = gaussian_field(g);
    const Region sliver{vec1(0.0), vec1(0.005)};
    CHECK_THROWS_AS((void)sobolev_w1r_norm(f, 2.0, sliver), DomainError);
}

TEST_CASE("interpolation ratio is invariant under positive scaling") {
    const auto g = GridSpec::line(-8.0, 8.0, 801);
    const auto v = gaussian_field(g);
    auto scaled = v;
    for (auto& x : scaled.values) x *= 37.5;
    const double r1 = interpolation_check(v, 4.0, 1);
    const double r2 = interpolation_check(scaled, 4.0, 1);
    CHECK(r2 == doctest::Approx(r1).epsilon(1e-10));
}

TEST_CASE("gaussian interpolation ratio matches the closed form at two resolutions") {
    // v = e^{-x^2/2}: int v^4 = sqrt(pi/2), int v^2 = sqrt(pi),
    // int v'^2 = sqrt(pi)/2, s = 1/4.
    const double exact = std::pow(std::sqrt(M_PI / 2.0), 0.25) /
                         (std::pow(std::sqrt(M_PI), 0.375) * std::pow(std::sqrt(M_PI) / 2.0, 0.125));
    const double r_coarse = interpolation_check(gaussian_field(GridSpec::line(-8.0, 8.0, 801)), 4.0, 1);
    const double r_fine = interpolation_check(gaussian_field(GridSpec::line(-8.0, 8.0, 1601)), 4.0, 1);
    CHECK(r_coarse == doctest::Approx(exact).epsilon(2e-4));
    CHECK(r_fine == doctest::Approx(exact).epsilon(5e-5));
    CHECK(std::abs(r_fine - r_coarse) < 1e-4);
}

TEST_CASE("interpolation check rejects inadmissible inputs") {
    const auto g = GridSpec::line(-1.0, 1.0, 101);
    const auto zero = ScalarFieldGrid::sample(g, [](const Vec&) { return 0.0; });
    CHECK_THROWS_AS((void)interpolation_check(zero, 4.0, 1), DomainError);
    auto neg = gaussian_field(g);
    neg.values[3] = -0.1;
    CHECK_THROWS_AS((void)interpolation_check(neg, 4.0, 1), DomainError);
    const auto v = gaussian_field(g);
    CHECK_THROWS_AS((void)interpolation_check(v, 2.0, 1), DomainError);
    CHECK_THROWS_AS((void)interpolation_check(v, 4.0, 2), ContractError);
}

TEST_CASE("identical series sit exactly on zero separation with a passing verdict") {
    const auto b = DriftField::zero(1, 2.0, 1.0);
    const auto g = GridSpec::line(-2.0, 2.0, 51);
    const auto noise = sample_noise(71, 6, 1, 1e-2, 0.5);
    const auto s = representation_series(gaussian_ic(), b, 1.0, g, noise, {0, 20, 50});
    const auto r = energy_envelope_check(s, s, b, 3.0);
    REQUIRE(r.d_values.size() == 3);
    for (const double d : r.d_values) CHECK(d == 0.0);
    for (const auto v : r.verdict) CHECK(v == 1);
    CHECK(r.pass);
    CHECK(r.same_initial_data);
}

TEST_CASE("zero-drift dt pair stays numerically at zero under the flat envelope") {
    const auto b = DriftField::zero(1, 2.0, 1.0);
    const auto g = GridSpec::line(-2.0, 2.0, 51);
    const auto fine = sample_noise(101, 8, 1, 1e-3, 0.2);
    const auto coarse = fine.coarsened(2);
    const auto sa = representation_series(gaussian_ic(), b, 1.0, g, coarse, {0, 25, 50, 100});
    const auto sb = representation_series(gaussian_ic(), b, 1.0, g, fine, {0, 50, 100, 200});
    const auto r = energy_envelope_check(sa, sb, b, 3.0);
    CHECK(r.same_initial_data);
    CHECK(r.pass);
    for (const double d : r.d_values) CHECK(d < 1e-25);
}

TEST_CASE("envelope follows the calibrated gronwall form for a truncated constant drift") {
    const auto drift = DriftField::constant(1, 2.0, 1.0, vec1(0.8), 0.5);
    const auto g = GridSpec::line(-2.0, 2.0, 51);
    const double p = 3.0;
    const auto fine = sample_noise(113, 12, 1, 1e-3, 0.2);
    const auto coarse = fine.coarsened(2);
    const auto sa = representation_series(gaussian_ic(), drift, 1.0, g, coarse, {0, 4, 10, 50, 100});
    const auto sb = representation_series(gaussian_ic(), drift, 1.0, g, fine, {0, 8, 20, 100, 200});
    const auto r = energy_envelope_check(sa, sb, drift, p);
    REQUIRE(r.times.size() == 5);
    CHECK(r.calibrated_c >= 0.0);

    // Replicate the quadrature and calibration arithmetic independently.
    const int cells = 256;
    const double radius = drift.trunc_radius();
    const double dx = 2.0 * radius / cells;
    double space = 0.0;
    for (int i = 0; i < cells; ++i) {
        const Vec x = vec1(-radius + (i + 0.5) * dx);
        space += std::pow(norm2(drift.eval(0.0, x), 1), p) * dx;
    }
    const double growth = std::pow(space, 2.0 / (p - 1.0));
    std::vector<double> integral(r.times.size(), 0.0);
    for (std::size_t i = 1; i < r.times.size(); ++i)
        integral[i] = integral[i - 1] + growth * (r.times[i] - r.times[i - 1]);
    double c_fit = 0.0;
    const double window = 0.1 * r.times.back();
    for (std::size_t i = 1; i < r.times.size(); ++i) {
        if (r.times[i] <= 0.0 || r.times[i] > window) continue;
        if (r.d_values[i] <= r.floor || r.d0_plus <= r.floor || integral[i] <= 0.0) continue;
        c_fit = std::max(c_fit, std::log(r.d_values[i] / r.d0_plus) / integral[i]);
    }
    CHECK(r.calibrated_c == doctest::Approx(c_fit).epsilon(1e-9));
    for (std::size_t i = 0; i < r.times.size(); ++i)
        CHECK(r.envelope[i] ==
              doctest::Approx(r.d0_plus * std::exp(c_fit * integral[i])).epsilon(1e-9));
}

TEST_CASE("differing initial data is flagged and degrades to envelope tracking") {
    const auto b = DriftField::zero(1, 2.0, 1.0);
    const auto g = GridSpec::line(-2.0, 2.0, 51);
    const auto noise = sample_noise(7, 4, 1, 1e-2, 0.5);
    InitialConditionSpec other;
    other.kind = InitialConditionKind::compact_bump;
    other.width = 0.5;
    const auto sa = representation_series(gaussian_ic(), b, 1.0, g, noise, {0, 25, 50});
    const auto sb = representation_series(other, b, 1.0, g, noise, {0, 25, 50});
    const auto r = energy_envelope_check(sa, sb, b, 3.0);
    CHECK_FALSE(r.same_initial_data);
    CHECK(r.d_values[0] > 0.0);
}

TEST_CASE("envelope check demands one noise realization and aligned clocks") {
    const auto b = DriftField::zero(1, 2.0, 1.0);
    const auto g = GridSpec::line(-2.0, 2.0, 51);
    const auto na = sample_noise(1, 4, 1, 1e-2, 0.5);
    const auto nb = sample_noise(2, 4, 1, 1e-2, 0.5);
    const auto sa = representation_series(gaussian_ic(), b, 1.0, g, na, {0, 50});
    const auto sb = representation_series(gaussian_ic(), b, 1.0, g, nb, {0, 50});
    CHECK_THROWS_AS((void)energy_envelope_check(sa, sb, b, 3.0), ContractError);

    const auto sc = representation_series(gaussian_ic(), b, 1.0, g, na, {0, 40});
    CHECK_THROWS_AS((void)energy_envelope_check(sa, sc, b, 3.0), ContractError);

    // p must exceed the dimension for a positive Gronwall exponent.
    CHECK_THROWS_AS((void)energy_envelope_check(sa, sa, b, 1.0), ConfigError);
}

TEST_CASE("regularity report is shape-consistent, nonnegative, and thread independent") {
    const auto b = DriftField::coalescing(1, 2.0, 1.0, 1.0);
    const auto g = GridSpec::line(-2.0, 2.0, 101);
    const auto noise = sample_noise(31, 8, 1, 1e-2, 1.0);
    const auto s = representation_series(gaussian_ic(), b, 1.0, g, noise, {0, 50, 100});
    const std::vector<double> alphas = {0.9, 1.0};
    const std::vector<double> rs = {2.0};
    const std::vector<double> qs = {0.1, 0.5, 0.9};
    const auto r1 = build_regularity_report(s.fields, s.times(), alphas, rs, Region::all(), qs, 1);
    const auto r4 = build_regularity_report(s.fields, s.times(), alphas, rs, Region::all(), qs, 4);

    REQUIRE(r1.holder.size() == 3);
    for (std::size_t ti = 0; ti < 3; ++ti) {
        REQUIRE(r1.holder[ti].size() == alphas.size());
        for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
            REQUIRE(r1.holder[ti][ai].size() == 8);
            for (std::size_t m = 0; m < 8; ++m) {
                CHECK(std::isfinite(r1.holder[ti][ai][m]));
                CHECK(r1.holder[ti][ai][m] >= 0.0);
                CHECK(r1.holder[ti][ai][m] == r4.holder[ti][ai][m]);
            }
            for (std::size_t qi = 1; qi < qs.size(); ++qi)
                CHECK(r1.holder_quantiles[ti][ai][qi] >= r1.holder_quantiles[ti][ai][qi - 1]);
        }
        for (std::size_t m = 0; m < 8; ++m) {
            CHECK(r1.field_norms[ti][0][m] >= 0.0);
            CHECK(r1.gradient_norms[ti][0][m] >= 0.0);
            CHECK(r1.gradient_norms[ti][0][m] == r4.gradient_norms[ti][0][m]);
        }
    }
    CHECK_FALSE(r1.holder_subsampled);
    CHECK(r1.holder_pairs == 101u * 100u / 2u);
}
