#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stochflow/noise.hpp"

using namespace stochflow;

TEST_CASE("increments are addressable pure functions of (seed, path, step, axis)") {
    const auto e = sample_noise(42, 7, 2, 0.01, 1.0);
    REQUIRE(e.steps == 100);
    const double root_dt = std::sqrt(0.01);
    for (int p : {0, 3, 6})
        for (int k : {0, 50, 99})
            for (int a : {0, 1})
                CHECK(e.increment(p, k, a) == root_dt * philox_normal(42, p, k, a));

    const auto again = sample_noise(42, 7, 2, 0.01, 1.0);
    CHECK(e.dw == again.dw);
}

TEST_CASE("thread count does not change the stream") {
    const auto serial = sample_noise(9001, 64, 1, 0.05, 2.0, 1);
    const auto parallel = sample_noise(9001, 64, 1, 0.05, 2.0, 4);
    CHECK(serial.dw == parallel.dw);
}

TEST_CASE("distinct seeds and distinct paths give distinct streams") {
    const auto a = sample_noise(1, 2, 1, 0.1, 1.0);
    const auto b = sample_noise(2, 2, 1, 0.1, 1.0);
    CHECK(a.dw != b.dw);

    int same = 0;
    for (int k = 0; k < a.steps; ++k)
        if (a.increment(0, k, 0) == a.increment(1, k, 0)) ++same;
    CHECK(same == 0);
}

TEST_CASE("terminal variance matches the horizon within Monte Carlo tolerance") {
    const int paths = 10000;
    const double horizon = 1.0;
    const auto e = sample_noise(777, paths, 1, 0.01, horizon);

    std::vector<double> w_end(paths, 0.0);
    for (int p = 0; p < paths; ++p)
        for (int k = 0; k < e.steps; ++k) w_end[p] += e.increment(p, k, 0);

    double mean = 0.0;
    for (double w : w_end) mean += w;
    mean /= paths;
    double var = 0.0;
    for (double w : w_end) var += (w - mean) * (w - mean);
    var /= paths - 1;

    // Sample variance of a normal has standard error ~ sigma^2 sqrt(2/(M-1)).
    const double se = horizon * std::sqrt(2.0 / (paths - 1));
    CHECK(std::abs(var - horizon) < 3.0 * se);
    CHECK(std::abs(mean) < 3.0 * std::sqrt(horizon / paths));
}

TEST_CASE("per-step increment variance matches dt") {
    const auto e = sample_noise(31337, 2000, 1, 0.25, 1.0);
    std::vector<double> all;
    all.reserve(static_cast<std::size_t>(e.paths) * e.steps);
    for (int p = 0; p < e.paths; ++p)
        for (int k = 0; k < e.steps; ++k) all.push_back(e.increment(p, k, 0));
    double mean = 0.0;
    for (double x : all) mean += x;
    mean /= static_cast<double>(all.size());
    double var = 0.0;
    for (double x : all) var += (x - mean) * (x - mean);
    var /= static_cast<double>(all.size() - 1);
    const double se = 0.25 * std::sqrt(2.0 / static_cast<double>(all.size() - 1));
    CHECK(std::abs(var - 0.25) < 3.0 * se);
}

TEST_CASE("non-integer horizon is rounded down and recorded") {
    const auto e = sample_noise(5, 1, 1, 0.3, 1.0);
    CHECK(e.steps == 3);
    CHECK(e.horizon == doctest::Approx(0.9));
    REQUIRE(e.warnings.size() == 1);

    const auto clean = sample_noise(5, 1, 1, 0.25, 1.0);
    CHECK(clean.steps == 4);
    CHECK(clean.warnings.empty());
}

TEST_CASE("coarsening sums consecutive increments and keeps the Brownian path") {
    const auto fine = sample_noise(12, 5, 2, 0.005, 1.0);
    const auto coarse = fine.coarsened(4);
    REQUIRE(coarse.steps == fine.steps / 4);
    CHECK(coarse.dt == doctest::Approx(0.02));
    CHECK(coarse.seed == fine.seed);

    for (int p = 0; p < fine.paths; ++p)
        for (int a = 0; a < 2; ++a) {
            double wf = 0.0, wc = 0.0;
            for (int k = 0; k < fine.steps; ++k) wf += fine.increment(p, k, a);
            for (int k = 0; k < coarse.steps; ++k) wc += coarse.increment(p, k, a);
            CHECK(wf == doctest::Approx(wc).epsilon(1e-13));
        }

    CHECK_THROWS_AS((void)fine.coarsened(3), DomainError);
}

TEST_CASE("invalid arguments are rejected") {
    CHECK_THROWS_AS((void)sample_noise(1, 0, 1, 0.1, 1.0), DomainError);
    CHECK_THROWS_AS((void)sample_noise(1, 1, 3, 0.1, 1.0), DomainError);
    CHECK_THROWS_AS((void)sample_noise(1, 1, 1, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS((void)sample_noise(1, 1, 1, 0.5, 0.25), DomainError);
}
