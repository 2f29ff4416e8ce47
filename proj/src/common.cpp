#include "stochflow/common.hpp"

#include <algorithm>
#include <cstdio>

namespace stochflow {

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe r;
    r.count = xs.size();
    if (xs.empty()) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / static_cast<double>(xs.size());
    if (xs.size() < 2) return r;
    double ss = 0.0;
    for (double x : xs) {
        const double d = x - r.mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(xs.size() - 1);
    r.se = std::sqrt(var / static_cast<double>(xs.size()));
    return r;
}

double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) throw DomainError("quantile: empty sample");
    if (q < 0.0 || q > 1.0) throw DomainError("quantile: q outside [0,1]");
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= xs.size()) return xs.back();
    const double frac = pos - static_cast<double>(lo);
    return xs[lo] * (1.0 - frac) + xs[lo + 1] * frac;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("fit_slope: need two matched samples");
    const auto n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw DomainError("fit_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / denom;
}

}  // namespace stochflow
