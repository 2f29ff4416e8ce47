#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stochflow {

/// Raised when a numeric argument leaves the documented range of an operation.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a configuration is rejected before any computation starts.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when an iterative solver fails to meet its tolerance.
struct SolverError : std::runtime_error {
    explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a field evaluation produces a non-finite value.
struct EvaluationError : std::runtime_error {
    explicit EvaluationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when two inputs that must share provenance (noise, grids) do not.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr int kMaxDim = 2;

// Spatial point or vector. Components beyond the active dimension stay zero.
using Vec = std::array<double, kMaxDim>;

inline Vec vec1(double x) { return Vec{x, 0.0}; }
inline Vec vec2(double x, double y) { return Vec{x, y}; }

inline double dot(const Vec& a, const Vec& b, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a, int dim) { return std::sqrt(dot(a, a, dim)); }

inline double dist2(const Vec& a, const Vec& b, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double max_abs_component(const Vec& a, int dim) {
    double m = 0.0;
    for (int i = 0; i < dim; ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

/// FNV-1a 64-bit digest. Used for config hashes and output-file digests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string to_hex(std::uint64_t v);

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;     // standard error of the mean
    std::size_t count = 0;
};

/// Sample mean and standard error, accumulated in index order.
MeanSe mean_se(const std::vector<double>& xs);

/// Quantile of a copy of xs (linear interpolation between order statistics).
double quantile(std::vector<double> xs, double q);

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

/// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace stochflow
