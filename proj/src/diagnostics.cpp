#include "stochflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "stochflow/noise.hpp"
#include "stochflow/threading.hpp"

namespace stochflow {

namespace {

constexpr std::size_t kBruteForceCap = 2000;
constexpr std::size_t kSubsamplePairs = 2'000'000;
constexpr std::uint64_t kPairSeed = 0x686f6c64ull;

/// Valid nodes of the field inside the region, ascending flat order.
std::vector<std::size_t> region_nodes(const ScalarFieldGrid& field, const Region& region) {
    field.require_shape();
    const GridSpec& g = field.grid;
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < g.size(); ++j) {
        if (!field.valid(j)) continue;
        if (!region.contains(g.node(j), g.dim)) continue;
        out.push_back(j);
    }
    return out;
}

double pair_quotient(const ScalarFieldGrid& field, std::size_t i, std::size_t j, double alpha) {
    const double num = std::abs(field.values[i] - field.values[j]);
    if (num == 0.0) return 0.0;
    const double dist = dist2(field.grid.node(i), field.grid.node(j), field.grid.dim);
    return num / std::pow(dist, alpha);
}

}  // namespace

HolderEstimate holder_constant_detail(const ScalarFieldGrid& field, double alpha,
                                      const Region& region) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw DomainError("holder constant: alpha must lie in (0, 1]");
    const auto nodes = region_nodes(field, region);
    if (nodes.size() < 2) throw DomainError("holder constant: region holds fewer than two nodes");

    HolderEstimate est;
    if (nodes.size() <= kBruteForceCap) {
        for (std::size_t a = 0; a < nodes.size(); ++a)
            for (std::size_t b = a + 1; b < nodes.size(); ++b)
                est.constant = std::max(est.constant, pair_quotient(field, nodes[a], nodes[b], alpha));
        est.pairs = nodes.size() * (nodes.size() - 1) / 2;
        return est;
    }

    est.subsampled = true;
    const double count = static_cast<double>(nodes.size());
    for (std::size_t k = 0; k < kSubsamplePairs; ++k) {
        auto pick = [&](std::uint32_t axis) {
            const double u = philox_uniform(kPairSeed, k, 0, axis);
            auto idx = static_cast<std::size_t>(u * count);
            return nodes[std::min(idx, nodes.size() - 1)];
        };
        const std::size_t i = pick(0);
        const std::size_t j = pick(1);
        if (i == j) continue;
        est.constant = std::max(est.constant, pair_quotient(field, i, j, alpha));
        ++est.pairs;
    }
    return est;
}

double holder_constant(const ScalarFieldGrid& field, double alpha, const Region& region) {
    return holder_constant_detail(field, alpha, region).constant;
}

SobolevNorms sobolev_w1r_norm(const ScalarFieldGrid& field, double r, const Region& region) {
    if (!(r >= 1.0)) throw DomainError("sobolev norm: r must be >= 1");
    const GridSpec& g = field.grid;
    const auto nodes = region_nodes(field, region);
    if (nodes.empty()) throw DomainError("sobolev norm: empty region");

    const double vol = g.cell_volume();
    double field_acc = 0.0;
    for (const std::size_t j : nodes) field_acc += vol * std::pow(std::abs(field.values[j]), r);

    double grad_acc = 0.0;
    std::size_t grad_nodes = 0;
    for (const std::size_t j : nodes) {
        const auto idx = g.unflatten(j);
        bool usable = true;
        Vec du{};
        for (int a = 0; a < g.dim && usable; ++a) {
            if (idx[a] == 0 || idx[a] == g.n[a] - 1) {
                usable = false;
                break;
            }
            auto up = idx, dn = idx;
            ++up[a];
            --dn[a];
            const std::size_t ju = g.flatten(up), jd = g.flatten(dn);
            if (!field.valid(ju) || !field.valid(jd) || !region.contains(g.node(ju), g.dim) ||
                !region.contains(g.node(jd), g.dim)) {
                usable = false;
                break;
            }
            du[a] = (field.values[ju] - field.values[jd]) / (2.0 * g.spacing(a));
        }
        if (!usable) continue;
        grad_acc += vol * std::pow(norm2(du, g.dim), r);
        ++grad_nodes;
    }
    if (grad_nodes == 0)
        throw DomainError("sobolev norm: region smaller than one gradient stencil");

    SobolevNorms out;
    out.field_norm = std::pow(field_acc, 1.0 / r);
    out.gradient_norm = grad_acc == 0.0 ? 0.0 : std::pow(grad_acc, 1.0 / r);
    return out;
}

double interpolation_check(const ScalarFieldGrid& v, double alpha_exp, int d) {
    v.require_shape();
    const GridSpec& g = v.grid;
    if (d != g.dim) throw ContractError("interpolation check: dimension does not match the field");
    if (!(alpha_exp > 2.0)) throw DomainError("interpolation check: alpha must exceed 2");
    const double s = (alpha_exp - 2.0) * d / (2.0 * alpha_exp);
    if (!(s > 0.0 && s < 1.0))
        throw DomainError("interpolation check: interpolation weight must lie in (0, 1)");
    if (!v.mask.empty())
        for (std::size_t j = 0; j < g.size(); ++j)
            if (!v.valid(j)) throw DomainError("interpolation check: field has masked cells");

    const double vol = g.cell_volume();
    double pow_acc = 0.0, sq_acc = 0.0, peak = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double val = v.values[j];
        if (val < 0.0) throw DomainError("interpolation check: field must be nonnegative");
        peak = std::max(peak, val);
        pow_acc += vol * std::pow(val, alpha_exp);
        sq_acc += vol * val * val;
    }
    if (peak == 0.0)
        throw DomainError("interpolation check: ratio undefined for the zero field");

    double grad_acc = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const auto idx = g.unflatten(j);
        bool interior = true;
        Vec du{};
        for (int a = 0; a < g.dim; ++a) {
            if (idx[a] == 0 || idx[a] == g.n[a] - 1) {
                interior = false;
                break;
            }
            auto up = idx, dn = idx;
            ++up[a];
            --dn[a];
            du[a] = (v.values[g.flatten(up)] - v.values[g.flatten(dn)]) / (2.0 * g.spacing(a));
        }
        if (interior) grad_acc += vol * dot(du, du, g.dim);
    }
    if (grad_acc == 0.0)
        throw DomainError("interpolation check: ratio undefined for a constant field");

    const double numerator = std::pow(pow_acc, 1.0 / alpha_exp);
    const double denominator = std::pow(sq_acc, (1.0 - s) / 2.0) * std::pow(grad_acc, s / 2.0);
    return numerator / denominator;
}

EnergyEnvelopeResult energy_envelope_check(const RepresentationSeries& a,
                                           const RepresentationSeries& b, const DriftField& drift,
                                           double p, int space_cells) {
    if (!a.grid.same_as(b.grid)) throw ContractError("energy envelope: series grids differ");
    if (a.noise_seed != b.noise_seed || a.noise_paths != b.noise_paths ||
        std::abs(a.noise_horizon - b.noise_horizon) > 1e-12)
        throw ContractError("energy envelope: series come from different noise realizations");
    const auto ta = a.times(), tb = b.times();
    if (ta.size() != tb.size()) throw ContractError("energy envelope: output time grids differ");
    for (std::size_t i = 0; i < ta.size(); ++i)
        if (std::abs(ta[i] - tb[i]) > 1e-9)
            throw ContractError("energy envelope: output time grids differ");
    const int d = drift.dim();
    if (d != a.grid.dim) throw ContractError("energy envelope: drift dimension mismatch");
    if (!(p > d)) throw ConfigError("energy envelope: p must exceed the dimension");
    if (!std::isfinite(drift.trunc_radius()))
        throw ConfigError("energy envelope: drift must have bounded support");
    if (space_cells < 2) throw ConfigError("energy envelope: too few quadrature cells");
    if (ta.size() < 2 || ta.back() <= 0.0)
        throw ConfigError("energy envelope: need a positive output time");

    const GridSpec& g = a.grid;
    const int paths = a.noise_paths;
    EnergyEnvelopeResult out;
    out.times = ta;
    out.d_values.resize(ta.size());
    for (std::size_t ti = 0; ti < ta.size(); ++ti) {
        if (static_cast<int>(a.fields[ti].size()) != paths ||
            static_cast<int>(b.fields[ti].size()) != paths)
            throw ContractError("energy envelope: path count mismatch in the field tables");
        const double vol = g.cell_volume();
        double acc = 0.0;
        std::size_t used = 0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            bool all_valid = true;
            double vhat = 0.0;
            for (int m = 0; m < paths && all_valid; ++m) {
                if (!a.fields[ti][m].valid(j) || !b.fields[ti][m].valid(j)) all_valid = false;
            }
            if (!all_valid) continue;
            for (int m = 0; m < paths; ++m) {
                const double gap = a.fields[ti][m].values[j] - b.fields[ti][m].values[j];
                vhat += gap * gap;
            }
            vhat /= paths;
            acc += vol * vhat * vhat;
            ++used;
        }
        if (used == 0) throw EvaluationError("energy envelope: every node is masked");
        out.d_values[ti] = acc;
    }

    double d_max = 0.0;
    for (const double v : out.d_values) d_max = std::max(d_max, v);
    // Numerically-zero threshold for a fourth-power integral at desk scale.
    out.floor = std::max(1e-30, 1e-14 * d_max);

    if (std::abs(ta.front()) <= 1e-12) out.same_initial_data = out.d_values.front() <= out.floor;
    std::size_t first_pos = ta.size();
    for (std::size_t i = 0; i < ta.size(); ++i)
        if (ta[i] > 0.0) {
            first_pos = i;
            break;
        }
    out.d0_plus = out.d_values[first_pos];

    // Growth factor (int |b|^p dx)^{2/(p-d)} per output time, midpoint cells
    // over the truncation box, then a left-endpoint time integral.
    const double radius = drift.trunc_radius();
    const double dx = 2.0 * radius / space_cells;
    auto growth_at = [&](double t) {
        double space = 0.0;
        if (d == 1) {
            for (int i = 0; i < space_cells; ++i) {
                const Vec x = vec1(-radius + (i + 0.5) * dx);
                space += std::pow(norm2(drift.eval(t, x), 1), p) * dx;
            }
        } else {
            for (int i = 0; i < space_cells; ++i)
                for (int k = 0; k < space_cells; ++k) {
                    const Vec x =
                        vec2(-radius + (i + 0.5) * dx, -radius + (k + 0.5) * dx);
                    space += std::pow(norm2(drift.eval(t, x), 2), p) * dx * dx;
                }
        }
        return std::pow(space, 2.0 / (p - d));
    };
    std::vector<double> growth(ta.size());
    if (drift.time_dependent())
        for (std::size_t i = 0; i < ta.size(); ++i) growth[i] = growth_at(ta[i]);
    else
        growth.assign(ta.size(), growth_at(0.0));

    std::vector<double> integral(ta.size(), 0.0);
    integral[0] = growth[0] * ta[0];
    for (std::size_t i = 1; i < ta.size(); ++i)
        integral[i] = integral[i - 1] + growth[i - 1] * (ta[i] - ta[i - 1]);

    out.calibrated_c = 0.0;
    const double window = 0.1 * ta.back();
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i] <= 0.0 || ta[i] > window) continue;
        if (out.d_values[i] <= out.floor || out.d0_plus <= out.floor || integral[i] <= 0.0)
            continue;
        out.calibrated_c =
            std::max(out.calibrated_c, std::log(out.d_values[i] / out.d0_plus) / integral[i]);
    }

    out.envelope.resize(ta.size());
    out.verdict.resize(ta.size());
    out.pass = true;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        out.envelope[i] = out.d0_plus * std::exp(out.calibrated_c * integral[i]);
        out.verdict[i] = out.d_values[i] <= out.envelope[i] * (1.0 + 1e-9) + out.floor ? 1 : 0;
        if (!out.verdict[i]) out.pass = false;
    }
    return out;
}

RegularityReport build_regularity_report(
    const std::vector<std::vector<ScalarFieldGrid>>& fields_by_time,
    const std::vector<double>& times, const std::vector<double>& alphas,
    const std::vector<double>& rs, const Region& region,
    const std::vector<double>& quantile_levels, int threads) {
    if (fields_by_time.empty() || fields_by_time.size() != times.size())
        throw ContractError("regularity report: field table and time list disagree");
    const std::size_t paths = fields_by_time.front().size();
    if (paths == 0) throw ContractError("regularity report: no paths");
    for (const auto& per_path : fields_by_time)
        if (per_path.size() != paths)
            throw ContractError("regularity report: ragged field table");
    for (const double alpha : alphas)
        if (!(alpha > 0.0) || alpha > 1.0)
            throw ConfigError("regularity report: alpha must lie in (0, 1]");
    for (const double r : rs)
        if (!(r >= 1.0)) throw ConfigError("regularity report: r must be >= 1");
    for (std::size_t qi = 0; qi < quantile_levels.size(); ++qi) {
        if (quantile_levels[qi] < 0.0 || quantile_levels[qi] > 1.0)
            throw ConfigError("regularity report: quantile level outside [0, 1]");
        if (qi > 0 && quantile_levels[qi] < quantile_levels[qi - 1])
            throw ConfigError("regularity report: quantile levels must be ascending");
    }

    const std::size_t nt = times.size();
    RegularityReport rep;
    rep.times = times;
    rep.alphas = alphas;
    rep.rs = rs;
    rep.quantile_levels = quantile_levels;
    rep.holder.assign(nt, std::vector<std::vector<double>>(
                              alphas.size(), std::vector<double>(paths, 0.0)));
    rep.field_norms.assign(
        nt, std::vector<std::vector<double>>(rs.size(), std::vector<double>(paths, 0.0)));
    rep.gradient_norms = rep.field_norms;

    std::vector<std::size_t> pair_counts(nt * paths, 0);
    std::vector<std::uint8_t> subsampled(nt * paths, 0);
    parallel_for(nt * paths, threads, [&](std::size_t slot) {
        const std::size_t ti = slot / paths;
        const std::size_t m = slot % paths;
        const ScalarFieldGrid& f = fields_by_time[ti][m];
        for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
            const auto est = holder_constant_detail(f, alphas[ai], region);
            rep.holder[ti][ai][m] = est.constant;
            pair_counts[slot] = est.pairs;
            subsampled[slot] = est.subsampled ? 1 : 0;
        }
        for (std::size_t ri = 0; ri < rs.size(); ++ri) {
            const auto norms = sobolev_w1r_norm(f, rs[ri], region);
            rep.field_norms[ti][ri][m] = norms.field_norm;
            rep.gradient_norms[ti][ri][m] = norms.gradient_norm;
        }
    });
    if (!alphas.empty()) {
        rep.holder_pairs = pair_counts[0];
        for (const auto s : subsampled) rep.holder_subsampled = rep.holder_subsampled || s != 0;
    }

    rep.holder_quantiles.assign(
        nt, std::vector<std::vector<double>>(alphas.size(),
                                             std::vector<double>(quantile_levels.size(), 0.0)));
    for (std::size_t ti = 0; ti < nt; ++ti)
        for (std::size_t ai = 0; ai < alphas.size(); ++ai)
            for (std::size_t qi = 0; qi < quantile_levels.size(); ++qi)
                rep.holder_quantiles[ti][ai][qi] =
                    quantile(rep.holder[ti][ai], quantile_levels[qi]);
    return rep;
}

}  // namespace stochflow
