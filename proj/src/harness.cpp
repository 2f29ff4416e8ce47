#include "stochflow/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <utility>

#include "stochflow/csvio.hpp"
#include "stochflow/diagnostics.hpp"
#include "stochflow/flow.hpp"
#include "stochflow/noise.hpp"
#include "stochflow/zvonkin.hpp"

namespace stochflow {
namespace {

using nlohmann::json;

constexpr const char* kVersionTag = "0.1.0";
constexpr int kMollifyLevels[3] = {4, 8, 16};
constexpr int kBaseGridCap = 41;  // per-axis node cap for Monte Carlo base grids

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"shock_demo", "mollify_convergence",
                                                   "zvonkin_verify", "moment_bounds",
                                                   "weak_residual"};
    return names;
}

void require_keys(const json& j, const char* where,
                  std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
        }
    }
}

double get_number(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

int get_int(const json& j, const char* key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number_integer()) {
        throw ConfigError(std::string("'") + key + "' must be an integer");
    }
    return j.at(key).get<int>();
}

std::string get_string(const json& j, const char* key, const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) throw ConfigError(std::string("'") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

std::vector<double> get_number_list(const json& j, const char* key,
                                    const std::vector<double>& fallback) {
    if (!j.contains(key)) return fallback;
    const json& a = j.at(key);
    if (!a.is_array()) throw ConfigError(std::string("'") + key + "' must be an array of numbers");
    std::vector<double> out;
    out.reserve(a.size());
    for (const auto& v : a) {
        if (!v.is_number()) {
            throw ConfigError(std::string("'") + key + "' must be an array of numbers");
        }
        out.push_back(v.get<double>());
    }
    return out;
}

InitialConditionKind ic_kind_from_name(const std::string& name) {
    if (name == "gaussian-bump") return InitialConditionKind::gaussian_bump;
    if (name == "asymmetric-smooth") return InitialConditionKind::asymmetric_smooth;
    if (name == "compact-bump") return InitialConditionKind::compact_bump;
    if (name == "step") return InitialConditionKind::step;
    throw ConfigError("unknown initial condition kind '" + name + "'");
}

json drift_to_json(const DriftSpec& d, int dim) {
    json out;
    out["kind"] = d.kind;
    out["domain_halfwidth"] = d.domain_halfwidth;
    out["horizon"] = d.horizon;
    out["trunc_radius"] = d.trunc_radius;
    if (d.kind == "constant") {
        json c = json::array();
        for (int a = 0; a < dim; ++a) c.push_back(d.constant_c[a]);
        out["constant_c"] = c;
    }
    if (d.kind == "linear") {
        json m = json::array();
        for (int r = 0; r < dim; ++r) {
            json row = json::array();
            for (int c = 0; c < dim; ++c) row.push_back(d.linear_a[r][c]);
            m.push_back(row);
        }
        out["linear_a"] = m;
    }
    return out;
}

DriftSpec drift_from_json(const json& j, int dim) {
    DriftSpec d;
    if (j.is_null()) return d;
    if (!j.is_object()) throw ConfigError("'drift' must be an object");
    require_keys(j, "drift",
                 {"kind", "domain_halfwidth", "horizon", "trunc_radius", "constant_c", "linear_a"});
    d.kind = get_string(j, "kind", d.kind);
    d.domain_halfwidth = get_number(j, "domain_halfwidth", d.domain_halfwidth);
    d.horizon = get_number(j, "horizon", d.horizon);
    d.trunc_radius = get_number(j, "trunc_radius", d.trunc_radius);
    if (j.contains("constant_c")) {
        auto c = get_number_list(j, "constant_c", {});
        if (static_cast<int>(c.size()) != dim) {
            throw ConfigError("'constant_c' must have one entry per grid axis");
        }
        for (int a = 0; a < dim; ++a) d.constant_c[a] = c[a];
    }
    if (j.contains("linear_a")) {
        const json& m = j.at("linear_a");
        if (!m.is_array() || static_cast<int>(m.size()) != dim) {
            throw ConfigError("'linear_a' must be a square matrix matching the grid dimension");
        }
        for (int r = 0; r < dim; ++r) {
            auto row = m.at(r);
            if (!row.is_array() || static_cast<int>(row.size()) != dim) {
                throw ConfigError("'linear_a' must be a square matrix matching the grid dimension");
            }
            for (int c = 0; c < dim; ++c) {
                if (!row.at(c).is_number()) throw ConfigError("'linear_a' entries must be numbers");
                d.linear_a[r][c] = row.at(c).get<double>();
            }
        }
    }
    return d;
}

// Stage wrapper: timings land in the manifest and module errors are rethrown
// as the same type with the failing stage named up front.
template <typename F>
void run_stage(RunManifest& man, const std::string& name, F&& body) {
    auto start = std::chrono::steady_clock::now();
    auto tag = [&name](const char* what) {
        return "stage '" + name + "': " + what;
    };
    try {
        body();
    } catch (const ConfigError& e) {
        throw ConfigError(tag(e.what()));
    } catch (const DomainError& e) {
        throw DomainError(tag(e.what()));
    } catch (const SolverError& e) {
        throw SolverError(tag(e.what()));
    } catch (const EvaluationError& e) {
        throw EvaluationError(tag(e.what()));
    } catch (const ContractError& e) {
        throw ContractError(tag(e.what()));
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    man.stages.push_back({name, secs});
}

std::string output_path(const RunManifest& man, const std::string& name) {
    return (std::filesystem::path(man.output_dir) / name).string();
}

void register_output(RunManifest& man, const std::string& name,
                     const std::vector<std::string>& columns) {
    const std::string path = output_path(man, name);
    OutputFile f;
    f.name = name;
    f.rows = validate_csv(path, columns);
    f.digest = file_digest(path);
    man.outputs.push_back(std::move(f));
}

std::string sanitize_cell(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

std::string format_double(double v) { return format_cell(v); }

std::vector<int> steps_for_times(const ExperimentConfig& config) {
    std::vector<int> steps;
    steps.reserve(config.output_times.size());
    for (double t : config.output_times) {
        steps.push_back(static_cast<int>(std::llround(t / config.dt)));
    }
    return steps;
}

// Deterministic coarse sample of the config grid for Monte Carlo estimates.
std::vector<Vec> coarse_base_nodes(const GridSpec& g) {
    GridSpec coarse = g;
    for (int a = 0; a < g.dim; ++a) coarse.n[a] = std::min(g.n[a], kBaseGridCap);
    return coarse.nodes();
}

void propagate_noise_warnings(RunManifest& man, const NoiseEnsemble& noise) {
    for (const auto& w : noise.warnings) man.warnings.push_back(w);
}

// ---------------------------------------------------------------- shock_demo

void run_shock_demo(const ExperimentConfig& config, RunManifest& man) {
    const int dim = config.grid.dim;
    const DriftField b = config.drift.make(dim);
    const std::vector<int> steps = steps_for_times(config);

    std::vector<double> sigmas{0.0};
    if (config.sigma > 0.0) sigmas.push_back(config.sigma);

    CsvWriter holder(output_path(man, "holder_series.csv"),
                     {"sigma", "t", "alpha", "quantile", "value"});
    CsvWriter sobolev(output_path(man, "sobolev_series.csv"),
                      {"sigma", "t", "r", "quantile", "field_norm", "gradient_norm"});

    bool holder_finite = true;
    bool quantiles_monotone = true;

    for (double sigma_v : sigmas) {
        char label[64];
        std::snprintf(label, sizeof(label), "sigma=%g", sigma_v);

        RepresentationSeries series;
        run_stage(man, std::string("transport ") + label, [&] {
            const int paths = sigma_v == 0.0 ? 1 : config.paths;
            NoiseEnsemble noise = sample_noise(config.seed, paths, dim, config.dt,
                                               config.horizon, config.threads);
            propagate_noise_warnings(man, noise);
            series = representation_series(config.initial_condition, b, sigma_v, config.grid,
                                           noise, steps, config.threads);
            int masked = 0;
            int total = 0;
            for (const auto& per_time : series.fields) {
                for (const auto& field : per_time) {
                    ++total;
                    if (!field.mask.empty()) ++masked;
                }
            }
            if (masked > 0) {
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "escaped trajectories at %s left masked cells in %d of %d fields",
                              label, masked, total);
                man.warnings.push_back(buf);
            }
        });

        run_stage(man, std::string("regularity ") + label, [&] {
            RegularityReport report = build_regularity_report(
                series.fields, series.times(), config.alpha_list, config.r_list, Region::all(),
                config.quantile_levels, config.threads);
            if (report.holder_subsampled) {
                man.warnings.push_back(std::string("pair statistics subsampled at ") + label);
            }
            const auto& times = report.times;
            for (std::size_t ti = 0; ti < times.size(); ++ti) {
                for (std::size_t ai = 0; ai < config.alpha_list.size(); ++ai) {
                    double prev = -std::numeric_limits<double>::infinity();
                    for (std::size_t qi = 0; qi < config.quantile_levels.size(); ++qi) {
                        const double v = report.holder_quantiles[ti][ai][qi];
                        holder.row({sigma_v, times[ti], config.alpha_list[ai],
                                    config.quantile_levels[qi], v});
                        if (!std::isfinite(v)) holder_finite = false;
                        if (v < prev) quantiles_monotone = false;
                        prev = v;
                    }
                }
                for (std::size_t ri = 0; ri < config.r_list.size(); ++ri) {
                    for (double q : config.quantile_levels) {
                        const double fq = quantile(report.field_norms[ti][ri], q);
                        const double gq = quantile(report.gradient_norms[ti][ri], q);
                        sobolev.row({sigma_v, times[ti], config.r_list[ri], q, fq, gq});
                    }
                }
            }
        });
    }

    holder.close();
    sobolev.close();
    register_output(man, "holder_series.csv", {"sigma", "t", "alpha", "quantile", "value"});
    register_output(man, "sobolev_series.csv",
                    {"sigma", "t", "r", "quantile", "field_norm", "gradient_norm"});
    man.verdicts.push_back({"holder-statistics-finite", holder_finite});
    man.verdicts.push_back({"quantiles-monotone", quantiles_monotone});
}

// ------------------------------------------------- mollify moment pipelines

std::vector<DriftField> mollified_sequence(const DriftField& ref) {
    std::vector<DriftField> seq;
    seq.reserve(3);
    for (int n : kMollifyLevels) seq.push_back(mollify_drift(ref, MollifierFamily{}, n));
    return seq;
}

MomentTable moment_table_for(const ExperimentConfig& config, const std::vector<DriftField>& seq,
                             const DriftField& ref, double p_exp, RunManifest& man) {
    const int dim = config.grid.dim;
    FlowParams params;
    params.sigma = config.sigma;
    params.direction = FlowDirection::forward;
    params.threads = config.threads;
    NoiseEnsemble noise = sample_noise(config.seed, config.paths, dim, config.dt, config.horizon,
                                       config.threads);
    propagate_noise_warnings(man, noise);
    // A zero-step backward run carries no information: both flows are still
    // the identity there, so only positive output steps are compared.
    std::vector<int> steps;
    for (int k : steps_for_times(config)) {
        if (k > 0) steps.push_back(k);
    }
    if (steps.empty()) throw ConfigError("output_times must contain a positive time");
    return flow_moment_estimates(seq, ref, params, coarse_base_nodes(config.grid), noise, p_exp,
                                 steps);
}

void warn_unreliable(RunManifest& man, const MomentTable& table, double p_exp) {
    for (const auto& row : table.rows) {
        if (row.unreliable) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "unreliable statistics for %s at p_exp=%g",
                          row.drift_name.c_str(), p_exp);
            man.warnings.push_back(buf);
        }
    }
}

void run_mollify_convergence(const ExperimentConfig& config, RunManifest& man) {
    const DriftField ref = config.drift.make(config.grid.dim);
    std::vector<DriftField> seq;
    run_stage(man, "mollify", [&] { seq = mollified_sequence(ref); });

    MomentTable table;
    run_stage(man, "flow moments", [&] { table = moment_table_for(config, seq, ref, 2.0, man); });
    warn_unreliable(man, table, 2.0);

    const std::vector<std::string> cols = {"n",
                                           "drift_name",
                                           "p_exp",
                                           "convergence_moment",
                                           "convergence_se",
                                           "gradient_moment",
                                           "gradient_se",
                                           "unreliable"};
    CsvWriter csv(output_path(man, "moment_table.csv"), cols);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        csv.row_mixed({std::to_string(kMollifyLevels[i]), sanitize_cell(row.drift_name),
                       format_double(table.p_exp), format_double(row.convergence_moment),
                       format_double(row.convergence_se), format_double(row.gradient_moment),
                       format_double(row.gradient_se), row.unreliable ? "1" : "0"});
    }
    csv.close();
    register_output(man, "moment_table.csv", cols);

    bool nonincreasing = true;
    for (std::size_t i = 0; i + 1 < table.rows.size(); ++i) {
        const auto& a = table.rows[i];
        const auto& b = table.rows[i + 1];
        if (b.convergence_moment > a.convergence_moment + 2.0 * (a.convergence_se + b.convergence_se)) {
            nonincreasing = false;
        }
    }
    bool reliable = true;
    for (const auto& row : table.rows) reliable = reliable && !row.unreliable;
    man.verdicts.push_back({"convergence-moment-nonincreasing", nonincreasing});
    man.verdicts.push_back({"statistics-reliable", reliable});
}

void run_moment_bounds(const ExperimentConfig& config, RunManifest& man) {
    const DriftField ref = config.drift.make(config.grid.dim);
    std::vector<DriftField> seq;
    run_stage(man, "mollify", [&] { seq = mollified_sequence(ref); });

    const std::vector<std::string> cols = {"p_exp",        "n",           "drift_name",
                                           "gradient_moment", "gradient_se", "unreliable"};
    CsvWriter csv(output_path(man, "gradient_moments.csv"), cols);
    bool in_band = true;
    for (double p_exp : {2.0, 4.0}) {
        MomentTable table;
        char label[48];
        std::snprintf(label, sizeof(label), "gradient moments p_exp=%g", p_exp);
        run_stage(man, label, [&] { table = moment_table_for(config, seq, ref, p_exp, man); });
        warn_unreliable(man, table, p_exp);
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            const auto& row = table.rows[i];
            csv.row_mixed({format_double(p_exp), std::to_string(kMollifyLevels[i]),
                           sanitize_cell(row.drift_name), format_double(row.gradient_moment),
                           format_double(row.gradient_se), row.unreliable ? "1" : "0"});
            if (!std::isfinite(row.gradient_moment)) in_band = false;
        }
        for (std::size_t i = 0; i + 1 < table.rows.size(); ++i) {
            const auto& a = table.rows[i];
            const auto& b = table.rows[i + 1];
            if (std::abs(b.gradient_moment - a.gradient_moment) >
                2.0 * (a.gradient_se + b.gradient_se)) {
                in_band = false;
            }
        }
    }
    csv.close();
    register_output(man, "gradient_moments.csv", cols);
    man.verdicts.push_back({"gradient-moment-band", in_band});
}

// ------------------------------------------------------------ zvonkin_verify

void run_zvonkin_verify(const ExperimentConfig& config, RunManifest& man) {
    const int dim = config.grid.dim;
    const DriftField b = config.drift.make(dim);

    PdeGrid pde;
    pde.space = config.grid;
    pde.horizon = config.horizon;
    pde.nt = static_cast<int>(
        std::clamp<long long>(std::llround(config.horizon / config.dt), 50, 4000));

    std::vector<SweepRow> rows;
    run_stage(man, "gradient bound sweep",
              [&] { rows = gradient_bound_sweep(b, config.lambda_list, pde); });
    for (const auto& row : rows) {
        if (!row.solved) {
            man.warnings.push_back("pde solve failed at lambda=" + format_double(row.lambda) +
                                   ": " + row.error);
        }
    }

    const std::vector<std::string> sweep_cols = {"lambda", "sup_grad", "solved", "error"};
    CsvWriter sweep_csv(output_path(man, "lambda_sweep.csv"), sweep_cols);
    for (const auto& row : rows) {
        sweep_csv.row_mixed({format_double(row.lambda), format_double(row.sup_grad),
                             row.solved ? "1" : "0", sanitize_cell(row.error)});
    }
    sweep_csv.close();
    register_output(man, "lambda_sweep.csv", sweep_cols);

    std::optional<double> lambda_star;
    run_stage(man, "lambda star", [&] { lambda_star = find_lambda_star(rows, 0.5); });

    const std::vector<std::string> conj_cols = {"lambda_star",        "conjugacy_max_residual",
                                                "conjugacy_excluded", "qv_mean",
                                                "qv_se",              "qv_max",
                                                "qv_excluded"};
    CsvWriter conj_csv(output_path(man, "conjugacy.csv"), conj_cols);
    bool conj_finite = false;
    if (lambda_star) {
        ZvonkinSolution sol;
        ConjugacyResult conj;
        QuadraticVariationEstimate qv;
        run_stage(man, "conjugacy", [&] {
            sol = solve_backward_pde(b, *lambda_star, pde);
            const int n_starts = dim == 1 ? 9 : 5;
            const std::vector<Vec> starts =
                GridSpec::symmetric(dim, 0.5 * b.domain_halfwidth(), n_starts).nodes();
            const int conj_paths = std::min(config.paths, 64);
            NoiseEnsemble noise = sample_noise(config.seed, conj_paths, dim,
                                               config.horizon / 400.0, config.horizon,
                                               config.threads);
            propagate_noise_warnings(man, noise);
            conj = conjugacy_residual(b, sol, starts, noise, config.sigma, config.threads);
            FlowParams params;
            params.sigma = config.sigma;
            params.direction = FlowDirection::forward;
            params.threads = config.threads;
            FlowEnsemble flow = integrate_flow(b, params, starts, noise);
            qv = quadratic_variation_estimate(sol, flow);
        });
        if (conj.excluded > 0) {
            man.warnings.push_back("conjugacy check excluded " + std::to_string(conj.excluded) +
                                   " escaped cells");
        }
        conj_finite = std::isfinite(conj.max_residual);
        conj_csv.row_mixed({format_double(*lambda_star), format_double(conj.max_residual),
                            std::to_string(conj.excluded), format_double(qv.mean),
                            format_double(qv.se), format_double(qv.max_value),
                            std::to_string(qv.excluded)});
    }
    conj_csv.close();
    register_output(man, "conjugacy.csv", conj_cols);

    bool monotone = true;
    const SweepRow* prev = nullptr;
    for (const auto& row : rows) {
        if (!row.solved) continue;
        if (prev != nullptr && row.sup_grad > prev->sup_grad + 1e-3) monotone = false;
        prev = &row;
    }
    man.verdicts.push_back({"lambda-star-found", lambda_star.has_value()});
    man.verdicts.push_back({"gradient-bound-monotone", monotone});
    man.verdicts.push_back({"conjugacy-residual-finite", conj_finite});
}

// ------------------------------------------------------------- weak_residual

void run_weak_residual(const ExperimentConfig& config, RunManifest& man) {
    const int dim = config.grid.dim;
    const DriftField b = config.drift.make(dim);
    const double t_star = config.output_times.back();
    const int fine_steps = static_cast<int>(std::llround(t_star / config.dt));

    run_stage(man, "refinement plan", [&] {
        if (t_star <= 0.0) throw ConfigError("final output time must be positive");
        if (fine_steps % 4 != 0) {
            throw ConfigError("final output time must span a step count divisible by 4");
        }
        for (int a = 0; a < dim; ++a) {
            if ((config.grid.n[a] - 1) % 4 != 0) {
                throw ConfigError("grid cells per axis must be divisible by 4");
            }
        }
    });

    TestFunction chi;
    chi.dim = dim;
    double min_halfwidth = std::numeric_limits<double>::infinity();
    for (int a = 0; a < dim; ++a) {
        chi.center[a] = 0.5 * (config.grid.lo[a] + config.grid.hi[a]);
        min_halfwidth = std::min(min_halfwidth, 0.5 * (config.grid.hi[a] - config.grid.lo[a]));
    }
    chi.width = 0.35 * min_halfwidth;

    NoiseEnsemble fine = sample_noise(config.seed, config.paths, dim, config.dt, t_star,
                                      config.threads);
    propagate_noise_warnings(man, fine);

    const std::vector<std::string> cols = {"level", "dt", "nodes", "path", "residual"};
    CsvWriter csv(output_path(man, "weak_residual.csv"), cols);
    std::vector<double> medians;
    std::vector<double> dts;
    for (int level = 0; level < 3; ++level) {
        const int factor = 4 >> level;  // 4, 2, 1
        char label[48];
        std::snprintf(label, sizeof(label), "residual level %d", level);
        run_stage(man, label, [&] {
            const NoiseEnsemble& noise_l = factor == 1 ? fine : fine.coarsened(factor);
            GridSpec grid_l = config.grid;
            for (int a = 0; a < dim; ++a) grid_l.n[a] = (config.grid.n[a] - 1) / factor + 1;
            const int k_l = fine_steps / factor;
            std::vector<int> ladder_steps(k_l + 1);
            for (int k = 0; k <= k_l; ++k) ladder_steps[k] = k;
            RepresentationSeries series =
                representation_series(config.initial_condition, b, config.sigma, grid_l, noise_l,
                                      ladder_steps, config.threads);
            std::vector<double> residuals(series.fields[0].size());
            for (std::size_t m = 0; m < residuals.size(); ++m) {
                std::vector<ScalarFieldGrid> ladder;
                ladder.reserve(series.fields.size());
                for (const auto& per_time : series.fields) ladder.push_back(per_time[m]);
                residuals[m] = weak_form_residual(ladder, b, config.sigma,
                                                  config.initial_condition, chi, noise_l,
                                                  static_cast<int>(m), k_l);
                csv.row({static_cast<double>(level), noise_l.dt,
                         static_cast<double>(grid_l.size()), static_cast<double>(m),
                         residuals[m]});
            }
            medians.push_back(median(residuals));
            dts.push_back(noise_l.dt);
        });
    }
    csv.close();
    register_output(man, "weak_residual.csv", cols);

    if (config.sigma > 0.0) {
        bool decreasing = true;
        for (std::size_t i = 0; i + 1 < medians.size(); ++i) {
            if (medians[i + 1] >= medians[i]) decreasing = false;
        }
        man.verdicts.push_back({"residual-median-decreasing", decreasing});
    } else {
        bool order_ok = true;
        std::vector<double> log_dt;
        std::vector<double> log_med;
        for (std::size_t i = 0; i < medians.size(); ++i) {
            if (medians[i] <= 0.0) order_ok = false;
            else {
                log_dt.push_back(std::log(dts[i]));
                log_med.push_back(std::log(medians[i]));
            }
        }
        if (order_ok) order_ok = fit_slope(log_dt, log_med) >= 1.0;
        man.verdicts.push_back({"residual-order-at-least-one", order_ok});
    }
}

}  // namespace

// ----------------------------------------------------------------- DriftSpec

void DriftSpec::validate() const {
    if (kind != "zero" && kind != "constant" && kind != "linear" && kind != "coalescing") {
        throw ConfigError("unknown drift kind '" + kind + "'");
    }
    if (!(domain_halfwidth > 0.0) || !std::isfinite(domain_halfwidth)) {
        throw ConfigError("drift domain_halfwidth must be positive");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw ConfigError("drift horizon must be positive");
    }
    if (trunc_radius < 0.0 || !std::isfinite(trunc_radius)) {
        throw ConfigError("drift trunc_radius must be zero (default) or positive");
    }
}

DriftField DriftSpec::make(int dim) const {
    validate();
    if (kind == "zero") return DriftField::zero(dim, domain_halfwidth, horizon);
    if (kind == "constant") {
        const double tr = trunc_radius > 0.0 ? trunc_radius
                                             : std::numeric_limits<double>::infinity();
        return DriftField::constant(dim, domain_halfwidth, horizon, constant_c, tr);
    }
    if (kind == "linear") {
        const double tr = trunc_radius > 0.0 ? trunc_radius
                                             : std::numeric_limits<double>::infinity();
        return DriftField::linear(dim, domain_halfwidth, horizon, linear_a, tr);
    }
    const double tr = trunc_radius > 0.0 ? trunc_radius : 1.0;
    return DriftField::coalescing(dim, domain_halfwidth, horizon, tr);
}

// ---------------------------------------------------------- ExperimentConfig

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");
    require_keys(j, "config",
                 {"experiment", "seed", "threads", "output_dir", "sigma", "drift",
                  "initial_condition", "grid", "dt", "horizon", "paths", "lambda_list",
                  "alpha_list", "r_list", "output_times", "quantile_levels"});
    if (!j.contains("experiment")) throw ConfigError("'experiment' is required");
    if (!j.contains("seed")) throw ConfigError("'seed' is required");
    if (!j.at("seed").is_number_integer() ||
        (j.at("seed").is_number_integer() && !j.at("seed").is_number_unsigned() &&
         j.at("seed").get<long long>() < 0)) {
        throw ConfigError("'seed' must be a nonnegative integer");
    }

    ExperimentConfig cfg;
    cfg.experiment = get_string(j, "experiment", "");
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.threads = get_int(j, "threads", cfg.threads);
    cfg.output_dir = get_string(j, "output_dir", cfg.output_dir);
    cfg.sigma = get_number(j, "sigma", cfg.sigma);
    cfg.dt = get_number(j, "dt", cfg.dt);
    cfg.horizon = get_number(j, "horizon", cfg.horizon);
    cfg.paths = get_int(j, "paths", cfg.paths);
    cfg.lambda_list = get_number_list(j, "lambda_list", cfg.lambda_list);
    cfg.alpha_list = get_number_list(j, "alpha_list", cfg.alpha_list);
    cfg.r_list = get_number_list(j, "r_list", cfg.r_list);
    cfg.output_times = get_number_list(j, "output_times", cfg.output_times);
    cfg.quantile_levels = get_number_list(j, "quantile_levels", cfg.quantile_levels);

    if (j.contains("grid")) {
        const json& g = j.at("grid");
        if (!g.is_object()) throw ConfigError("'grid' must be an object");
        require_keys(g, "grid", {"dim", "lo", "hi", "n"});
        GridSpec grid;
        grid.dim = get_int(g, "dim", 1);
        if (grid.dim < 1 || grid.dim > 2) throw ConfigError("'grid.dim' must be 1 or 2");
        auto lo = get_number_list(g, "lo", {});
        auto hi = get_number_list(g, "hi", {});
        const json& n = g.contains("n") ? g.at("n") : json::array();
        if (static_cast<int>(lo.size()) != grid.dim || static_cast<int>(hi.size()) != grid.dim ||
            !n.is_array() || static_cast<int>(n.size()) != grid.dim) {
            throw ConfigError("'grid' lo/hi/n must each have one entry per axis");
        }
        for (int a = 0; a < grid.dim; ++a) {
            grid.lo[a] = lo[a];
            grid.hi[a] = hi[a];
            if (!n.at(a).is_number_integer()) throw ConfigError("'grid.n' must hold integers");
            grid.n[a] = n.at(a).get<int>();
        }
        cfg.grid = grid;
    }

    cfg.drift = drift_from_json(j.contains("drift") ? j.at("drift") : json(), cfg.grid.dim);

    if (j.contains("initial_condition")) {
        const json& ic = j.at("initial_condition");
        if (!ic.is_object()) throw ConfigError("'initial_condition' must be an object");
        require_keys(ic, "initial_condition", {"kind", "center", "width", "amplitude"});
        cfg.initial_condition.kind =
            ic_kind_from_name(get_string(ic, "kind", "gaussian-bump"));
        auto center = get_number_list(ic, "center", {});
        if (!center.empty()) {
            if (static_cast<int>(center.size()) != cfg.grid.dim) {
                throw ConfigError("'initial_condition.center' must match the grid dimension");
            }
            for (int a = 0; a < cfg.grid.dim; ++a) cfg.initial_condition.center[a] = center[a];
        }
        cfg.initial_condition.width = get_number(ic, "width", cfg.initial_condition.width);
        cfg.initial_condition.amplitude =
            get_number(ic, "amplitude", cfg.initial_condition.amplitude);
    }
    cfg.initial_condition.dim = cfg.grid.dim;

    cfg.validate();
    return cfg;
}

std::string ExperimentConfig::to_json_text() const {
    json j;
    j["experiment"] = experiment;
    j["seed"] = seed;
    j["threads"] = threads;
    j["output_dir"] = output_dir;
    j["sigma"] = sigma;
    j["dt"] = dt;
    j["horizon"] = horizon;
    j["paths"] = paths;
    j["lambda_list"] = lambda_list;
    j["alpha_list"] = alpha_list;
    j["r_list"] = r_list;
    j["output_times"] = output_times;
    j["quantile_levels"] = quantile_levels;
    j["drift"] = drift_to_json(drift, grid.dim);

    json ic;
    ic["kind"] = initial_condition.kind_name();
    json center = json::array();
    for (int a = 0; a < grid.dim; ++a) center.push_back(initial_condition.center[a]);
    ic["center"] = center;
    ic["width"] = initial_condition.width;
    ic["amplitude"] = initial_condition.amplitude;
    j["initial_condition"] = ic;

    json g;
    g["dim"] = grid.dim;
    json lo = json::array();
    json hi = json::array();
    json n = json::array();
    for (int a = 0; a < grid.dim; ++a) {
        lo.push_back(grid.lo[a]);
        hi.push_back(grid.hi[a]);
        n.push_back(grid.n[a]);
    }
    g["lo"] = lo;
    g["hi"] = hi;
    g["n"] = n;
    j["grid"] = g;

    return j.dump();
}

std::uint64_t ExperimentConfig::config_hash() const { return fnv1a64(to_json_text()); }

void ExperimentConfig::validate() const {
    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), experiment) == names.end()) {
        throw ConfigError("unknown experiment '" + experiment + "'");
    }
    if (threads < 1 || threads > 256) throw ConfigError("'threads' must be in [1, 256]");
    if (output_dir.empty()) throw ConfigError("'output_dir' must not be empty");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("'sigma' must be >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("'dt' must be positive");
    if (!(horizon >= dt)) throw ConfigError("'horizon' must be at least dt");
    if (paths < 1) throw ConfigError("'paths' must be >= 1");
    grid.validate();
    drift.validate();
    initial_condition.validate();
    if (initial_condition.dim != grid.dim) {
        throw ConfigError("initial condition dimension must match the grid");
    }
    if (drift.horizon + 1e-12 < horizon) {
        throw ConfigError("drift horizon must cover the run horizon");
    }
    if (alpha_list.empty()) throw ConfigError("'alpha_list' must not be empty");
    for (double a : alpha_list) {
        if (!(a > 0.0) || a > 1.0) throw ConfigError("'alpha_list' entries must lie in (0, 1]");
    }
    if (r_list.empty()) throw ConfigError("'r_list' must not be empty");
    for (double r : r_list) {
        if (!(r >= 1.0)) throw ConfigError("'r_list' entries must be >= 1");
    }
    if (lambda_list.empty()) throw ConfigError("'lambda_list' must not be empty");
    for (std::size_t i = 0; i < lambda_list.size(); ++i) {
        if (!(lambda_list[i] > 0.0)) throw ConfigError("'lambda_list' entries must be positive");
        if (i > 0 && lambda_list[i] <= lambda_list[i - 1]) {
            throw ConfigError("'lambda_list' must be strictly increasing");
        }
    }
    if (quantile_levels.empty()) throw ConfigError("'quantile_levels' must not be empty");
    for (std::size_t i = 0; i < quantile_levels.size(); ++i) {
        if (quantile_levels[i] < 0.0 || quantile_levels[i] > 1.0) {
            throw ConfigError("'quantile_levels' entries must lie in [0, 1]");
        }
        if (i > 0 && quantile_levels[i] <= quantile_levels[i - 1]) {
            throw ConfigError("'quantile_levels' must be strictly increasing");
        }
    }
    if (output_times.empty()) throw ConfigError("'output_times' must not be empty");
    for (std::size_t i = 0; i < output_times.size(); ++i) {
        const double t = output_times[i];
        if (t < 0.0) throw ConfigError("'output_times' entries must be >= 0");
        if (i > 0 && t <= output_times[i - 1]) {
            throw ConfigError("'output_times' must be strictly increasing");
        }
        if (t > horizon + 1e-9) throw ConfigError("'output_times' must not exceed the horizon");
        const double snapped = std::llround(t / dt) * dt;
        if (std::abs(snapped - t) > 1e-9 * std::max(1.0, std::abs(t))) {
            throw ConfigError("'output_times' entries must be integer multiples of dt");
        }
    }
}

// ---------------------------------------------------------------- manifests

bool RunManifest::all_pass() const {
    if (verdicts.empty()) return false;
    for (const auto& v : verdicts) {
        if (!v.pass) return false;
    }
    return true;
}

std::string RunManifest::to_json_text() const {
    json j;
    j["config_hash"] = to_hex(config_hash);
    j["version_tag"] = version_tag;
    j["experiment"] = experiment;
    j["output_dir"] = output_dir;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["all_pass"] = all_pass();
    json st = json::array();
    for (const auto& s : stages) st.push_back({{"name", s.name}, {"seconds", s.seconds}});
    j["stages"] = st;
    j["warnings"] = warnings;
    json outs = json::array();
    for (const auto& o : outputs) {
        outs.push_back({{"name", o.name}, {"rows", o.rows}, {"digest", to_hex(o.digest)}});
    }
    j["outputs"] = outs;
    json vs = json::array();
    for (const auto& v : verdicts) vs.push_back({{"name", v.name}, {"pass", v.pass}});
    j["verdicts"] = vs;
    return j.dump(2) + "\n";
}

std::vector<std::string> catalog_experiments() { return experiment_names(); }

std::vector<std::string> catalog_drifts() { return {"zero", "constant", "linear", "coalescing"}; }

std::vector<std::string> catalog_initial_conditions() {
    return {"gaussian-bump", "asymmetric-smooth", "compact-bump", "step"};
}

RunManifest run_experiment(const ExperimentConfig& config) {
    config.validate();
    std::filesystem::create_directories(config.output_dir);

    RunManifest man;
    man.config_hash = config.config_hash();
    man.version_tag = kVersionTag;
    man.experiment = config.experiment;
    man.output_dir = config.output_dir;

    const auto start = std::chrono::steady_clock::now();
    if (config.experiment == "shock_demo") {
        run_shock_demo(config, man);
    } else if (config.experiment == "mollify_convergence") {
        run_mollify_convergence(config, man);
    } else if (config.experiment == "zvonkin_verify") {
        run_zvonkin_verify(config, man);
    } else if (config.experiment == "moment_bounds") {
        run_moment_bounds(config, man);
    } else {
        run_weak_residual(config, man);
    }
    man.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    write_text_file(output_path(man, "manifest.json"), man.to_json_text());
    return man;
}

std::string emit_report(const RunManifest& manifest) {
    for (const auto& o : manifest.outputs) {
        const std::string path = output_path(manifest, o.name);
        if (!file_exists(path)) throw ContractError("missing output file: " + o.name);
        if (file_digest(path) != o.digest) {
            throw ContractError("output digest mismatch: " + o.name);
        }
    }

    std::string text;
    text += "experiment: " + manifest.experiment + "\n";
    text += "config hash: " + to_hex(manifest.config_hash) + "\n";
    text += "version: " + manifest.version_tag + "\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "wall clock: %.2f s\n", manifest.wall_clock_seconds);
    text += buf;
    text += "\nstages:\n";
    for (const auto& s : manifest.stages) {
        std::snprintf(buf, sizeof(buf), "  %s: %.2f s\n", s.name.c_str(), s.seconds);
        text += buf;
    }
    std::snprintf(buf, sizeof(buf), "\n%zu warnings\n", manifest.warnings.size());
    text += buf;
    for (const auto& w : manifest.warnings) text += "  ! " + w + "\n";
    text += "\noutputs:\n";
    for (const auto& o : manifest.outputs) {
        std::snprintf(buf, sizeof(buf), "  %s: %zu rows, digest %s\n", o.name.c_str(), o.rows,
                      to_hex(o.digest).c_str());
        text += buf;
    }
    text += "\nverdicts:\n";
    for (const auto& v : manifest.verdicts) {
        text += "  " + v.name + ": " + (v.pass ? "PASS" : "FAIL") + "\n";
    }
    text += std::string("\noverall: ") + (manifest.all_pass() ? "PASS" : "FAIL") + "\n";

    write_text_file(output_path(manifest, "report.txt"), text);
    return text;
}

}  // namespace stochflow
