#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stochflow/common.hpp"
#include "stochflow/drift.hpp"
#include "stochflow/grid.hpp"
#include "stochflow/transport.hpp"

namespace stochflow {

/// Catalog-addressable drift description; `make(dim)` builds the field with
/// the run's spatial dimension. trunc_radius 0 picks the kind's default
/// (coalescing: 1, constant/linear: none).
struct DriftSpec {
    std::string kind = "coalescing";  // zero | constant | linear | coalescing
    double domain_halfwidth = 2.0;
    double horizon = 2.0;
    double trunc_radius = 0.0;
    Vec constant_c{};  // constant kind only
    Mat2 linear_a{};   // linear kind only

    void validate() const;
    DriftField make(int dim) const;
};

/// One experiment run, parsed from a single JSON document. Unknown keys are
/// rejected and the seed is never defaulted.
struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output_dir = "out";
    double sigma = 1.0;
    DriftSpec drift;
    InitialConditionSpec initial_condition;
    GridSpec grid = GridSpec::line(-2.0, 2.0, 401);
    double dt = 1e-3;
    double horizon = 2.0;
    int paths = 200;
    std::vector<double> lambda_list{0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
    std::vector<double> alpha_list{0.9};
    std::vector<double> r_list{2.0};
    std::vector<double> output_times{0.0, 0.5, 1.0, 1.5, 2.0};
    std::vector<double> quantile_levels{0.1, 0.5, 0.9};

    static ExperimentConfig from_json_text(const std::string& text);
    /// Canonical serialization: sorted keys, fixed layout. Hash input.
    std::string to_json_text() const;
    std::uint64_t config_hash() const;
    void validate() const;
};

struct StageTiming {
    std::string name;
    double seconds = 0.0;
};

struct OutputFile {
    std::string name;  // relative to the output directory
    std::size_t rows = 0;
    std::uint64_t digest = 0;
};

struct Verdict {
    std::string name;
    bool pass = false;
};

struct RunManifest {
    std::uint64_t config_hash = 0;
    std::string version_tag;
    std::string experiment;
    std::string output_dir;
    double wall_clock_seconds = 0.0;
    std::vector<StageTiming> stages;
    std::vector<std::string> warnings;
    std::vector<OutputFile> outputs;
    std::vector<Verdict> verdicts;

    bool all_pass() const;
    std::string to_json_text() const;
};

std::vector<std::string> catalog_experiments();
std::vector<std::string> catalog_drifts();
std::vector<std::string> catalog_initial_conditions();

/// Runs the named pipeline, emits its CSV outputs and manifest.json into the
/// configured directory, and returns the manifest. Outputs are byte-identical
/// for identical configs; module errors carry the failing stage in their
/// message.
RunManifest run_experiment(const ExperimentConfig& config);

/// Renders the human-readable summary, writes it as report.txt next to the
/// other outputs, and returns the text. Demands every manifest output still
/// exist with a matching digest.
std::string emit_report(const RunManifest& manifest);

}  // namespace stochflow
