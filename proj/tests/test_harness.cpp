#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "stochflow/csvio.hpp"
#include "stochflow/harness.hpp"

using namespace stochflow;
namespace fs = std::filesystem;

namespace {

fs::path repo_root() { return fs::path(__FILE__).parent_path().parent_path(); }

fs::path fresh_out_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "stochflow_harness_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string first_line(const fs::path& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    return line;
}

ExperimentConfig tiny_weak_residual(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.experiment = "weak_residual";
    cfg.seed = 404;
    cfg.threads = 1;
    cfg.output_dir = out_dir;
    cfg.sigma = 1.0;
    cfg.drift.kind = "constant";
    cfg.drift.horizon = 0.05;
    cfg.drift.constant_c[0] = 0.7;
    cfg.grid = GridSpec::line(-2.0, 2.0, 101);
    cfg.dt = 0.002;
    cfg.horizon = 0.04;
    cfg.paths = 10;
    cfg.output_times = {0.0, 0.04};
    return cfg;
}

ExperimentConfig tiny_shock_demo(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.experiment = "shock_demo";
    cfg.seed = 5;
    cfg.threads = 2;
    cfg.output_dir = out_dir;
    cfg.sigma = 1.0;
    cfg.initial_condition.kind = InitialConditionKind::asymmetric_smooth;
    cfg.grid = GridSpec::line(-2.0, 2.0, 101);
    cfg.dt = 0.01;
    cfg.horizon = 0.2;
    cfg.paths = 6;
    cfg.output_times = {0.0, 0.1, 0.2};
    return cfg;
}

const OutputFile& find_output(const RunManifest& man, const std::string& name) {
    for (const auto& o : man.outputs) {
        if (o.name == name) return o;
    }
    REQUIRE(false);
    return man.outputs.front();
}

}  // namespace

TEST_CASE("config defaults and round trip") {
    const auto cfg = ExperimentConfig::from_json_text(R"({"experiment":"shock_demo","seed":42})");
    CHECK(cfg.experiment == "shock_demo");
    CHECK(cfg.seed == 42);
    CHECK(cfg.threads == 1);
    CHECK(cfg.sigma == 1.0);
    CHECK(cfg.grid.n[0] == 401);
    CHECK(cfg.initial_condition.dim == 1);
    CHECK(cfg.paths == 200);
    CHECK(cfg.output_times.size() == 5);

    const std::string text = cfg.to_json_text();
    const auto again = ExperimentConfig::from_json_text(text);
    CHECK(again.to_json_text() == text);
    CHECK(again.config_hash() == cfg.config_hash());

    auto other = cfg;
    other.seed = 43;
    CHECK(other.config_hash() != cfg.config_hash());
}

TEST_CASE("config requires a seed") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(R"({"experiment":"shock_demo"})"),
                         doctest::Contains("seed"), ConfigError);
    CHECK_THROWS_AS(
        ExperimentConfig::from_json_text(R"({"experiment":"shock_demo","seed":-3})"),
        ConfigError);
    CHECK_THROWS_AS(
        ExperimentConfig::from_json_text(R"({"experiment":"shock_demo","seed":1.5})"),
        ConfigError);
}

TEST_CASE("config rejects unknown experiment names") {
    CHECK_THROWS_WITH_AS(
        ExperimentConfig::from_json_text(R"({"experiment":"frobnicate","seed":1})"),
        doctest::Contains("unknown experiment"), ConfigError);
}

TEST_CASE("config rejects unknown keys at every level") {
    CHECK_THROWS_WITH_AS(
        ExperimentConfig::from_json_text(R"({"experiment":"shock_demo","seed":1,"spin":3})"),
        doctest::Contains("spin"), ConfigError);
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(
                             R"({"experiment":"shock_demo","seed":1,"drift":{"mass":2}})"),
                         doctest::Contains("mass"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                        R"({"experiment":"shock_demo","seed":1,"initial_condition":{"phase":0}})"),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                        R"({"experiment":"shock_demo","seed":1,"grid":{"stride":2}})"),
                    ConfigError);
}

TEST_CASE("config rejects invalid field values") {
    auto parse = [](const std::string& extra) {
        return ExperimentConfig::from_json_text(R"({"experiment":"shock_demo","seed":1,)" +
                                                extra + "}");
    };
    CHECK_THROWS_AS(parse(R"("dt":0)"), ConfigError);
    CHECK_THROWS_AS(parse(R"("sigma":-1)"), ConfigError);
    CHECK_THROWS_AS(parse(R"("paths":0)"), ConfigError);
    CHECK_THROWS_AS(parse(R"("threads":0)"), ConfigError);
    CHECK_THROWS_AS(parse(R"("output_dir":"")"), ConfigError);
    CHECK_THROWS_AS(parse(R"("grid":{"dim":3})"), ConfigError);
    CHECK_THROWS_AS(parse(R"("alpha_list":[1.5])"), ConfigError);
    CHECK_THROWS_AS(parse(R"("r_list":[0.5])"), ConfigError);
    CHECK_THROWS_AS(parse(R"("lambda_list":[2.0,1.0])"), ConfigError);
    CHECK_THROWS_AS(parse(R"("quantile_levels":[0.9,0.1])"), ConfigError);
    CHECK_THROWS_AS(parse(R"("output_times":[0.0,3.5])"), ConfigError);
    // off the dt ladder
    CHECK_THROWS_WITH_AS(parse(R"("output_times":[0.0015])"), doctest::Contains("multiple"),
                         ConfigError);
    // drift horizon shorter than the run
    CHECK_THROWS_AS(parse(R"("drift":{"horizon":1.0})"), ConfigError);
    // constant_c sized against the grid dimension
    CHECK_THROWS_AS(parse(R"("drift":{"kind":"constant","constant_c":[1.0,2.0]})"), ConfigError);
}

TEST_CASE("catalog names") {
    const auto exps = catalog_experiments();
    CHECK(exps.size() == 5);
    CHECK(std::find(exps.begin(), exps.end(), "weak_residual") != exps.end());
    const auto drifts = catalog_drifts();
    CHECK(drifts.size() == 4);
    CHECK(std::find(drifts.begin(), drifts.end(), "coalescing") != drifts.end());
    const auto ics = catalog_initial_conditions();
    CHECK(ics.size() == 4);
    CHECK(std::find(ics.begin(), ics.end(), "asymmetric-smooth") != ics.end());
}

TEST_CASE("shipped config files parse and validate") {
    for (const auto& name : catalog_experiments()) {
        const fs::path path = repo_root() / "configs" / (name + ".json");
        CAPTURE(path.string());
        REQUIRE(fs::exists(path));
        const auto cfg = ExperimentConfig::from_json_text(read_text_file(path.string()));
        CHECK(cfg.experiment == name);
    }
}

TEST_CASE("schema document matches the accepted keys") {
    const fs::path path = repo_root() / "docs" / "config_schema.json";
    REQUIRE(fs::exists(path));
    const auto schema = nlohmann::json::parse(read_text_file(path.string()));
    CHECK(schema.at("additionalProperties") == false);
    const std::set<std::string> required(schema.at("required").begin(),
                                         schema.at("required").end());
    CHECK(required == std::set<std::string>{"experiment", "seed"});

    const std::set<std::string> accepted = {
        "experiment", "seed",        "threads",     "output_dir",   "sigma",
        "drift",      "initial_condition", "grid",   "dt",           "horizon",
        "paths",      "lambda_list", "alpha_list",  "r_list",       "output_times",
        "quantile_levels"};
    std::set<std::string> published;
    for (auto it = schema.at("properties").begin(); it != schema.at("properties").end(); ++it) {
        published.insert(it.key());
    }
    CHECK(published == accepted);
    for (const char* def : {"drift", "initial_condition", "grid"}) {
        CHECK(schema.at("definitions").at(def).at("additionalProperties") == false);
    }
}

TEST_CASE("identical configs give identical output digests across runs and threads") {
    const auto dir_a = fresh_out_dir("det_a");
    const auto dir_b = fresh_out_dir("det_b");
    const auto dir_c = fresh_out_dir("det_c");

    auto cfg_a = tiny_weak_residual(dir_a.string());
    auto cfg_b = tiny_weak_residual(dir_b.string());
    auto cfg_c = tiny_weak_residual(dir_c.string());
    cfg_c.threads = 3;

    const auto man_a = run_experiment(cfg_a);
    const auto man_a2 = run_experiment(cfg_a);
    const auto man_b = run_experiment(cfg_b);
    const auto man_c = run_experiment(cfg_c);

    REQUIRE(man_a.outputs.size() == 1);
    CHECK(man_a.outputs[0].name == "weak_residual.csv");
    CHECK(man_a.config_hash == man_a2.config_hash);
    CHECK(man_a.outputs[0].digest == man_a2.outputs[0].digest);
    // the result bytes do not depend on where they land or how many threads ran
    CHECK(man_a.outputs[0].digest == man_b.outputs[0].digest);
    CHECK(man_a.outputs[0].digest == man_c.outputs[0].digest);
    CHECK(man_a.outputs[0].rows == man_b.outputs[0].rows);
    // output_dir and thread count are part of the config identity
    CHECK(man_a.config_hash != man_b.config_hash);
    CHECK(man_a.config_hash != man_c.config_hash);
    CHECK(fs::exists(dir_a / "manifest.json"));
}

TEST_CASE("shock_demo emits one series row per sigma, time, quantile") {
    const auto dir = fresh_out_dir("shock");
    const auto cfg = tiny_shock_demo(dir.string());
    const auto man = run_experiment(cfg);

    const auto& holder = find_output(man, "holder_series.csv");
    CHECK(holder.rows == 2 * 3 * 3);
    CHECK(first_line(dir / "holder_series.csv") == "sigma,t,alpha,quantile,value");
    const auto& sobolev = find_output(man, "sobolev_series.csv");
    CHECK(sobolev.rows == 2 * 3 * 3);
    CHECK(first_line(dir / "sobolev_series.csv") ==
          "sigma,t,r,quantile,field_norm,gradient_norm");

    REQUIRE(man.verdicts.size() == 2);
    CHECK(man.verdicts[0].name == "holder-statistics-finite");
    CHECK(man.verdicts[1].name == "quantiles-monotone");
    CHECK(man.all_pass());

    const auto parsed = nlohmann::json::parse(read_text_file((dir / "manifest.json").string()));
    CHECK(parsed.at("config_hash").get<std::string>() == to_hex(cfg.config_hash()));
    CHECK(parsed.at("version_tag").get<std::string>() == man.version_tag);
    CHECK(parsed.at("outputs").size() == 2);
}

TEST_CASE("emit_report renders warnings, verdicts, and guards digests") {
    const auto dir = fresh_out_dir("report");
    const auto cfg = tiny_weak_residual(dir.string());
    const auto man = run_experiment(cfg);
    REQUIRE(man.warnings.empty());

    const std::string report = emit_report(man);
    CHECK(report.find("0 warnings") != std::string::npos);
    CHECK(report.find("config hash: " + to_hex(man.config_hash)) != std::string::npos);
    for (const auto& v : man.verdicts) {
        CHECK(report.find(v.name) != std::string::npos);
    }
    CHECK(report.find(man.all_pass() ? "overall: PASS" : "overall: FAIL") != std::string::npos);
    CHECK(read_text_file((dir / "report.txt").string()) == report);

    // a warning is surfaced verbatim
    auto warned = man;
    warned.warnings.push_back("unreliable statistics at cell 7");
    const std::string warned_report = emit_report(warned);
    CHECK(warned_report.find("1 warnings") != std::string::npos);
    CHECK(warned_report.find("unreliable statistics at cell 7") != std::string::npos);

    // tampered output: digest mismatch
    {
        std::ofstream app(dir / "weak_residual.csv", std::ios::app);
        app << "tampered\n";
    }
    CHECK_THROWS_WITH_AS(emit_report(man), doctest::Contains("digest"), ContractError);
    // missing output
    fs::remove(dir / "weak_residual.csv");
    CHECK_THROWS_WITH_AS(emit_report(man), doctest::Contains("missing"), ContractError);
}

TEST_CASE("zvonkin_verify finds a damping level and checks conjugacy") {
    const auto dir = fresh_out_dir("zvonkin");
    ExperimentConfig cfg;
    cfg.experiment = "zvonkin_verify";
    cfg.seed = 3;
    cfg.threads = 2;
    cfg.output_dir = dir.string();
    cfg.grid = GridSpec::line(-2.0, 2.0, 101);
    cfg.dt = 0.01;
    cfg.horizon = 2.0;
    cfg.paths = 8;
    cfg.lambda_list = {1.0, 4.0, 16.0, 32.0};
    const auto man = run_experiment(cfg);

    CHECK(find_output(man, "lambda_sweep.csv").rows == 4);
    CHECK(find_output(man, "conjugacy.csv").rows == 1);
    REQUIRE(man.verdicts.size() == 3);
    CHECK(man.verdicts[0].name == "lambda-star-found");
    CHECK(man.verdicts[1].name == "gradient-bound-monotone");
    CHECK(man.verdicts[2].name == "conjugacy-residual-finite");
    CHECK(man.all_pass());

    bool saw_sweep_stage = false;
    for (const auto& s : man.stages) saw_sweep_stage = saw_sweep_stage || s.name == "gradient bound sweep";
    CHECK(saw_sweep_stage);
}

TEST_CASE("mollify_convergence emits one table row per scale") {
    const auto dir = fresh_out_dir("mollify");
    ExperimentConfig cfg;
    cfg.experiment = "mollify_convergence";
    cfg.seed = 9;
    cfg.threads = 2;
    cfg.output_dir = dir.string();
    cfg.grid = GridSpec::line(-2.0, 2.0, 41);
    cfg.dt = 0.01;
    cfg.horizon = 0.5;
    cfg.paths = 32;
    cfg.output_times = {0.0, 0.25, 0.5};
    const auto man = run_experiment(cfg);

    CHECK(find_output(man, "moment_table.csv").rows == 3);
    REQUIRE(man.verdicts.size() == 2);
    CHECK(man.verdicts[0].name == "convergence-moment-nonincreasing");
    CHECK(man.verdicts[1].name == "statistics-reliable");
    CHECK(man.all_pass());
}

TEST_CASE("moment_bounds tabulates both gradient exponents") {
    const auto dir = fresh_out_dir("moments");
    ExperimentConfig cfg;
    cfg.experiment = "moment_bounds";
    cfg.seed = 13;
    cfg.threads = 2;
    cfg.output_dir = dir.string();
    cfg.grid = GridSpec::line(-2.0, 2.0, 41);
    cfg.dt = 0.01;
    cfg.horizon = 0.5;
    cfg.paths = 32;
    cfg.output_times = {0.0, 0.25, 0.5};
    const auto man = run_experiment(cfg);

    CHECK(find_output(man, "gradient_moments.csv").rows == 6);
    REQUIRE(man.verdicts.size() == 1);
    CHECK(man.verdicts[0].name == "gradient-moment-band");
    CHECK(first_line(fs::path(dir) / "gradient_moments.csv") ==
          "p_exp,n,drift_name,gradient_moment,gradient_se,unreliable");
}

TEST_CASE("csv writer enforces shape and separators") {
    const auto dir = fresh_out_dir("csv");
    const std::string path = (dir / "t.csv").string();
    {
        CsvWriter w(path, {"a", "b"});
        w.row({1.0, 2.5});
        w.row_mixed({"x", "y"});
        CHECK_THROWS_AS(w.row({1.0}), ContractError);
        CHECK_THROWS_AS(w.row_mixed({"u,v", "w"}), ContractError);
        w.close();
        CHECK_THROWS_AS(w.row({1.0, 2.0}), ContractError);
        CHECK(w.rows_written() == 2);
    }
    CHECK(validate_csv(path, {"a", "b"}) == 2);
    CHECK_THROWS_AS(validate_csv(path, {"a", "c"}), ContractError);
    CHECK_THROWS_AS(validate_csv((dir / "absent.csv").string(), {"a"}), ContractError);

    const std::uint64_t d1 = file_digest(path);
    CHECK(d1 == file_digest(path));
    write_text_file(path, "a,b\n1,2\n");
    CHECK(file_digest(path) != d1);
}
