#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sfclab/runner.hpp"
#include "sfclab/scenario.hpp"

using namespace sfclab;

namespace {

std::string minimal_config(const std::string& extra = "") {
  return R"({
    "grid": {"L": 1.0, "n_steps": 256},
    "a": {"kind": "deterministic", "g": {"kind": "constant", "value": 1.0}},
    "b": {"kind": "deterministic", "g": {"kind": "constant", "value": 0.0}},
    "flavor": "ogawa_u",
    "outer_basis": {"family": "haar", "count": 256},
    "inner_basis": {"family": "haar", "m_max": 256},
    "lil": {"h_max": 0.03125, "h_min": 0.015625, "nodes": [0.25, 0.5]},
    "replication": {"count": 3, "base_seed": 42, "parallelism": 1},
    "outputs": {"directory": "/tmp/sfclab_test_out"})" +
         extra + "\n}";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("parse_config: minimal document fills defaults") {
  const ScenarioConfig cfg = parse_config(minimal_config());
  CHECK(cfg.grid.n_steps == 256);
  CHECK(cfg.n_outer == 256);
  CHECK(cfg.diff.flavor == IntegralFlavor::OgawaU);
  CHECK(cfg.replicates == 3);
  CHECK(cfg.base_seed == 42);
  CHECK(cfg.lil.calibration == LilParams::Calibration::SelfCalibrated);
  CHECK(cfg.sample_nodes.size() == 2);
  CHECK(cfg.write_csv);
  CHECK(cfg.write_json);
}

TEST_CASE("parse_config: malformed json") {
  CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
}

TEST_CASE("parse_config: unknown keys are rejected with their path") {
  try {
    parse_config(R"({
      "grid": {"L": 1.0, "n_steps": 256, "bogus": 1},
      "a": {"kind": "deterministic", "g": {"kind": "constant", "value": 1.0}},
      "b": {"kind": "deterministic", "g": {"kind": "constant", "value": 0.0}},
      "flavor": "ogawa_u",
      "outer_basis": {"family": "haar", "count": 256},
      "inner_basis": {"family": "haar", "m_max": 256},
      "replication": {"count": 1, "base_seed": 1, "parallelism": 1}
    })");
    FAIL("expected ConfigError");
  } catch (const ConfigError& ex) {
    CHECK(std::string(ex.what()).find("$.grid") != std::string::npos);
    CHECK(std::string(ex.what()).find("bogus") != std::string::npos);
  }
}

TEST_CASE("parse_config: skorokhod flavor with unsupported a names the problem") {
  try {
    parse_config(R"({
      "grid": {"L": 1.0, "n_steps": 64},
      "a": {"kind": "s_type_ito",
            "f": {"u0": {"kind": "constant", "value": 1.0},
                   "terms": [{"u": {"kind": "constant", "value": 1.0},
                              "v": {"kind": "constant", "value": 1.0}}]},
            "h": {"u0": {"kind": "constant", "value": 0.0}, "terms": []},
            "a0": {"c0": 0.0, "terms": []}},
      "b": {"kind": "deterministic", "g": {"kind": "constant", "value": 0.0}},
      "flavor": "skorokhod",
      "outer_basis": {"family": "haar", "count": 64},
      "inner_basis": {"family": "haar", "m_max": 64},
      "replication": {"count": 1, "base_seed": 1, "parallelism": 1}
    })");
    FAIL("expected ConfigError");
  } catch (const ConfigError& ex) {
    const std::string msg = ex.what();
    CHECK(msg.find("$.a/$.flavor") != std::string::npos);
    CHECK(msg.find("unsupported spec") != std::string::npos);
  }
}

TEST_CASE("parse_config: fully excluded mask is rejected") {
  try {
    parse_config(R"({
      "grid": {"L": 1.0, "n_steps": 64},
      "a": {"kind": "deterministic", "g": {"kind": "constant", "value": 1.0}},
      "b": {"kind": "deterministic", "g": {"kind": "constant", "value": 0.0}},
      "flavor": "ogawa_u",
      "outer_basis": {"family": "haar", "count": 2, "exclude": [1, 2]},
      "inner_basis": {"family": "haar", "m_max": 64},
      "replication": {"count": 1, "base_seed": 1, "parallelism": 1}
    })");
    FAIL("expected ConfigError");
  } catch (const ConfigError& ex) {
    CHECK(std::string(ex.what()).find("cofinite") != std::string::npos);
  }
}

TEST_CASE("parse_config: off-grid lil nodes and bad ladder are rejected") {
  CHECK_THROWS_AS(parse_config(minimal_config(
                      R"(, "tolerances": [{"metric": "x", "stat": "nope", "le": 1}])")),
                  ConfigError);
  try {
    parse_config(R"({
      "grid": {"L": 1.0, "n_steps": 64},
      "a": {"kind": "deterministic", "g": {"kind": "constant", "value": 1.0}},
      "b": {"kind": "deterministic", "g": {"kind": "constant", "value": 0.0}},
      "flavor": "ogawa_u",
      "outer_basis": {"family": "haar", "count": 64},
      "inner_basis": {"family": "haar", "m_max": 64},
      "lil": {"h_max": 0.1, "h_min": 0.0001, "nodes": [0.123456]},
      "replication": {"count": 1, "base_seed": 1, "parallelism": 1}
    })");
    FAIL("expected ConfigError");
  } catch (const ConfigError& ex) {
    const std::string msg = ex.what();
    CHECK(msg.find("h_min must be >= dt") != std::string::npos);
    CHECK(msg.find("off grid") != std::string::npos);
  }
}

TEST_CASE("run_scenario: identification run with gates") {
  const std::string text = minimal_config(R"(,
    "tolerances": [
      {"metric": "primitive_max_err", "stat": "max", "le": 1e-8},
      {"metric": "abs_frac_within_20pct", "stat": "min", "ge": 0.99},
      {"metric": "drift_l2_err", "stat": "max", "le": 1e-8}
    ])");
  ScenarioConfig cfg = parse_config(text);
  cfg.out_dir = "/tmp/sfclab_test_run";
  const RunSummary summary = run_scenario(cfg, Subcommand::Run);
  CHECK(summary.failed_replicates.empty());
  CHECK(summary.all_pass);
  CHECK(summary.metrics.count("primitive_max_err") == 1);
  CHECK(summary.metrics.at("primitive_max_err").max <= 1e-8);
  CHECK(std::filesystem::exists(cfg.out_dir + "/results.csv"));
  CHECK(std::filesystem::exists(cfg.out_dir + "/summary.json"));
  const std::string csv = slurp(cfg.out_dir + "/results.csv");
  CHECK(csv.rfind("replicate,stage,node_index,value_re,value_im,truth_re,truth_im,abs_err\n",
                  0) == 0);
}

TEST_CASE("run_scenario: sfc and report serialization formats") {
  ScenarioConfig cfg = parse_config(minimal_config());
  cfg.replicates = 2;
  cfg.n_outer = 8;
  cfg.mask.excluded = {2};
  cfg.emit_sfc_csv = cfg.emit_sfc_json = cfg.emit_report_json = true;
  cfg.out_dir = "/tmp/sfclab_serial";
  const RunSummary summary = run_scenario(cfg, Subcommand::Run);
  CHECK(summary.failed_replicates.empty());

  const std::string sfc_csv = slurp(cfg.out_dir + "/sfc.csv");
  CHECK(sfc_csv.rfind("replicate,n,re,im,present\n", 0) == 0);
  // 2 replicates x 8 coefficients + header
  CHECK(std::count(sfc_csv.begin(), sfc_csv.end(), '\n') == 17);
  CHECK(sfc_csv.find("\n0,2,") != std::string::npos);
  CHECK(sfc_csv.find(",0\n") != std::string::npos);  // masked entry flagged absent

  const auto sfc_json = nlohmann::json::parse(slurp(cfg.out_dir + "/sfc.json"));
  REQUIRE(sfc_json.is_array());
  REQUIRE(sfc_json.size() == 2);
  CHECK(sfc_json[0]["replicate"] == 0);
  CHECK(sfc_json[0]["values"].size() == 8);
  CHECK(sfc_json[0]["present"][1] == 0);

  const auto report = nlohmann::json::parse(slurp(cfg.out_dir + "/report.json"));
  REQUIRE(report.is_array());
  REQUIRE(report.size() == 2);
  CHECK(report[0].contains("primitive"));
  CHECK(report[0].contains("lil"));
  CHECK(report[0].contains("drift"));
}

TEST_CASE("run_scenario: determinism across parallelism degrees") {
  ScenarioConfig cfg = parse_config(minimal_config());
  cfg.replicates = 10;

  cfg.parallelism = 1;
  cfg.out_dir = "/tmp/sfclab_det_p1";
  run_scenario(cfg, Subcommand::Run);
  cfg.parallelism = 8;
  cfg.out_dir = "/tmp/sfclab_det_p8";
  run_scenario(cfg, Subcommand::Run);

  const std::string c1 = slurp("/tmp/sfclab_det_p1/results.csv");
  const std::string c8 = slurp("/tmp/sfclab_det_p8/results.csv");
  CHECK(!c1.empty());
  CHECK(c1 == c8);  // byte-identical
}

TEST_CASE("run_scenario: oracle-check emits the ibp cross-checks") {
  ScenarioConfig cfg = parse_config(minimal_config());
  cfg.out_dir = "/tmp/sfclab_oracle";
  const RunSummary summary = run_scenario(cfg, Subcommand::OracleCheck);
  CHECK(summary.failed_replicates.empty());
  CHECK(summary.metrics.at("series_ibp_dev").max <= 1e-8);
  CHECK(summary.metrics.at("trace_ibp_dev").max <= 1e-8);
}

TEST_CASE("run_scenario: lil-calibrate produces the per-rung table") {
  ScenarioConfig cfg = parse_config(minimal_config());
  cfg.out_dir = "/tmp/sfclab_calib";
  const RunSummary summary = run_scenario(cfg, Subcommand::LilCalibrate);
  CHECK(summary.failed_replicates.empty());
  CHECK(summary.metrics.count("calib_h0") == 1);
  CHECK(summary.metrics.count("calib_h1") == 1);
}

TEST_CASE("run_scenario: basis-diagnose reports condition margins") {
  ScenarioConfig cfg = parse_config(minimal_config());
  cfg.out_dir = "/tmp/sfclab_basis";
  const RunSummary summary = run_scenario(cfg, Subcommand::BasisDiagnose);
  CHECK(summary.failed_replicates.empty());
  CHECK(summary.metrics.count("c1_margin_e1") == 1);
  CHECK(summary.metrics.count("universality_spread") == 1);
}

TEST_CASE("run_scenario: replicate failures are isolated, not fatal") {
  // a spec whose realization blows up for one seed cannot easily be made from
  // the JSON surface; instead drive the isolation path with an infeasible lil
  // node that only trips when with_signed touches it. Use a node too close to
  // the horizon bypassing parse validation.
  ScenarioConfig cfg = parse_config(minimal_config());
  cfg.sample_nodes = {1.0 - cfg.grid.dt};
  cfg.out_dir = "/tmp/sfclab_failiso";
  const RunSummary summary = run_scenario(cfg, Subcommand::Run);
  CHECK(summary.failed_replicates.size() == cfg.replicates);
  CHECK(!summary.failure_messages.empty());
}
