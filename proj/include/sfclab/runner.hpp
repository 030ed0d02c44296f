#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "basis.hpp"
#include "integrals.hpp"
#include "reconstruct.hpp"
#include "scenario.hpp"
#include "sfc.hpp"

namespace sfclab {

enum class Subcommand { Run, OracleCheck, LilCalibrate, BasisDiagnose };

inline const char* subcommand_name(Subcommand s) {
  switch (s) {
    case Subcommand::Run: return "run";
    case Subcommand::OracleCheck: return "oracle-check";
    case Subcommand::LilCalibrate: return "lil-calibrate";
    case Subcommand::BasisDiagnose: return "basis-diagnose";
  }
  return "?";
}

struct MetricStats {
  double mean = 0.0, rms = 0.0, q05 = 0.0, q50 = 0.0, q95 = 0.0;
  double min = 0.0, max = 0.0;
  std::size_t count = 0;
};

struct RunSummary {
  std::map<std::string, MetricStats> metrics;
  std::map<std::string, bool> metric_pass;
  bool all_pass = true;
  bool has_gates = false;
  double wall_seconds = 0.0;
  std::map<std::string, double> stage_seconds;
  std::vector<std::size_t> failed_replicates;
  std::vector<std::string> failure_messages;
  std::string results_csv_path;
  std::string summary_json_path;
};

// SfcVector long-format CSV: replicate,n,re,im,present
inline void append_sfc_csv(std::string& rows, std::size_t replicate, const SfcVector& sfc) {
  char buf[128];
  for (std::size_t n = 1; n <= sfc.size(); ++n) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g,%d\n", replicate, n,
                  sfc.values[n - 1].real(), sfc.values[n - 1].imag(),
                  sfc.present[n - 1] ? 1 : 0);
    rows += buf;
  }
}

// one JSON array entry per replicate
inline nlohmann::json sfc_to_json(std::size_t replicate, const SfcVector& sfc) {
  nlohmann::json j;
  j["replicate"] = replicate;
  nlohmann::json values = nlohmann::json::array();
  nlohmann::json present = nlohmann::json::array();
  for (std::size_t n = 0; n < sfc.size(); ++n) {
    values.push_back({sfc.values[n].real(), sfc.values[n].imag()});
    present.push_back(sfc.present[n] ? 1 : 0);
  }
  j["values"] = std::move(values);
  j["present"] = std::move(present);
  return j;
}

namespace runner_detail {

inline void append_row(std::string& rows, std::size_t replicate, const char* stage,
                       std::size_t node_index, Complex value, Complex truth) {
  char buf[256];
  const double err = std::abs(value - truth);
  std::snprintf(buf, sizeof(buf), "%zu,%s,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", replicate,
                stage, node_index, value.real(), value.imag(), truth.real(), truth.imag(),
                err);
  rows += buf;
}

// evenly spaced node subsample (always includes the endpoints)
inline std::vector<std::size_t> output_nodes(const Grid& grid, std::size_t cap) {
  std::vector<std::size_t> idx;
  const std::size_t n = grid.n_nodes();
  if (cap == 0 || n <= cap) {
    idx.resize(n);
    for (std::size_t j = 0; j < n; ++j) idx[j] = j;
    return idx;
  }
  for (std::size_t i = 0; i < cap; ++i) idx.push_back((i * (n - 1)) / (cap - 1));
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

struct ReplicateResult {
  std::string rows;
  std::map<std::string, double> metrics;
  std::string sfc_rows;          // filled when outputs request sfc_csv
  nlohmann::json sfc_json;       // when outputs request sfc_json
  nlohmann::json report_json;    // when outputs request report_json
};

// per-stage arrays of one identification report, nodes capped for output
inline nlohmann::json report_to_json(const Grid& grid, const IdentificationReport& rep,
                                     std::size_t replicate, std::size_t cap);

inline ReplicateResult replicate_run(const ScenarioConfig& cfg, std::size_t r) {
  const BrownianPath path = sample_brownian(cfg.grid, replicate_seed(cfg.base_seed, r));
  IdentificationOptions opt;
  opt.e = cfg.outer;
  opt.n_outer = cfg.n_outer;
  opt.mask = cfg.mask;
  opt.lil = cfg.lil;
  opt.sample_nodes = cfg.sample_nodes;
  opt.with_signed = cfg.with_signed;
  opt.with_drift = cfg.with_drift;
  opt.drift_from_estimate = cfg.drift_from_estimate;
  opt.local_avg_window = cfg.local_avg_window;
  const IdentificationReport rep = run_identification(cfg.grid, cfg.diff, path, opt);

  ReplicateResult out;
  const auto nodes = output_nodes(cfg.grid, cfg.max_output_nodes);
  for (std::size_t j : nodes)
    append_row(out.rows, r, "primitive", j, rep.primitive.values[j],
               rep.primitive_ref.values[j]);
  for (std::size_t i = 0; i < rep.nodes.size(); ++i) {
    const std::size_t j = cfg.grid.node_index(rep.nodes[i]);
    append_row(out.rows, r, "abs", j, Complex(rep.abs_smoothed[i], 0.0),
               Complex(rep.abs_truth[i], 0.0));
    if (cfg.local_avg_window > 0.0)
      append_row(out.rows, r, "abs_raw", j, Complex(rep.abs_est[i], 0.0),
                 Complex(rep.abs_truth[i], 0.0));
    if (cfg.with_signed)
      append_row(out.rows, r, "signed", j, Complex(rep.signed_est[i], 0.0),
                 Complex(rep.signed_truth[i], 0.0));
  }
  if (cfg.with_drift)
    for (std::size_t j : nodes)
      append_row(out.rows, r, "drift", j, rep.drift_recovered.values[j],
                 rep.drift_truth.values[j]);

  auto& m = out.metrics;
  m["primitive_max_err"] = rep.primitive_max_err;
  m["primitive_max_imag"] = rep.primitive_max_imag;
  double abs_max_err = 0.0, signed_max_err = 0.0;
  double within = 0.0, signs = 0.0, signs_counted = 0.0;
  for (std::size_t i = 0; i < rep.nodes.size(); ++i) {
    const double est = rep.abs_smoothed[i];
    const double truth = rep.abs_truth[i];
    abs_max_err = std::max(abs_max_err, std::abs(est - truth));
    if (std::abs(est - truth) <= 0.2 * std::max(std::abs(truth), 1e-300)) within += 1.0;
    if (cfg.with_signed) {
      signed_max_err = std::max(signed_max_err, std::abs(rep.signed_est[i] -
                                                         rep.signed_truth[i]));
      if (std::abs(rep.signed_truth[i]) > 1e-12) {
        signs_counted += 1.0;
        if ((rep.signed_est[i] > 0) == (rep.signed_truth[i] > 0)) signs += 1.0;
      }
    }
  }
  const double n_nodes = static_cast<double>(std::max<std::size_t>(rep.nodes.size(), 1));
  m["abs_max_abs_err"] = abs_max_err;
  m["abs_frac_within_20pct"] = within / n_nodes;
  if (cfg.with_signed) {
    m["signed_max_abs_err"] = signed_max_err;
    m["sign_accuracy"] = signs_counted > 0 ? signs / signs_counted : 1.0;
  }
  if (cfg.with_drift) {
    m["drift_l2_err"] = rep.drift_l2_err;
    m["drift_l2_rel"] = rep.drift_l2_rel;
    m["drift_l2_err_masked"] = rep.drift_l2_err_masked;
  }
  m["calibration_valid"] = rep.calibration_valid ? 1.0 : 0.0;
  m["seconds_sfc"] = rep.seconds_sfc;
  m["seconds_parseval"] = rep.seconds_parseval;
  m["seconds_lil"] = rep.seconds_lil;
  m["seconds_drift"] = rep.seconds_drift;

  if (cfg.emit_sfc_csv) append_sfc_csv(out.sfc_rows, r, rep.sfc);
  if (cfg.emit_sfc_json) out.sfc_json = sfc_to_json(r, rep.sfc);
  if (cfg.emit_report_json)
    out.report_json = report_to_json(cfg.grid, rep, r, cfg.max_output_nodes);
  return out;
}

inline nlohmann::json report_to_json(const Grid& grid, const IdentificationReport& rep,
                                     std::size_t replicate, std::size_t cap) {
  nlohmann::json j;
  j["replicate"] = replicate;
  const auto nodes = output_nodes(grid, cap);
  auto series = [&](const GridFunction& f) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t idx : nodes) arr.push_back({f.values[idx].real(), f.values[idx].imag()});
    return arr;
  };
  nlohmann::json node_times = nlohmann::json::array();
  for (std::size_t idx : nodes) node_times.push_back(grid.node_time(idx));
  j["node_times"] = std::move(node_times);
  j["primitive"] = series(rep.primitive);
  j["primitive_truth"] = series(rep.primitive_ref);
  j["primitive_max_err"] = rep.primitive_max_err;
  j["lil"] = {{"nodes", rep.nodes},
              {"abs", rep.abs_est},
              {"abs_smoothed", rep.abs_smoothed},
              {"abs_truth", rep.abs_truth},
              {"signed", rep.signed_est},
              {"signed_truth", rep.signed_truth},
              {"calibration_valid", rep.calibration_valid}};
  if (!rep.drift_recovered.values.empty()) {
    j["drift"] = series(rep.drift_recovered);
    j["drift_truth"] = series(rep.drift_truth);
    j["drift_l2_err"] = rep.drift_l2_err;
    j["drift_l2_rel"] = rep.drift_l2_rel;
  }
  return j;
}

inline ReplicateResult replicate_oracle_check(const ScenarioConfig& cfg, std::size_t r) {
  const BrownianPath path = sample_brownian(cfg.grid, replicate_seed(cfg.base_seed, r));
  const GridFunction one = constant_function(cfg.grid, Complex(1.0, 0.0));
  ReplicateResult out;

  const bool fv = is_fv_variant(cfg.diff.a);
  if (fv) {
    const GridFunction a = realize(cfg.diff.a, cfg.grid, path).fn;
    const Complex ibp = ogawa_ibp(cfg.grid, a, one, path, 0.0, cfg.grid.horizon);
    const SeriesResult series = ogawa_phi_integral(cfg.grid, a, path, cfg.diff.phi,
                                                   cfg.diff.phi_m_max,
                                                   cfg.diff.series_tolerance);
    out.metrics["series_ibp_dev"] = std::abs(series.converged_value - ibp);
    out.metrics["series_converged"] = series.convergence_flag ? 1.0 : 0.0;
    append_row(out.rows, r, "oracle_series", 0, series.converged_value, ibp);
    const Complex via_trace = ogawa_via_trace(cfg.grid, cfg.diff.a, path, one);
    out.metrics["trace_ibp_dev"] = std::abs(via_trace - ibp);
    append_row(out.rows, r, "oracle_trace", 0, via_trace, ibp);
  }
  const Complex sk = skorokhod_integral(cfg.grid, cfg.diff.a, path, one);
  out.metrics["skorokhod_value"] = sk.real();
  append_row(out.rows, r, "oracle_skorokhod", 0, sk, Complex(0.0, 0.0));
  return out;
}

inline ReplicateResult replicate_lil_calibrate(const ScenarioConfig& cfg, std::size_t r) {
  const BrownianPath path = sample_brownian(cfg.grid, replicate_seed(cfg.base_seed, r));
  LilParams raw = cfg.lil;
  raw.calibration = LilParams::Calibration::None;
  std::vector<double> nodes = cfg.sample_nodes;
  if (nodes.empty()) nodes.push_back(cfg.grid.node_time(cfg.grid.n_steps / 4));
  ReplicateResult out;
  std::vector<double> rung_sum;
  for (double t : nodes) {
    const LilEstimate est =
        lil_abs_estimator(cfg.grid, path.as_grid_function(), t, raw, nullptr);
    if (rung_sum.empty()) rung_sum.assign(est.ladder_h.size(), 0.0);
    for (std::size_t i = 0; i < est.ladder_h.size(); ++i) {
      rung_sum[i] += est.ladder_raw[i];
      append_row(out.rows, r, "calibration", i, Complex(est.ladder_raw[i], 0.0),
                 Complex(est.ladder_h[i], 0.0));
    }
  }
  for (std::size_t i = 0; i < rung_sum.size(); ++i)
    out.metrics["calib_h" + std::to_string(i)] =
        rung_sum[i] / static_cast<double>(nodes.size());
  return out;
}

inline ReplicateResult replicate_basis_diagnose(const ScenarioConfig& cfg, std::size_t r) {
  const BrownianPath path = sample_brownian(cfg.grid, replicate_seed(cfg.base_seed, r));
  ReplicateResult out;
  const std::size_t m_max = std::min<std::size_t>(cfg.diff.phi_m_max, 256);
  const std::size_t n_probe = std::min<std::size_t>(cfg.n_outer, 4);
  for (std::size_t n = 1; n <= n_probe; ++n) {
    const GridFunction en = basis_function(cfg.outer, n, cfg.grid);
    const auto rep = check_basis_condition(cfg.grid, en, cfg.diff.phi, m_max);
    for (std::size_t m = 0; m < rep.sup_l2.size(); ++m)
      append_row(out.rows, r, ("basis_c1_l2_e" + std::to_string(n)).c_str(), m + 1,
                 Complex(rep.sup_l2[m], 0.0), Complex(0.0, 0.0));
    out.metrics["c1_margin_e" + std::to_string(n)] = rep.c1_margin;
    out.metrics["c2_margin_e" + std::to_string(n)] = rep.c2_margin;
    out.metrics["c1_pass_e" + std::to_string(n)] = rep.c1 ? 1.0 : 0.0;
  }
  // u-integrability spread of the scenario integrand across bases
  const GridFunction a = realize(cfg.diff.a, cfg.grid, path).fn;
  std::vector<BasisSpec> specs = {cfg.diff.phi, {BasisFamily::Haar}};
  if (cfg.diff.phi.family == BasisFamily::Haar) specs[1] = {BasisFamily::Cosine};
  const bool fv = is_fv_variant(cfg.diff.a) && a.is_real(1e-9);
  const auto rep = universality_check(cfg.grid, a, path, specs, m_max,
                                      cfg.diff.series_tolerance, fv);
  out.metrics["universality_spread"] = rep.max_spread;
  if (rep.has_ibp) out.metrics["universality_ibp_dev"] = rep.max_ibp_deviation;
  for (std::size_t i = 0; i < rep.values.size(); ++i)
    append_row(out.rows, r, "universality", i, rep.values[i],
               rep.has_ibp ? rep.ibp_value : Complex(0.0, 0.0));
  return out;
}

inline MetricStats summarize(std::vector<double> v) {
  MetricStats s;
  s.count = v.size();
  if (v.empty()) return s;
  double sum = 0.0, sq = 0.0;
  for (double x : v) {
    sum += x;
    sq += x * x;
  }
  s.mean = sum / static_cast<double>(v.size());
  s.rms = std::sqrt(sq / static_cast<double>(v.size()));
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
  };
  s.q05 = quantile(0.05);
  s.q50 = quantile(0.50);
  s.q95 = quantile(0.95);
  s.min = v.front();
  s.max = v.back();
  return s;
}

}  // namespace runner_detail

// Executes the scenario with work-stealing over replicate indices. Outputs are
// deterministic in (config, base_seed) regardless of parallelism: rows are
// collected per replicate and written in index order by a single collector.
inline RunSummary run_scenario(const ScenarioConfig& cfg, Subcommand sub) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();

  const std::size_t reps =
      sub == Subcommand::BasisDiagnose ? std::min<std::size_t>(cfg.replicates, 1) : cfg.replicates;
  std::vector<runner_detail::ReplicateResult> results(reps);
  std::vector<std::string> errors(reps);

  auto body = [&](std::size_t r) {
    try {
      switch (sub) {
        case Subcommand::Run: results[r] = runner_detail::replicate_run(cfg, r); break;
        case Subcommand::OracleCheck:
          results[r] = runner_detail::replicate_oracle_check(cfg, r);
          break;
        case Subcommand::LilCalibrate:
          results[r] = runner_detail::replicate_lil_calibrate(cfg, r);
          break;
        case Subcommand::BasisDiagnose:
          results[r] = runner_detail::replicate_basis_diagnose(cfg, r);
          break;
      }
    } catch (const std::exception& ex) {
      errors[r] = ex.what();  // isolate the replicate, keep the study alive
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.parallelism, reps));
  if (workers == 1) {
    for (std::size_t r = 0; r < reps; ++r) body(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t r = next.fetch_add(1); r < reps; r = next.fetch_add(1)) body(r);
      });
    for (auto& th : pool) th.join();
  }

  RunSummary summary;
  std::map<std::string, std::vector<double>> columns;
  for (std::size_t r = 0; r < reps; ++r) {
    if (!errors[r].empty()) {
      summary.failed_replicates.push_back(r);
      summary.failure_messages.push_back("replicate " + std::to_string(r) + ": " + errors[r]);
      continue;
    }
    for (const auto& [k, v] : results[r].metrics) columns[k].push_back(v);
  }
  for (auto& [k, v] : columns) summary.metrics[k] = runner_detail::summarize(std::move(v));
  for (const char* stage : {"seconds_sfc", "seconds_parseval", "seconds_lil", "seconds_drift"})
    if (auto it = summary.metrics.find(stage); it != summary.metrics.end())
      summary.stage_seconds[stage] = it->second.mean;

  summary.has_gates = !cfg.tolerances.empty();
  for (const auto& gate : cfg.tolerances) {
    const auto it = summary.metrics.find(gate.metric);
    bool ok = false;
    if (it != summary.metrics.end()) {
      double stat = it->second.mean;
      if (gate.stat == "rms") stat = it->second.rms;
      else if (gate.stat == "q05") stat = it->second.q05;
      else if (gate.stat == "q50") stat = it->second.q50;
      else if (gate.stat == "q95") stat = it->second.q95;
      else if (gate.stat == "min") stat = it->second.min;
      else if (gate.stat == "max") stat = it->second.max;
      ok = gate.is_upper ? stat <= gate.bound : stat >= gate.bound;
    }
    auto [pit, inserted] = summary.metric_pass.try_emplace(gate.metric, ok);
    if (!inserted) pit->second = pit->second && ok;
    summary.all_pass = summary.all_pass && ok;
  }

  // write artifacts, sorted by replicate index
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  if (cfg.write_csv) {
    const fs::path p = fs::path(cfg.out_dir) / "results.csv";
    std::ofstream os(p, std::ios::binary);
    os << "replicate,stage,node_index,value_re,value_im,truth_re,truth_im,abs_err\n";
    for (std::size_t r = 0; r < reps; ++r) os << results[r].rows;
    summary.results_csv_path = p.string();
  }
  if (cfg.emit_sfc_csv) {
    std::ofstream os(fs::path(cfg.out_dir) / "sfc.csv", std::ios::binary);
    os << "replicate,n,re,im,present\n";
    for (std::size_t r = 0; r < reps; ++r) os << results[r].sfc_rows;
  }
  if (cfg.emit_sfc_json) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t r = 0; r < reps; ++r)
      if (!results[r].sfc_json.is_null()) arr.push_back(results[r].sfc_json);
    std::ofstream os(fs::path(cfg.out_dir) / "sfc.json", std::ios::binary);
    os << arr.dump(2) << "\n";
  }
  if (cfg.emit_report_json) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t r = 0; r < reps; ++r)
      if (!results[r].report_json.is_null()) arr.push_back(results[r].report_json);
    std::ofstream os(fs::path(cfg.out_dir) / "report.json", std::ios::binary);
    os << arr.dump(2) << "\n";
  }
  summary.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  if (cfg.write_json) {
    nlohmann::json j;
    j["subcommand"] = subcommand_name(sub);
    j["replicates"] = reps;
    j["base_seed"] = cfg.base_seed;
    j["wall_seconds"] = summary.wall_seconds;
    j["stage_seconds"] = summary.stage_seconds;
    j["failed_replicates"] = summary.failed_replicates;
    j["failures"] = summary.failure_messages;
    nlohmann::json jm = nlohmann::json::object();
    for (const auto& [k, s] : summary.metrics) {
      const auto pass_it = summary.metric_pass.find(k);
      jm[k] = {{"mean", s.mean}, {"rms", s.rms},  {"q05", s.q05},
               {"q50", s.q50},   {"q95", s.q95},
               {"pass", pass_it == summary.metric_pass.end() ? true : pass_it->second}};
    }
    j["metrics"] = jm;
    j["all_pass"] = summary.all_pass;
    const fs::path p = fs::path(cfg.out_dir) / "summary.json";
    std::ofstream os(p, std::ios::binary);
    os << j.dump(2) << "\n";
    summary.summary_json_path = p.string();
  }
  return summary;
}

}  // namespace sfclab
