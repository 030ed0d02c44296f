#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "basis.hpp"
#include "grid.hpp"
#include "processes.hpp"
#include "reconstruct.hpp"
#include "sfc.hpp"

namespace sfclab {

// Declarative scenario: grid, differential, bases, estimator parameters,
// replication and outputs. Parsing is strict: unknown keys are rejected and
// every violated precondition is reported with its JSON path.
struct ToleranceGate {
  std::string metric;
  std::string stat = "mean";  // mean | rms | q05 | q50 | q95 | min | max
  bool is_upper = true;       // le: stat <= bound, ge: stat >= bound
  double bound = 0.0;
};

struct ScenarioConfig {
  Grid grid;
  StochasticDifferential diff;
  BasisSpec outer;
  std::size_t n_outer = 0;
  IndexMask mask;
  LilParams lil;
  std::vector<double> sample_nodes;
  double local_avg_window = 0.0;
  bool with_signed = true;
  bool with_drift = true;
  bool drift_from_estimate = false;

  std::size_t replicates = 1;
  std::uint64_t base_seed = 0;
  std::size_t parallelism = 1;

  std::string out_dir = "out";
  bool write_csv = true;
  bool write_json = true;
  bool emit_sfc_csv = false;
  bool emit_sfc_json = false;
  bool emit_report_json = false;
  std::size_t max_output_nodes = 256;

  std::vector<ToleranceGate> tolerances;
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::vector<std::string>& errors)
      : std::runtime_error(join(errors)), issues(errors) {}
  std::vector<std::string> issues;

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::ostringstream os;
    os << "invalid scenario config (" << errors.size() << " issue(s)):";
    for (const auto& e : errors) os << "\n  " << e;
    return os.str();
  }
};

namespace cfg {

using Json = nlohmann::json;

class Cursor {
 public:
  Cursor(const Json& node, std::string path, std::vector<std::string>& errors)
      : node_(&node), path_(std::move(path)), errors_(&errors) {}

  const Json& raw() const { return *node_; }
  const std::string& path() const { return path_; }
  void error(const std::string& msg) const { errors_->push_back(path_ + ": " + msg); }

  bool is_object() const { return node_->is_object(); }

  // strict-key walk: anything not in the allow list is an error
  void expect_keys(std::initializer_list<const char*> keys) const {
    std::set<std::string> allowed(keys.begin(), keys.end());
    if (!node_->is_object()) {
      error("expected an object");
      return;
    }
    for (auto it = node_->begin(); it != node_->end(); ++it)
      if (allowed.find(it.key()) == allowed.end()) error("unknown key '" + it.key() + "'");
  }

  bool has(const char* key) const { return node_->is_object() && node_->contains(key); }

  Cursor key(const char* k) const {
    if (!has(k)) {
      error(std::string("missing required key '") + k + "'");
      return Cursor(empty_json(), path_ + "." + k, *errors_);
    }
    return Cursor((*node_)[k], path_ + "." + k, *errors_);
  }

  std::optional<Cursor> optional(const char* k) const {
    if (!has(k)) return std::nullopt;
    return Cursor((*node_)[k], path_ + "." + k, *errors_);
  }

  double number(double fallback = 0.0) const {
    if (!node_->is_number()) {
      error("expected a number");
      return fallback;
    }
    return node_->get<double>();
  }

  std::uint64_t uinteger(std::uint64_t fallback = 0) const {
    if (!node_->is_number_unsigned() && !(node_->is_number_integer() && node_->get<long long>() >= 0)) {
      error("expected a non-negative integer");
      return fallback;
    }
    return node_->get<std::uint64_t>();
  }

  bool boolean(bool fallback = false) const {
    if (!node_->is_boolean()) {
      error("expected a boolean");
      return fallback;
    }
    return node_->get<bool>();
  }

  std::string text(const std::string& fallback = "") const {
    if (!node_->is_string()) {
      error("expected a string");
      return fallback;
    }
    return node_->get<std::string>();
  }

  std::vector<Cursor> items() const {
    std::vector<Cursor> out;
    if (!node_->is_array()) {
      error("expected an array");
      return out;
    }
    for (std::size_t i = 0; i < node_->size(); ++i)
      out.emplace_back((*node_)[i], path_ + "[" + std::to_string(i) + "]", *errors_);
    return out;
  }

 private:
  static const Json& empty_json() {
    static const Json empty = Json::object();
    return empty;
  }

  const Json* node_;
  std::string path_;
  std::vector<std::string>* errors_;
};

inline BasisFamily parse_family(const Cursor& c) {
  const std::string s = c.text("haar");
  if (s == "haar") return BasisFamily::Haar;
  if (s == "trigonometric") return BasisFamily::Trigonometric;
  if (s == "cosine") return BasisFamily::Cosine;
  if (s == "indicator") return BasisFamily::Indicator;
  c.error("unknown basis family '" + s + "'");
  return BasisFamily::Haar;
}

inline TrigOrdering parse_ordering(const Cursor& c) {
  const std::string s = c.text("symmetric");
  if (s == "symmetric") return TrigOrdering::Symmetric;
  if (s == "positive_first") return TrigOrdering::PositiveFirst;
  c.error("unknown ordering '" + s + "'");
  return TrigOrdering::Symmetric;
}

inline GridFunction parse_deterministic(const Cursor& c, const Grid& grid) {
  if (!c.is_object()) {
    c.error("expected a deterministic function object");
    return constant_function(grid, Complex(0.0, 0.0));
  }
  const std::string kind = c.key("kind").text();
  if (kind == "constant") {
    c.expect_keys({"kind", "value"});
    return constant_function(grid, Complex(c.key("value").number(), 0.0));
  }
  if (kind == "linear") {
    c.expect_keys({"kind", "intercept", "slope"});
    const double b0 = c.has("intercept") ? c.key("intercept").number() : 0.0;
    const double b1 = c.has("slope") ? c.key("slope").number() : 1.0;
    GridFunction f;
    f.values.resize(grid.n_nodes());
    for (std::size_t j = 0; j < f.values.size(); ++j)
      f.values[j] = b0 + b1 * grid.node_time(j);
    return f;
  }
  if (kind == "sine") {
    c.expect_keys({"kind", "amplitude", "cycles", "phase"});
    const double amp = c.has("amplitude") ? c.key("amplitude").number() : 1.0;
    const double cyc = c.has("cycles") ? c.key("cycles").number() : 1.0;
    const double ph = c.has("phase") ? c.key("phase").number() : 0.0;
    GridFunction f;
    f.values.resize(grid.n_nodes());
    for (std::size_t j = 0; j < f.values.size(); ++j)
      f.values[j] = amp * std::sin(2.0 * std::numbers::pi * cyc * grid.node_time(j) /
                                       grid.horizon + ph);
    return f;
  }
  if (kind == "step") {
    c.expect_keys({"kind", "times", "values"});
    std::vector<double> times, values;
    for (const auto& t : c.key("times").items()) times.push_back(t.number());
    for (const auto& v : c.key("values").items()) values.push_back(v.number());
    if (times.size() != values.size() || times.empty()) {
      c.error("step needs matching nonempty times/values");
      return constant_function(grid, Complex(0.0, 0.0));
    }
    for (double t : times)
      if (!grid.is_node(t)) c.error("step time off grid: " + std::to_string(t));
    GridFunction f = constant_function(grid, Complex(values[0], 0.0));
    for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
      const double t = grid.node_time(j);
      double v = values[0];
      for (std::size_t k = 0; k < times.size(); ++k)
        if (t >= times[k] - 1e-12) v = values[k];
      f.values[j] = v;
    }
    return f;
  }
  if (kind == "sawtooth") {
    c.expect_keys({"kind", "period", "amplitude"});
    const double period = c.key("period").number(1.0);
    const double amp = c.has("amplitude") ? c.key("amplitude").number() : 1.0;
    if (!(period > 0.0)) c.error("sawtooth period must be positive");
    GridFunction f;
    f.values.resize(grid.n_nodes());
    for (std::size_t j = 0; j < f.values.size(); ++j) {
      const double x = grid.node_time(j) / period;
      f.values[j] = amp * (x - std::floor(x));
    }
    return f;
  }
  if (kind == "basis") {
    c.expect_keys({"kind", "family", "index", "ordering"});
    BasisSpec spec;
    spec.family = parse_family(c.key("family"));
    if (auto o = c.optional("ordering")) spec.ordering = parse_ordering(*o);
    const auto index = static_cast<std::size_t>(c.key("index").uinteger(1));
    try {
      return basis_function(spec, index, grid);
    } catch (const std::exception& ex) {
      c.error(ex.what());
      return constant_function(grid, Complex(0.0, 0.0));
    }
  }
  c.error("unknown deterministic kind '" + kind + "'");
  return constant_function(grid, Complex(0.0, 0.0));
}

inline PathFunctional parse_functional(const Cursor& c) {
  PathFunctional f;
  c.expect_keys({"kind", "scale", "value"});
  const std::string kind = c.key("kind").text();
  if (kind == "constant") f.kind = PathFunctional::Kind::Constant;
  else if (kind == "terminal") f.kind = PathFunctional::Kind::Terminal;
  else if (kind == "terminal_sin") f.kind = PathFunctional::Kind::TerminalSin;
  else if (kind == "midpoint") f.kind = PathFunctional::Kind::Midpoint;
  else c.error("unknown functional kind '" + kind + "'");
  if (auto s = c.optional("scale")) f.scale = s->number(1.0);
  if (auto v = c.optional("value")) f.value = v->number(0.0);
  if (f.kind == PathFunctional::Kind::Constant && !c.has("value"))
    c.error("constant functional needs 'value'");
  return f;
}

inline FirstChaosVariant parse_first_chaos_body(const Cursor& c, const Grid& grid) {
  FirstChaosVariant fc;
  c.expect_keys({"u0", "terms"});
  fc.u0 = c.has("u0") ? parse_deterministic(c.key("u0"), grid)
                      : constant_function(grid, Complex(0.0, 0.0));
  if (auto terms = c.optional("terms")) {
    for (const auto& t : terms->items()) {
      t.expect_keys({"u", "v"});
      fc.terms.push_back({parse_deterministic(t.key("u"), grid),
                          parse_deterministic(t.key("v"), grid)});
    }
  }
  return fc;
}

inline ScalarChaos parse_scalar_chaos(const Cursor& c, const Grid& grid) {
  ScalarChaos sc;
  c.expect_keys({"c0", "terms"});
  if (auto v = c.optional("c0")) sc.c0 = v->number(0.0);
  if (auto terms = c.optional("terms")) {
    for (const auto& t : terms->items()) {
      t.expect_keys({"alpha", "w"});
      sc.terms.push_back({t.key("alpha").number(0.0),
                          parse_deterministic(t.key("w"), grid)});
    }
  }
  return sc;
}

inline RandomFunctionSpec parse_random_function(const Cursor& c, const Grid& grid) {
  if (!c.is_object()) {
    c.error("expected a random function object");
    return deterministic_spec(constant_function(grid, Complex(0.0, 0.0)));
  }
  const std::string kind = c.key("kind").text();
  if (kind == "deterministic") {
    c.expect_keys({"kind", "g"});
    return deterministic_spec(parse_deterministic(c.key("g"), grid));
  }
  if (kind == "fv_anticipative") {
    c.expect_keys({"kind", "g", "functional"});
    return RandomFunctionSpec{FvAnticipativeVariant{
        parse_deterministic(c.key("g"), grid), parse_functional(c.key("functional"))}};
  }
  if (kind == "step_random") {
    c.expect_keys({"kind", "offset", "jumps"});
    StepRandomVariant st;
    if (auto o = c.optional("offset")) st.offset = o->number(0.0);
    for (const auto& j : c.key("jumps").items()) {
      j.expect_keys({"time", "size"});
      const double t = j.key("time").number();
      if (!grid.is_node(t)) j.error("jump time off grid: " + std::to_string(t));
      st.jumps.push_back({t, parse_functional(j.key("size"))});
    }
    return RandomFunctionSpec{std::move(st)};
  }
  if (kind == "first_chaos") {
    c.expect_keys({"kind", "u0", "terms"});
    FirstChaosVariant fc;
    fc.u0 = c.has("u0") ? parse_deterministic(c.key("u0"), grid)
                        : constant_function(grid, Complex(0.0, 0.0));
    if (auto terms = c.optional("terms")) {
      for (const auto& t : terms->items()) {
        t.expect_keys({"u", "v"});
        fc.terms.push_back({parse_deterministic(t.key("u"), grid),
                            parse_deterministic(t.key("v"), grid)});
      }
    }
    return RandomFunctionSpec{std::move(fc)};
  }
  if (kind == "s_type_ito") {
    c.expect_keys({"kind", "f", "h", "a0"});
    STypeItoVariant st;
    st.f = c.has("f") ? parse_first_chaos_body(c.key("f"), grid)
                      : FirstChaosVariant{constant_function(grid, Complex(0.0, 0.0)), {}};
    st.h = c.has("h") ? parse_first_chaos_body(c.key("h"), grid)
                      : FirstChaosVariant{constant_function(grid, Complex(0.0, 0.0)), {}};
    if (auto a0 = c.optional("a0")) st.a0 = parse_scalar_chaos(*a0, grid);
    return RandomFunctionSpec{std::move(st)};
  }
  if (kind == "locally_ac") {
    c.expect_keys({"kind", "a0", "derivative"});
    LocallyAcVariant ac;
    if (auto a0 = c.optional("a0")) ac.a0 = parse_scalar_chaos(*a0, grid);
    const Cursor d = c.key("derivative");
    const std::string dkind = d.is_object() ? d.key("kind").text() : "";
    if (dkind == "deterministic") {
      d.expect_keys({"kind", "g"});
      ac.derivative = DeterministicVariant{parse_deterministic(d.key("g"), grid)};
    } else if (dkind == "fv_anticipative") {
      d.expect_keys({"kind", "g", "functional"});
      ac.derivative = FvAnticipativeVariant{parse_deterministic(d.key("g"), grid),
                                            parse_functional(d.key("functional"))};
    } else if (dkind == "first_chaos") {
      d.expect_keys({"kind", "u0", "terms"});
      FirstChaosVariant fc;
      fc.u0 = d.has("u0") ? parse_deterministic(d.key("u0"), grid)
                          : constant_function(grid, Complex(0.0, 0.0));
      if (auto terms = d.optional("terms")) {
        for (const auto& t : terms->items()) {
          t.expect_keys({"u", "v"});
          fc.terms.push_back({parse_deterministic(t.key("u"), grid),
                              parse_deterministic(t.key("v"), grid)});
        }
      }
      ac.derivative = std::move(fc);
    } else {
      d.error("locally_ac derivative must be deterministic, fv_anticipative or first_chaos");
    }
    return RandomFunctionSpec{std::move(ac)};
  }
  c.error("unknown random function kind '" + kind + "'");
  return deterministic_spec(constant_function(grid, Complex(0.0, 0.0)));
}

}  // namespace cfg

inline ScenarioConfig parse_config(const std::string& text) {
  std::vector<std::string> errors;
  cfg::Json root_json;
  try {
    root_json = cfg::Json::parse(text);
  } catch (const std::exception& ex) {
    throw ConfigError({std::string("$: malformed JSON: ") + ex.what()});
  }
  cfg::Cursor root(root_json, "$", errors);
  root.expect_keys({"grid", "a", "b", "flavor", "outer_basis", "inner_basis", "series",
                    "lil", "replication", "outputs", "tolerances"});

  ScenarioConfig out;

  // grid
  {
    const auto g = root.key("grid");
    g.expect_keys({"L", "n_steps"});
    const double L = g.key("L").number(1.0);
    const auto n = static_cast<std::size_t>(g.key("n_steps").uinteger(2));
    try {
      out.grid = Grid(L, n);
    } catch (const std::exception& ex) {
      g.error(ex.what());
      out.grid = Grid(1.0, 2);
    }
  }

  // differential
  out.diff.a = cfg::parse_random_function(root.key("a"), out.grid);
  out.diff.b = cfg::parse_random_function(root.key("b"), out.grid);
  {
    const auto f = root.key("flavor");
    const std::string s = f.text("ogawa_u");
    if (s == "ogawa_u") out.diff.flavor = IntegralFlavor::OgawaU;
    else if (s == "ogawa_phi") out.diff.flavor = IntegralFlavor::OgawaPhi;
    else if (s == "skorokhod") out.diff.flavor = IntegralFlavor::Skorokhod;
    else f.error("unknown flavor '" + s + "'");
  }

  // outer basis e and mask
  {
    const auto e = root.key("outer_basis");
    e.expect_keys({"family", "ordering", "count", "exclude"});
    out.outer.family = cfg::parse_family(e.key("family"));
    if (auto o = e.optional("ordering")) out.outer.ordering = cfg::parse_ordering(*o);
    out.n_outer = static_cast<std::size_t>(e.key("count").uinteger(out.grid.n_steps));
    if (out.n_outer == 0 || out.n_outer > max_representable(out.outer, out.grid))
      e.error("count out of range for the family on this grid");
    if (auto ex = e.optional("exclude")) {
      for (const auto& idx : ex->items())
        out.mask.excluded.push_back(static_cast<std::size_t>(idx.uinteger()));
      std::size_t excluded_in_range = 0;
      for (std::size_t n : out.mask.excluded)
        if (n >= 1 && n <= out.n_outer) ++excluded_in_range;
      if (excluded_in_range >= out.n_outer)
        ex->error("mask must be cofinite and nonempty");
    }
  }

  // inner basis phi
  {
    const auto p = root.key("inner_basis");
    p.expect_keys({"family", "ordering", "m_max"});
    out.diff.phi.family = cfg::parse_family(p.key("family"));
    if (auto o = p.optional("ordering")) out.diff.phi.ordering = cfg::parse_ordering(*o);
    out.diff.phi_m_max = p.has("m_max")
                             ? static_cast<std::size_t>(p.key("m_max").uinteger())
                             : out.grid.n_steps;
    if (out.diff.phi_m_max == 0 ||
        out.diff.phi_m_max > max_representable(out.diff.phi, out.grid))
      p.error("m_max out of range for the family on this grid");
  }

  if (auto s = root.optional("series")) {
    s->expect_keys({"tolerance"});
    if (auto t = s->optional("tolerance")) out.diff.series_tolerance = t->number(1e-6);
  }

  // estimator parameters
  if (auto l = root.optional("lil")) {
    l->expect_keys({"h_max", "h_min", "ladder_factor", "sup_stride", "k_schedule",
                    "calibration", "nodes", "local_avg_window", "with_signed",
                    "with_drift", "drift_from"});
    if (auto v = l->optional("h_max")) out.lil.h_max = v->number(out.lil.h_max);
    if (auto v = l->optional("h_min")) out.lil.h_min = v->number(out.lil.h_min);
    if (auto v = l->optional("ladder_factor"))
      out.lil.ladder_factor = v->number(out.lil.ladder_factor);
    if (auto v = l->optional("sup_stride"))
      out.lil.sup_stride = static_cast<std::size_t>(v->uinteger(1));
    if (auto v = l->optional("k_schedule")) {
      out.lil.k_schedule.clear();
      for (const auto& k : v->items()) out.lil.k_schedule.push_back(k.number());
      for (std::size_t i = 1; i < out.lil.k_schedule.size(); ++i)
        if (!(out.lil.k_schedule[i] > out.lil.k_schedule[i - 1]))
          v->error("k_schedule must be strictly increasing");
      if (out.lil.k_schedule.empty()) v->error("k_schedule must be nonempty");
    }
    if (auto v = l->optional("calibration")) {
      const std::string s = v->text("self_calibrated");
      if (s == "none") out.lil.calibration = LilParams::Calibration::None;
      else if (s == "self_calibrated")
        out.lil.calibration = LilParams::Calibration::SelfCalibrated;
      else v->error("unknown calibration mode '" + s + "'");
    }
    if (auto v = l->optional("nodes")) {
      for (const auto& t : v->items()) {
        const double tt = t.number();
        if (!out.grid.is_node(tt)) t.error("sample node off grid: " + std::to_string(tt));
        out.sample_nodes.push_back(tt);
      }
    }
    if (auto v = l->optional("local_avg_window"))
      out.local_avg_window = v->number(0.0);
    if (auto v = l->optional("with_signed")) out.with_signed = v->boolean(true);
    if (auto v = l->optional("with_drift")) out.with_drift = v->boolean(true);
    if (auto v = l->optional("drift_from")) {
      const std::string s = v->text("oracle");
      if (s == "oracle") out.drift_from_estimate = false;
      else if (s == "estimate") out.drift_from_estimate = true;
      else v->error("unknown drift_from mode '" + s + "'");
      if (out.drift_from_estimate && out.diff.flavor == IntegralFlavor::Skorokhod)
        v->error("flavor mismatch: estimated-a drift recovery needs an ogawa flavor");
      if (out.drift_from_estimate && !out.with_signed)
        v->error("drift_from=estimate needs with_signed=true");
    }

    if (!(out.lil.h_min >= out.grid.dt * (1.0 - 1e-9)))
      l->error("h_min must be >= dt");
    if (!(out.lil.h_max >= out.lil.h_min)) l->error("h_max must be >= h_min");
    if (!(out.lil.h_max < 0.3678794411714423))
      l->error("h_max must stay below 1/e for the loglog normalizer");
    if (!(out.lil.ladder_factor > 1.0)) l->error("ladder_factor must exceed 1");
    const auto h_cells =
        static_cast<std::size_t>(std::llround(out.lil.h_max / out.grid.dt));
    for (double t : out.sample_nodes)
      if (out.grid.is_node(t) &&
          out.grid.node_index(t) + std::max<std::size_t>(h_cells, 1) > out.grid.n_steps)
        l->error("sample node too close to the horizon: " + std::to_string(t));
  }

  // replication
  {
    const auto r = root.key("replication");
    r.expect_keys({"count", "base_seed", "parallelism"});
    out.replicates = static_cast<std::size_t>(r.key("count").uinteger(1));
    if (out.replicates == 0) r.error("count must be >= 1");
    if (auto s = r.optional("base_seed")) out.base_seed = s->uinteger(0);
    if (auto p = r.optional("parallelism")) {
      out.parallelism = static_cast<std::size_t>(p->uinteger(1));
      if (out.parallelism == 0) p->error("parallelism must be >= 1");
    }
  }

  if (auto o = root.optional("outputs")) {
    o->expect_keys({"directory", "formats", "max_output_nodes"});
    if (auto d = o->optional("directory")) out.out_dir = d->text("out");
    if (auto f = o->optional("formats")) {
      out.write_csv = out.write_json = false;
      for (const auto& fmt : f->items()) {
        const std::string s = fmt.text();
        if (s == "csv") out.write_csv = true;
        else if (s == "json") out.write_json = true;
        else if (s == "sfc_csv") out.emit_sfc_csv = true;
        else if (s == "sfc_json") out.emit_sfc_json = true;
        else if (s == "report_json") out.emit_report_json = true;
        else fmt.error("unknown format '" + s + "'");
      }
    }
    if (auto m = o->optional("max_output_nodes"))
      out.max_output_nodes = static_cast<std::size_t>(m->uinteger(256));
  }

  if (auto t = root.optional("tolerances")) {
    for (const auto& gate : t->items()) {
      gate.expect_keys({"metric", "stat", "le", "ge"});
      ToleranceGate g;
      g.metric = gate.key("metric").text();
      if (auto s = gate.optional("stat")) g.stat = s->text("mean");
      const bool has_le = gate.has("le"), has_ge = gate.has("ge");
      if (has_le == has_ge) {
        gate.error("tolerance needs exactly one of 'le'/'ge'");
      } else if (has_le) {
        g.is_upper = true;
        g.bound = gate.key("le").number();
      } else {
        g.is_upper = false;
        g.bound = gate.key("ge").number();
      }
      static const std::set<std::string> stats = {"mean", "rms", "q05",
                                                  "q50",  "q95", "min", "max"};
      if (stats.find(g.stat) == stats.end()) gate.error("unknown stat '" + g.stat + "'");
      out.tolerances.push_back(std::move(g));
    }
  }

  // module preconditions that need the whole config
  if (errors.empty()) {
    try {
      check_flavor_compatibility(out.diff, out.grid);
    } catch (const std::exception& ex) {
      errors.push_back(std::string("$.a/$.flavor: ") + ex.what());
    }
  }

  if (!errors.empty()) throw ConfigError(errors);
  return out;
}

}  // namespace sfclab
