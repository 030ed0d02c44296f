#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "basis.hpp"
#include "grid.hpp"
#include "processes.hpp"
#include "sfc.hpp"

namespace sfclab {

// Parseval-type inversion: t -> sum_{n present} antiderivative(e_n)(t) c_n,
// evaluated as the primitive of the synthesized coefficient function.
// Absent entries are filled with zero.
inline GridFunction parseval_transform(const Grid& grid, const SfcVector& sfc,
                                       const BasisSpec& e) {
  const GridFunction g = synthesize(grid, e, sfc.values, &sfc.present);
  return antiderivative(grid, g);
}

// Left-continuous modification on the grid: a left-point cell function's
// left limit at t_j is the value governing [t_{j-1}, t_j); node-sampled
// functions are already their own left-continuous version, which makes the
// map idempotent.
inline GridFunction left_continuous_mod(const GridFunction& X) {
  if (X.convention == Convention::Node) return X;
  GridFunction out;
  out.values.resize(X.values.size());
  out.convention = Convention::Node;
  out.values[0] = Complex(0.0, 0.0);
  for (std::size_t j = 1; j < X.values.size(); ++j) out.values[j] = X.values[j - 1];
  return out;
}

struct LilParams {
  double h_max = 1.0 / 64;
  double h_min = 1.0 / 1024;
  double ladder_factor = 2.0;
  std::size_t sup_stride = 1;
  std::vector<double> k_schedule = {0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
  enum class Calibration { None, SelfCalibrated };
  Calibration calibration = Calibration::SelfCalibrated;
  double k_stabilize_frac = 0.05;

  std::vector<double> ladder(double dt) const {
    if (!(h_min >= dt * (1.0 - 1e-9)))
      throw std::invalid_argument("LilParams: h_min must be >= dt");
    if (!(h_max >= h_min) || !(ladder_factor > 1.0))
      throw std::invalid_argument("LilParams: need h_max >= h_min and ladder_factor > 1");
    std::vector<double> rungs;
    for (double h = h_max; h >= h_min * (1.0 - 1e-9); h /= ladder_factor) rungs.push_back(h);
    if (rungs.empty()) rungs.push_back(h_min);
    return rungs;
  }
};

namespace detail {

// max over grid s in (t, t + h] of (x(s) - x(t) + k (b(s) - b(t))) /
// sqrt(2 (s-t) loglog(1/(s-t))); s - t must stay below 1/e for the loglog
inline double sup_quotient(const Grid& grid, const std::vector<double>& x, const double* b,
                           double k, std::size_t t_idx, std::size_t h_cells,
                           std::size_t stride) {
  if (stride == 0) stride = 1;
  const double xt = x[t_idx];
  const double bt = b != nullptr ? b[t_idx] : 0.0;
  double best = -1e308;
  bool any = false;
  auto eval = [&](std::size_t s) {
    const double u = static_cast<double>(s - t_idx) * grid.dt;
    if (u >= 0.3678794411714423) return;  // 1/e
    const double den = std::sqrt(2.0 * u * std::log(std::log(1.0 / u)));
    double num = x[s] - xt;
    if (b != nullptr) num += k * (b[s] - bt);
    best = std::max(best, num / den);
    any = true;
  };
  for (std::size_t s = t_idx + 1; s <= t_idx + h_cells; s += stride) eval(s);
  if ((h_cells % stride) != 0) eval(t_idx + h_cells);
  if (!any) throw std::invalid_argument("lil estimator: no valid nodes in window");
  return best;
}

inline std::vector<double> real_values(const GridFunction& f) {
  std::vector<double> x(f.values.size());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = f.values[j].real();
  return x;
}

}  // namespace detail

struct LilEstimate {
  double value = 0.0;               // ladder value at h_min, calibrated when enabled
  std::vector<double> ladder_h;
  std::vector<double> ladder_raw;   // raw sup quotients per rung
  std::vector<double> ladder_value; // calibrated per rung
  bool calibration_valid = true;    // false when the pure-path quotient was <= 0
};

// LIL magnitude estimator for |a|(t). Positively homogeneous in the input;
// in self-calibrated mode divides by the same functional of the pure path
// over the same windows (a per-path bias correction, which costs
// B-independence; raw mode keeps the faithful estimator).
inline LilEstimate lil_abs_estimator(const Grid& grid, const GridFunction& X, double t,
                                     const LilParams& params,
                                     const BrownianPath* path = nullptr) {
  require_match(grid, X, "lil_abs_estimator");
  const std::size_t t_idx = grid.node_index(t);
  const auto rungs = params.ladder(grid.dt);
  const auto max_cells =
      static_cast<std::size_t>(std::llround(params.h_max / grid.dt));
  if (t_idx + std::max<std::size_t>(max_cells, 1) > grid.n_steps)
    throw std::invalid_argument("lil_abs_estimator: t too close to horizon");
  const bool calibrated = params.calibration == LilParams::Calibration::SelfCalibrated;
  if (calibrated && path == nullptr)
    throw std::invalid_argument("lil_abs_estimator: self-calibration requires the path");

  const std::vector<double> x = detail::real_values(X);
  LilEstimate est;
  for (double h : rungs) {
    const auto cells = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(h / grid.dt)));
    const double q = detail::sup_quotient(grid, x, nullptr, 0.0, t_idx, cells,
                                          params.sup_stride);
    est.ladder_h.push_back(h);
    est.ladder_raw.push_back(q);
    double v = q;
    if (calibrated) {
      const double qb = detail::sup_quotient(grid, path->values, nullptr, 0.0, t_idx, cells,
                                             params.sup_stride);
      if (qb != 0.0) v = q / qb;
      if (!(qb > 0.0)) est.calibration_valid = false;
    }
    est.ladder_value.push_back(v);
  }
  est.value = est.ladder_value.back();
  return est;
}

struct SignedEstimate {
  double value = 0.0;
  std::vector<double> k_trace;
  bool stabilized = false;
  std::size_t k_stop_index = 0;
};

// k-shift signed estimator: estimate of X + k B minus k, stopped at the
// first k where successive values flatten (the k -> infinity limit is
// monotone once k exceeds sup |a|).
inline SignedEstimate lil_signed_estimator(const Grid& grid, const GridFunction& X,
                                           const BrownianPath& path, double t,
                                           const LilParams& params) {
  require_match(grid, X, "lil_signed_estimator");
  if (params.k_schedule.empty())
    throw std::invalid_argument("lil_signed_estimator: empty k_schedule");
  for (std::size_t i = 1; i < params.k_schedule.size(); ++i)
    if (!(params.k_schedule[i] > params.k_schedule[i - 1]))
      throw std::invalid_argument("lil_signed_estimator: k_schedule must be increasing");

  const std::size_t t_idx = grid.node_index(t);
  const auto rungs = params.ladder(grid.dt);
  const auto h_min_cells = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(rungs.back() / grid.dt)));
  const auto max_cells =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(params.h_max / grid.dt)));
  if (t_idx + max_cells > grid.n_steps)
    throw std::invalid_argument("lil_signed_estimator: t too close to horizon");
  const bool calibrated = params.calibration == LilParams::Calibration::SelfCalibrated;

  const std::vector<double> x = detail::real_values(X);
  const double qb = detail::sup_quotient(grid, path.values, nullptr, 0.0, t_idx, h_min_cells,
                                         params.sup_stride);
  SignedEstimate est;
  for (double k : params.k_schedule) {
    double q = detail::sup_quotient(grid, x, path.values.data(), k, t_idx, h_min_cells,
                                    params.sup_stride);
    if (calibrated && qb != 0.0) q /= qb;
    est.k_trace.push_back(q - k);
  }
  est.value = est.k_trace.back();
  est.k_stop_index = est.k_trace.size() - 1;
  for (std::size_t i = 1; i < est.k_trace.size(); ++i) {
    const double step = params.k_schedule[i] - params.k_schedule[i - 1];
    if (std::abs(est.k_trace[i] - est.k_trace[i - 1]) < params.k_stabilize_frac * step) {
      est.value = est.k_trace[i];
      est.k_stop_index = i;
      est.stabilized = true;
      break;
    }
  }
  return est;
}

enum class Side { Right, Left };

struct LocalAverage {
  std::vector<double> ladder_n;
  std::vector<double> ladder_value;
  double value = 0.0;
};

// ladder of n int over [t, t+1/n] (or the left window); windows snap to
// whole cells, so the value is exact for step functions once the window sits
// inside a constant piece
inline LocalAverage local_average(const Grid& grid, const GridFunction& a_est, double t,
                                  Side side, std::size_t n_ladder) {
  require_match(grid, a_est, "local_average");
  if (n_ladder == 0) throw std::invalid_argument("local_average: need at least one rung");
  const std::size_t t_idx = grid.node_index(t);
  LocalAverage out;
  for (std::size_t i = 1; i <= n_ladder; ++i) {
    const double n = std::exp2(static_cast<double>(i));
    const auto cells = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(1.0 / (n * grid.dt))));
    double acc = 0.0;
    if (side == Side::Right) {
      if (t_idx + cells > grid.n_steps)
        throw std::invalid_argument("local_average: window infeasible at boundary");
      for (std::size_t j = t_idx; j < t_idx + cells; ++j) acc += a_est.values[j].real();
    } else {
      if (t_idx < cells)
        throw std::invalid_argument("local_average: window infeasible at boundary");
      for (std::size_t j = t_idx - cells; j < t_idx; ++j) acc += a_est.values[j].real();
    }
    out.ladder_n.push_back(n);
    out.ladder_value.push_back(acc / static_cast<double>(cells));
  }
  out.value = out.ladder_value.back();
  return out;
}

// <e_n, b> = c_n - (recomputed a-part SFC), then b^Lambda = sum beta_n e_n.
// Oracle form: the a integral is recomputed from the spec under the
// differential's own flavor.
inline GridFunction recover_drift(const Grid& grid, const SfcVector& sfc,
                                  const StochasticDifferential& diff,
                                  const RandomFunctionSpec& a_oracle, const BrownianPath& path,
                                  const BasisSpec& e) {
  StochasticDifferential only_a = diff;
  only_a.a = a_oracle;
  only_a.b = deterministic_spec(constant_function(grid, Complex(0.0, 0.0)));
  const SfcVector sa = compute_sfc(grid, only_a, path, e, sfc.size());
  std::vector<Complex> beta(sfc.size(), Complex(0.0, 0.0));
  for (std::size_t m = 0; m < sfc.size(); ++m)
    if (sfc.present[m]) beta[m] = sfc.values[m] - sa.values[m];
  return synthesize(grid, e, beta, &sfc.present);
}

// Estimate form: a is only available as a realization; the a integral uses
// the exact FV evaluator, i.e. the ogawa_u flavor.
inline GridFunction recover_drift(const Grid& grid, const SfcVector& sfc,
                                  const GridFunction& a_realized, const BrownianPath& path,
                                  const BasisSpec& e) {
  const SfcVector sa = sfc_of_realized_fv(grid, a_realized, path, e, sfc.size());
  std::vector<Complex> beta(sfc.size(), Complex(0.0, 0.0));
  for (std::size_t m = 0; m < sfc.size(); ++m)
    if (sfc.present[m]) beta[m] = sfc.values[m] - sa.values[m];
  return synthesize(grid, e, beta, &sfc.present);
}

// ---- end-to-end pipeline ----------------------------------------------------

struct IdentificationOptions {
  BasisSpec e;
  std::size_t n_outer = 0;
  IndexMask mask;
  LilParams lil;
  std::vector<double> sample_nodes;  // defaults to 8 nodes clear of the horizon
  bool with_signed = true;
  bool with_drift = true;
  // recompute the a-part SFCs from the spec (oracle) or from the estimated
  // signed curve; the estimate path needs the exact FV evaluator and is
  // therefore only valid for the ogawa flavors
  bool drift_from_estimate = false;
  double local_avg_window = 0.0;  // time units; 0 disables curve smoothing
};

struct IdentificationReport {
  SfcVector sfc;
  GridFunction primitive;
  GridFunction primitive_lc;
  GridFunction primitive_ref;  // closed-form grid primitive
  double primitive_max_err = 0.0;
  double primitive_max_imag = 0.0;
  std::vector<double> nodes;
  std::vector<double> abs_est, abs_smoothed, abs_truth;
  std::vector<double> signed_est, signed_truth;
  std::vector<char> signed_stabilized;
  bool calibration_valid = true;
  GridFunction drift_recovered;
  GridFunction drift_truth;
  GridFunction drift_truth_masked;
  double drift_l2_err = 0.0;
  double drift_l2_rel = 0.0;
  double drift_l2_err_masked = 0.0;
  double seconds_sfc = 0.0, seconds_parseval = 0.0, seconds_lil = 0.0, seconds_drift = 0.0;
};

inline IdentificationReport run_identification(const Grid& grid,
                                               const StochasticDifferential& diff,
                                               const BrownianPath& path,
                                               const IdentificationOptions& opt) {
  IdentificationReport rep;
  const std::size_t n_outer = opt.n_outer > 0 ? opt.n_outer : grid.n_steps;
  using Clock = std::chrono::steady_clock;
  auto tick = Clock::now();
  auto lap = [&tick] {
    const auto now = Clock::now();
    const double s = std::chrono::duration<double>(now - tick).count();
    tick = now;
    return s;
  };

  rep.sfc = apply_mask(compute_sfc(grid, diff, path, opt.e, n_outer),
                       opt.mask);
  rep.seconds_sfc = lap();
  rep.primitive = parseval_transform(grid, rep.sfc, opt.e);
  rep.primitive_lc = left_continuous_mod(rep.primitive);
  rep.primitive_ref = primitive_truth(grid, diff, path);
  for (std::size_t j = 0; j < grid.n_nodes(); ++j)
    rep.primitive_max_err = std::max(
        rep.primitive_max_err, std::abs(rep.primitive.values[j] - rep.primitive_ref.values[j]));
  rep.primitive_max_imag = rep.primitive.max_imag();
  rep.seconds_parseval = lap();

  // LIL sweep over a node subsample
  rep.nodes = opt.sample_nodes;
  if (rep.nodes.empty()) {
    const auto h_cells = static_cast<std::size_t>(std::llround(opt.lil.h_max / grid.dt));
    const std::size_t usable = grid.n_steps > h_cells ? grid.n_steps - h_cells : 0;
    for (std::size_t i = 1; i <= 8; ++i)
      rep.nodes.push_back(grid.node_time((usable * i) / 9));
  }
  const GridFunction a_real = realize(diff.a, grid, path).fn;
  for (double t : rep.nodes) {
    const LilEstimate abs = lil_abs_estimator(grid, rep.primitive_lc, t, opt.lil, &path);
    rep.abs_est.push_back(abs.value);
    rep.calibration_valid = rep.calibration_valid && abs.calibration_valid;
    const std::size_t t_idx = grid.node_index(t);
    rep.abs_truth.push_back(std::abs(a_real.values[t_idx].real()));
    if (opt.with_signed) {
      const SignedEstimate se = lil_signed_estimator(grid, rep.primitive_lc, path, t, opt.lil);
      rep.signed_est.push_back(se.value);
      rep.signed_stabilized.push_back(se.stabilized ? 1 : 0);
      rep.signed_truth.push_back(a_real.values[t_idx].real());
    }
  }

  rep.seconds_lil = lap();

  // pointwise smoothing of the estimated curve (local averaging over the
  // right window of sample nodes)
  rep.abs_smoothed = rep.abs_est;
  if (opt.local_avg_window > 0.0) {
    for (std::size_t i = 0; i < rep.nodes.size(); ++i) {
      double acc = 0.0;
      std::size_t cnt = 0;
      for (std::size_t j = i; j < rep.nodes.size(); ++j) {
        if (rep.nodes[j] - rep.nodes[i] > opt.local_avg_window) break;
        acc += rep.abs_est[j];
        ++cnt;
      }
      rep.abs_smoothed[i] = acc / static_cast<double>(cnt);
    }
  }

  if (opt.with_drift) {
    if (opt.drift_from_estimate) {
      if (diff.flavor == IntegralFlavor::Skorokhod)
        throw std::invalid_argument(
            "run_identification: flavor mismatch - estimated-a drift recovery needs an "
            "ogawa-flavor differential");
      if (!opt.with_signed || rep.nodes.empty())
        throw std::invalid_argument(
            "run_identification: estimated-a drift recovery needs the signed curve");
      // step-interpolate the signed estimates between sample nodes
      GridFunction a_est = constant_function(grid, Complex(rep.signed_est.front(), 0.0));
      std::size_t next = 0;
      for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
        while (next + 1 < rep.nodes.size() &&
               grid.node_time(j) >= rep.nodes[next + 1] - 1e-12)
          ++next;
        a_est.values[j] = rep.signed_est[next];
      }
      rep.drift_recovered = recover_drift(grid, rep.sfc, a_est, path, opt.e);
    } else {
      rep.drift_recovered = recover_drift(grid, rep.sfc, diff, diff.a, path, opt.e);
    }
    rep.drift_truth = realize(diff.b, grid, path).fn;
    auto beta = project(grid, rep.drift_truth, opt.e, n_outer);
    for (std::size_t m = 0; m < n_outer; ++m)
      if (!rep.sfc.present[m]) beta[m] = Complex(0.0, 0.0);
    rep.drift_truth_masked = synthesize(grid, opt.e, beta, &rep.sfc.present);

    GridFunction diff_fn = rep.drift_recovered;
    for (std::size_t j = 0; j < diff_fn.values.size(); ++j)
      diff_fn.values[j] -= rep.drift_truth.values[j];
    rep.drift_l2_err = l2_norm(grid, diff_fn);
    const double bn = l2_norm(grid, rep.drift_truth);
    rep.drift_l2_rel = bn > 0.0 ? rep.drift_l2_err / bn : rep.drift_l2_err;

    GridFunction diff_masked = rep.drift_recovered;
    for (std::size_t j = 0; j < diff_masked.values.size(); ++j)
      diff_masked.values[j] -= rep.drift_truth_masked.values[j];
    rep.drift_l2_err_masked = l2_norm(grid, diff_masked);
  }
  rep.seconds_drift = lap();
  return rep;
}

}  // namespace sfclab
