#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "basis.hpp"
#include "grid.hpp"
#include "processes.hpp"

namespace sfclab {

// Ogawa series sum_{m<=M} <phi_m, f> B_L[phi_m] with per-path convergence
// diagnostics. tail_estimate is the maximal fluctuation of the partial sums
// over the last quartile of the M range.
struct SeriesResult {
  std::vector<Complex> partial_sums;  // S_1 .. S_{m_max}
  Complex converged_value{0.0, 0.0};
  double tail_estimate = 0.0;
  bool convergence_flag = false;
};

inline SeriesResult ogawa_phi_integral(const Grid& grid, const GridFunction& f,
                                       const BrownianPath& path, const BasisSpec& phi,
                                       std::size_t m_max, double tolerance = 1e-6) {
  require_match(grid, f, "ogawa_phi_integral");
  std::vector<Complex> wf(grid.n_steps), wb(grid.n_steps);
  for (std::size_t j = 0; j < grid.n_steps; ++j) {
    wf[j] = f.values[j] * grid.dt;
    wb[j] = Complex(path.increments[j], 0.0);
  }
  const auto cf = analysis_transform(grid, phi, m_max, wf, /*conjugate=*/true);
  const auto cb = analysis_transform(grid, phi, m_max, wb, /*conjugate=*/false);

  SeriesResult res;
  res.partial_sums.resize(m_max);
  Complex acc(0.0, 0.0);
  for (std::size_t m = 0; m < m_max; ++m) {
    acc += cf[m] * cb[m];
    res.partial_sums[m] = acc;
  }
  res.converged_value = acc;
  const std::size_t q = (3 * m_max) / 4;
  double tail = 0.0;
  for (std::size_t m = q; m < m_max; ++m)
    tail = std::max(tail, std::abs(res.partial_sums[m] - res.converged_value));
  res.tail_estimate = tail;
  res.convergence_flag = tail < tolerance;
  return res;
}

// Exact integration-by-parts evaluation of int_s^t a e d_u B for a real
// finite-variation realization a:
//   a(t-) B_t[e] - a(s+) B_s[e] - int_(s,t) B_u[e] da(u)
// with the grid one-sided limits a(t-) = a(t_{jt-1}), a(s+) = a(t_i). This is
// the Abel resummation of the left-point sum, so the two agree to rounding.
inline Complex ogawa_ibp(const Grid& grid, const GridFunction& a, const GridFunction& e,
                         const BrownianPath& path, double s, double t) {
  require_match(grid, a, "ogawa_ibp");
  require_match(grid, e, "ogawa_ibp");
  if (!a.is_real(1e-9))
    throw std::invalid_argument("ogawa_ibp: integrand must be a real finite-variation realization");
  const std::size_t i = grid.node_index(s);
  const std::size_t jt = grid.node_index(t);
  if (jt <= i) return Complex(0.0, 0.0);

  const std::vector<Complex> w = wiener_partial_sums(grid, e, path);
  Complex acc = a.values[jt - 1].real() * w[jt] - a.values[i].real() * w[i];
  for (std::size_t j = i + 1; j < jt; ++j)
    acc -= w[j] * (a.values[j].real() - a.values[j - 1].real());
  return acc;
}

// u-integrability diagnostic: the same integrand against several CONS.
struct UniversalityReport {
  std::vector<Complex> values;
  std::vector<bool> converged;
  double max_spread = 0.0;
  bool has_ibp = false;
  Complex ibp_value{0.0, 0.0};
  double max_ibp_deviation = 0.0;
};

inline UniversalityReport universality_check(const Grid& grid, const GridFunction& f,
                                             const BrownianPath& path,
                                             const std::vector<BasisSpec>& specs,
                                             std::size_t m_max, double tolerance = 1e-6,
                                             bool f_is_finite_variation = false) {
  if (specs.size() < 2)
    throw std::invalid_argument("universality_check: need at least two bases");
  UniversalityReport rep;
  for (const auto& spec : specs) {
    const SeriesResult r = ogawa_phi_integral(grid, f, path, spec, m_max, tolerance);
    rep.values.push_back(r.converged_value);
    rep.converged.push_back(r.convergence_flag);
  }
  for (std::size_t i = 0; i < rep.values.size(); ++i)
    for (std::size_t j = i + 1; j < rep.values.size(); ++j)
      rep.max_spread = std::max(rep.max_spread, std::abs(rep.values[i] - rep.values[j]));
  if (f_is_finite_variation) {
    rep.has_ibp = true;
    rep.ibp_value =
        ogawa_ibp(grid, f, constant_function(grid, Complex(1.0, 0.0)), path, 0.0, grid.horizon);
    for (const auto& v : rep.values)
      rep.max_ibp_deviation = std::max(rep.max_ibp_deviation, std::abs(v - rep.ibp_value));
  }
  return rep;
}

// Skorokhod integral of e(t) a(t). Adapted components take the left-point
// Ito sum; anticipative first-chaos components use the exact symmetrized
// second-chaos form; sin(B_L) factors use delta(F u) = F B_L[u] - <DF, u>.
inline Complex skorokhod_integral(const Grid& grid, const RandomFunctionSpec& a,
                                  const BrownianPath& path, const GridFunction& e) {
  require_match(grid, e, "skorokhod_integral");
  const ChaosNormalForm nf = normal_form(a, grid);
  const std::size_t n = grid.n_steps;
  Complex acc(0.0, 0.0);

  // adapted part: det(t) + B_t[f]
  if (nf.has_ito) {
    const std::vector<Complex> bf = wiener_partial_sums(grid, nf.ito_kernel, path);
    for (std::size_t j = 0; j < n; ++j)
      acc += e.values[j] * (nf.det.values[j] + bf[j]) * path.increments[j];
  } else {
    for (std::size_t j = 0; j < n; ++j)
      acc += e.values[j] * nf.det.values[j] * path.increments[j];
  }

  for (const auto& term : nf.chaos1) {
    Complex beu(0.0, 0.0), bv(0.0, 0.0), corr(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const Complex eu = e.values[j] * term.u.values[j];
      beu += eu * path.increments[j];
      bv += term.v.values[j] * path.increments[j];
      corr += eu * term.v.values[j] * grid.dt;
    }
    acc += beu * bv - corr;
  }

  if (!nf.sin_terms.empty()) {
    const double sb = std::sin(path.values[n]);
    const double cb = std::cos(path.values[n]);
    for (const auto& term : nf.sin_terms) {
      Complex beg(0.0, 0.0), ig(0.0, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const Complex eg = e.values[j] * term.g.values[j];
        beg += eg * path.increments[j];
        ig += eg * grid.dt;
      }
      acc += sb * beg - cb * ig;
    }
  }
  return acc;
}

// Skorokhod-plus-trace representation of the universal Ogawa integral:
// delta(e a) + int e(t) D_t a(t) dt, the trace taken over the symmetrized
// kernel (the triangular component of an S-type spec contributes half).
inline Complex ogawa_via_trace(const Grid& grid, const RandomFunctionSpec& a,
                               const BrownianPath& path, const GridFunction& e) {
  const Complex sk = skorokhod_integral(grid, a, path, e);
  const MalliavinKernel ker = malliavin_derivative(a, grid, path);
  const GridFunction diag = ker.symmetrized_diagonal(grid);
  Complex tr(0.0, 0.0);
  for (std::size_t j = 0; j < grid.n_steps; ++j)
    tr += e.values[j] * diag.values[j] * grid.dt;
  return sk + tr;
}

// The three terms of the S-type representation
//   int e a dB = delta(e a) + 1/2 int e f dt + int e(t) (int_0^t D_t da + D_t a0) dt
struct STypeDecomposition {
  Complex skorokhod_part{0.0, 0.0};
  Complex half_f_part{0.0, 0.0};
  Complex derivative_part{0.0, 0.0};
  Complex total() const { return skorokhod_part + half_f_part + derivative_part; }
};

inline STypeDecomposition s_type_decomposition(const Grid& grid, const STypeItoVariant& st,
                                               const BrownianPath& path, const GridFunction& e) {
  require_match(grid, e, "s_type_decomposition");
  const RandomFunctionSpec spec{st};
  STypeDecomposition d;
  d.skorokhod_part = skorokhod_integral(grid, spec, path, e);

  const GridFunction f = realize(RandomFunctionSpec{st.f}, grid, path).fn;
  Complex hf(0.0, 0.0);
  for (std::size_t j = 0; j < grid.n_steps; ++j)
    hf += e.values[j] * f.values[j] * grid.dt;
  d.half_f_part = 0.5 * hf;

  // strict diagonal = int_0^t D_t f delta B + int_0^t D_t h ds + D_t a0
  const MalliavinKernel ker = malliavin_derivative(spec, grid, path);
  const GridFunction diag = ker.diagonal(grid);
  Complex dp(0.0, 0.0);
  for (std::size_t j = 0; j < grid.n_steps; ++j)
    dp += e.values[j] * diag.values[j] * grid.dt;
  d.derivative_part = dp;
  return d;
}

// Partial Ito-Nisio expansion s -> sum_{m<=M} B_L[phi_m] <phi_m, e 1_{[0,s]}>
// together with its sup distance from B_s[e]. For a real CONS the coefficient
// orientation is immaterial; for a complex one only this orientation (the one
// the Ogawa series uses) converges to B_s[e].
struct ItoNisioResult {
  GridFunction partial;
  double sup_error = 0.0;
};

inline ItoNisioResult ito_nisio_partial(const Grid& grid, const GridFunction& e,
                                        const BrownianPath& path, const BasisSpec& phi,
                                        std::size_t m_count) {
  require_match(grid, e, "ito_nisio_partial");
  std::vector<Complex> wb(grid.n_steps);
  for (std::size_t j = 0; j < grid.n_steps; ++j) wb[j] = Complex(path.increments[j], 0.0);
  const auto cb = analysis_transform(grid, phi, m_count, wb, /*conjugate=*/false);

  ItoNisioResult res;
  res.partial = constant_function(grid, Complex(0.0, 0.0), Convention::Node);
  for (std::size_t m = 1; m <= m_count; ++m) {
    const GridFunction ph = basis_function(phi, m, grid);
    Complex cum(0.0, 0.0);
    for (std::size_t j = 1; j < grid.n_nodes(); ++j) {
      cum += std::conj(ph.values[j - 1]) * e.values[j - 1] * grid.dt;
      res.partial.values[j] += cb[m - 1] * cum;
    }
  }
  const std::vector<Complex> w = wiener_partial_sums(grid, e, path);
  for (std::size_t j = 0; j < grid.n_nodes(); ++j)
    res.sup_error = std::max(res.sup_error, std::abs(res.partial.values[j] - w[j]));
  return res;
}

}  // namespace sfclab
