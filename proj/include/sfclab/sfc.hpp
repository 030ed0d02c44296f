#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <stdexcept>
#include <vector>

#include "basis.hpp"
#include "grid.hpp"
#include "integrals.hpp"
#include "processes.hpp"

namespace sfclab {

enum class IntegralFlavor { OgawaPhi, OgawaU, Skorokhod };

inline const char* flavor_name(IntegralFlavor f) {
  switch (f) {
    case IntegralFlavor::OgawaPhi: return "ogawa_phi";
    case IntegralFlavor::OgawaU: return "ogawa_u";
    case IntegralFlavor::Skorokhod: return "skorokhod";
  }
  return "?";
}

// dY = a dB + b dt with the integral flavor fixing which noncausal integral
// defines the stochastic part.
struct StochasticDifferential {
  RandomFunctionSpec a;
  RandomFunctionSpec b;
  IntegralFlavor flavor = IntegralFlavor::OgawaU;
  BasisSpec phi;                   // inner CONS (OgawaPhi flavor and cross-checks)
  std::size_t phi_m_max = 0;       // 0 = use grid resolution
  double series_tolerance = 1e-6;
};

// Indexed SFC values c_n, n = 1..N, with a cofinite index mask. Entries
// outside the mask are flagged absent, never silently read as zero.
// path_seed records which sample the vector came from.
struct SfcVector {
  std::vector<Complex> values;
  std::vector<char> present;
  std::uint64_t path_seed = 0;
  double max_tail_estimate = 0.0;
  bool all_converged = true;

  std::size_t size() const { return values.size(); }
};

struct IndexMask {
  std::vector<std::size_t> excluded;  // 1-based outer indices
};

inline SfcVector apply_mask(const SfcVector& sfc, const IndexMask& mask) {
  SfcVector out = sfc;
  for (std::size_t n : mask.excluded) {
    if (n >= 1 && n <= out.present.size()) out.present[n - 1] = 0;
  }
  bool any = false;
  for (char p : out.present) any = any || (p != 0);
  if (!any) throw std::invalid_argument("apply_mask: mask must be cofinite and nonempty");
  return out;
}

inline void check_flavor_compatibility(const StochasticDifferential& diff, const Grid& grid) {
  if (diff.flavor == IntegralFlavor::Skorokhod || diff.flavor == IntegralFlavor::OgawaU) {
    if (!is_fv_variant(diff.a)) normal_form(diff.a, grid);  // throws when unsupported
  }
}

namespace detail {

// c_n(a-part) for the exact FV evaluator. By the Abel identity this equals
// ogawa_ibp(a, conj(e_n), [0, L]) per coefficient; the left-point form lets
// all N coefficients come out of one analysis transform.
inline std::vector<Complex> sfc_fv_leftsum(const Grid& grid, const GridFunction& a,
                                           const BrownianPath& path, const BasisSpec& e,
                                           std::size_t n_outer) {
  std::vector<Complex> w(grid.n_steps);
  for (std::size_t j = 0; j < grid.n_steps; ++j)
    w[j] = a.values[j] * path.increments[j];
  return analysis_transform(grid, e, n_outer, w, /*conjugate=*/true);
}

// c_n(a-part) = delta(conj(e_n) a) for every n, assembled from the chaos
// normal form with one transform per closed-form ingredient.
inline std::vector<Complex> sfc_skorokhod(const Grid& grid, const ChaosNormalForm& nf,
                                          const BrownianPath& path, const BasisSpec& e,
                                          std::size_t n_outer) {
  const std::size_t n = grid.n_steps;
  std::vector<Complex> w(n);

  // adapted component: left-point Ito sum of conj(e_n) (det + B_t[f])
  if (nf.has_ito) {
    const std::vector<Complex> bf = wiener_partial_sums(grid, nf.ito_kernel, path);
    for (std::size_t j = 0; j < n; ++j)
      w[j] = (nf.det.values[j] + bf[j]) * path.increments[j];
  } else {
    for (std::size_t j = 0; j < n; ++j) w[j] = nf.det.values[j] * path.increments[j];
  }
  std::vector<Complex> out = analysis_transform(grid, e, n_outer, w, /*conjugate=*/true);

  for (const auto& term : nf.chaos1) {
    Complex bv(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      bv += term.v.values[j] * path.increments[j];
      w[j] = term.u.values[j] * path.increments[j];
    }
    const auto bu = analysis_transform(grid, e, n_outer, w, /*conjugate=*/true);
    for (std::size_t j = 0; j < n; ++j)
      w[j] = term.u.values[j] * term.v.values[j] * grid.dt;
    const auto corr = analysis_transform(grid, e, n_outer, w, /*conjugate=*/true);
    for (std::size_t m = 0; m < n_outer; ++m) out[m] += bu[m] * bv - corr[m];
  }

  if (!nf.sin_terms.empty()) {
    const double sb = std::sin(path.values[n]);
    const double cb = std::cos(path.values[n]);
    for (const auto& term : nf.sin_terms) {
      for (std::size_t j = 0; j < n; ++j) w[j] = term.g.values[j] * path.increments[j];
      const auto bg = analysis_transform(grid, e, n_outer, w, /*conjugate=*/true);
      for (std::size_t j = 0; j < n; ++j) w[j] = term.g.values[j] * grid.dt;
      const auto ig = analysis_transform(grid, e, n_outer, w, /*conjugate=*/true);
      for (std::size_t m = 0; m < n_outer; ++m) out[m] += sb * bg[m] - cb * ig[m];
    }
  }
  return out;
}

}  // namespace detail

// c_n = (flavored integral of conj(e_n) a) + <e_n, b>, n = 1..n_outer
inline SfcVector compute_sfc(const Grid& grid, const StochasticDifferential& diff,
                             const BrownianPath& path, const BasisSpec& e,
                             std::size_t n_outer) {
  require_representable(e, n_outer, grid, "compute_sfc");
  check_flavor_compatibility(diff, grid);

  SfcVector sfc;
  sfc.present.assign(n_outer, 1);
  sfc.path_seed = path.seed;

  switch (diff.flavor) {
    case IntegralFlavor::OgawaU: {
      if (is_fv_variant(diff.a)) {
        const GridFunction a = realize(diff.a, grid, path).fn;
        if (!a.is_real(1e-9))
          throw std::invalid_argument("compute_sfc: FV evaluator needs a real realization");
        sfc.values = detail::sfc_fv_leftsum(grid, a, path, e, n_outer);
      } else {
        // trace representation: delta + <e_n, symmetrized diagonal>
        const ChaosNormalForm nf = normal_form(diff.a, grid);
        sfc.values = detail::sfc_skorokhod(grid, nf, path, e, n_outer);
        const MalliavinKernel ker = malliavin_derivative(diff.a, grid, path);
        const GridFunction diag = ker.symmetrized_diagonal(grid);
        std::vector<Complex> w(grid.n_steps);
        for (std::size_t j = 0; j < grid.n_steps; ++j) w[j] = diag.values[j] * grid.dt;
        const auto tr = analysis_transform(grid, e, n_outer, w, /*conjugate=*/true);
        for (std::size_t m = 0; m < n_outer; ++m) sfc.values[m] += tr[m];
      }
      break;
    }
    case IntegralFlavor::Skorokhod: {
      const ChaosNormalForm nf = normal_form(diff.a, grid);
      sfc.values = detail::sfc_skorokhod(grid, nf, path, e, n_outer);
      break;
    }
    case IntegralFlavor::OgawaPhi: {
      const GridFunction a = realize(diff.a, grid, path).fn;
      const std::size_t m_max =
          diff.phi_m_max > 0 ? diff.phi_m_max : max_representable(diff.phi, grid);
      sfc.values.resize(n_outer);
      for (std::size_t m = 1; m <= n_outer; ++m) {
        const GridFunction en = basis_function(e, m, grid);
        GridFunction integrand = a;
        for (std::size_t j = 0; j < integrand.values.size(); ++j)
          integrand.values[j] *= std::conj(en.values[j]);
        const SeriesResult r =
            ogawa_phi_integral(grid, integrand, path, diff.phi, m_max, diff.series_tolerance);
        sfc.values[m - 1] = r.converged_value;
        sfc.max_tail_estimate = std::max(sfc.max_tail_estimate, r.tail_estimate);
        sfc.all_converged = sfc.all_converged && r.convergence_flag;
      }
      break;
    }
  }

  // drift part <e_n, b>
  const GridFunction b = realize(diff.b, grid, path).fn;
  std::vector<Complex> w(grid.n_steps);
  for (std::size_t j = 0; j < grid.n_steps; ++j) w[j] = b.values[j] * grid.dt;
  const auto drift = analysis_transform(grid, e, n_outer, w, /*conjugate=*/true);
  for (std::size_t m = 0; m < n_outer; ++m) sfc.values[m] += drift[m];
  return sfc;
}

// a-only SFCs of a plain realized integrand under the exact FV evaluator
inline SfcVector sfc_of_realized_fv(const Grid& grid, const GridFunction& a,
                                    const BrownianPath& path, const BasisSpec& e,
                                    std::size_t n_outer) {
  require_representable(e, n_outer, grid, "sfc_of_realized_fv");
  SfcVector sfc;
  sfc.present.assign(n_outer, 1);
  sfc.path_seed = path.seed;
  sfc.values = detail::sfc_fv_leftsum(grid, a, path, e, n_outer);
  return sfc;
}

// grid primitive Y(t_j) of the differential, used as ground truth:
// Ogawa flavors integrate a against dB left-point; the Skorokhod flavor
// accumulates delta(1_{[0,t)} a) from the chaos closed forms.
inline GridFunction primitive_truth(const Grid& grid, const StochasticDifferential& diff,
                                    const BrownianPath& path) {
  const std::size_t n = grid.n_steps;
  GridFunction out = constant_function(grid, Complex(0.0, 0.0), Convention::Node);

  if (diff.flavor == IntegralFlavor::Skorokhod) {
    const ChaosNormalForm nf = normal_form(diff.a, grid);
    std::vector<Complex> adapted(n);
    if (nf.has_ito) {
      const std::vector<Complex> bf = wiener_partial_sums(grid, nf.ito_kernel, path);
      for (std::size_t j = 0; j < n; ++j)
        adapted[j] = (nf.det.values[j] + bf[j]) * path.increments[j];
    } else {
      for (std::size_t j = 0; j < n; ++j) adapted[j] = nf.det.values[j] * path.increments[j];
    }
    Complex cum(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      cum += adapted[j];
      out.values[j + 1] = cum;
    }
    for (const auto& term : nf.chaos1) {
      const Complex bv = wiener_integral(grid, term.v, path, grid.horizon);
      Complex bu(0.0, 0.0), corr(0.0, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        bu += term.u.values[j] * path.increments[j];
        corr += term.u.values[j] * term.v.values[j] * grid.dt;
        out.values[j + 1] += bu * bv - corr;
      }
    }
    if (!nf.sin_terms.empty()) {
      const double sb = std::sin(path.values[n]);
      const double cb = std::cos(path.values[n]);
      for (const auto& term : nf.sin_terms) {
        Complex bg(0.0, 0.0), ig(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          bg += term.g.values[j] * path.increments[j];
          ig += term.g.values[j] * grid.dt;
          out.values[j + 1] += sb * bg - cb * ig;
        }
      }
    }
  } else {
    const GridFunction a = realize(diff.a, grid, path).fn;
    Complex cum(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      cum += a.values[j] * path.increments[j];
      out.values[j + 1] = cum;
    }
  }

  const GridFunction b = realize(diff.b, grid, path).fn;
  Complex cum(0.0, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    cum += b.values[j] * grid.dt;
    out.values[j + 1] += cum;
  }
  return out;
}

}  // namespace sfclab
