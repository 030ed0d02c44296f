#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "grid.hpp"

namespace sfclab {

// Complete orthonormal systems of L^2([0, L]) realized on the grid.
//
//   haar          exact step functions on dyadic cells (default)
//   trigonometric T_n(t) = exp(2 pi i n t / L) / sqrt(L), signed index
//                 enumerated 0, 1, -1, 2, -2, ...
//   cosine        DCT-II system sampled at cell midpoints so that grid
//                 orthonormality is exact
//   indicator     normalized cell indicators
enum class BasisFamily { Haar, Trigonometric, Cosine, Indicator };

// PositiveFirst front-loads positive frequencies (two positives per
// negative); used as the adversarial ordering diagnostic for C-valued CONS.
enum class TrigOrdering { Symmetric, PositiveFirst };

struct BasisSpec {
  BasisFamily family = BasisFamily::Haar;
  TrigOrdering ordering = TrigOrdering::Symmetric;

  bool operator==(const BasisSpec& o) const {
    return family == o.family && ordering == o.ordering;
  }
};

inline const char* family_name(BasisFamily f) {
  switch (f) {
    case BasisFamily::Haar: return "haar";
    case BasisFamily::Trigonometric: return "trigonometric";
    case BasisFamily::Cosine: return "cosine";
    case BasisFamily::Indicator: return "indicator";
  }
  return "?";
}

namespace detail {

// index >= 2 maps to (level k, position i): p = index - 1, k = floor(log2 p)
inline void haar_position(std::size_t index, std::size_t& k, std::size_t& i) {
  const std::size_t p = index - 1;
  k = 0;
  while ((std::size_t{2} << k) <= p) ++k;  // k = floor(log2 p)
  i = p - (std::size_t{1} << k);
}

inline long trig_frequency(std::size_t index, TrigOrdering ordering) {
  if (ordering == TrigOrdering::Symmetric) {
    if (index == 1) return 0;
    const long r = static_cast<long>(index / 2);
    return (index % 2 == 0) ? r : -r;
  }
  // PositiveFirst: 0, +1, +2, -1, +3, +4, -2, ...
  if (index == 1) return 0;
  const std::size_t r = index - 2;
  const std::size_t block = r / 3, pos = r % 3;
  if (pos < 2) return static_cast<long>(2 * block + pos + 1);
  return -static_cast<long>(block + 1);
}

}  // namespace detail

// largest index usable before "basis finer than grid"
inline std::size_t max_representable(const BasisSpec& spec, const Grid& grid) {
  switch (spec.family) {
    case BasisFamily::Haar:
    case BasisFamily::Indicator:
      return grid.n_steps;
    case BasisFamily::Trigonometric:
      return grid.n_steps;  // |n| <= n_steps/2 at index n_steps; beyond aliases
    case BasisFamily::Cosine:
      return grid.n_steps;  // k = n_steps breaks grid normalization
  }
  return 0;
}

inline void require_representable(const BasisSpec& spec, std::size_t index, const Grid& grid,
                                  const char* who) {
  if (index == 0) throw std::invalid_argument(std::string(who) + ": index must be >= 1");
  if (index > max_representable(spec, grid))
    throw std::invalid_argument(std::string(who) + ": basis finer than grid (index " +
                                std::to_string(index) + ", family " +
                                family_name(spec.family) + ")");
}

inline GridFunction basis_function(const BasisSpec& spec, std::size_t index, const Grid& grid) {
  require_representable(spec, index, grid, "basis_function");
  const std::size_t n = grid.n_steps;
  const double L = grid.horizon;
  const double root_l = std::sqrt(L);

  switch (spec.family) {
    case BasisFamily::Haar: {
      std::vector<Complex> cells(n, Complex(0.0, 0.0));
      if (index == 1) {
        std::fill(cells.begin(), cells.end(), Complex(1.0 / root_l, 0.0));
      } else {
        std::size_t k, i;
        detail::haar_position(index, k, i);
        const std::size_t width = n >> (k + 1);  // half-support in cells
        if (width == 0)
          throw std::invalid_argument("basis_function: basis finer than grid (haar level)");
        const double v = std::exp2(0.5 * static_cast<double>(k)) / root_l;
        const std::size_t start = 2 * width * i;
        for (std::size_t c = 0; c < width; ++c) cells[start + c] = Complex(v, 0.0);
        for (std::size_t c = 0; c < width; ++c) cells[start + width + c] = Complex(-v, 0.0);
      }
      return from_cells(grid, cells);
    }
    case BasisFamily::Trigonometric: {
      const long freq = detail::trig_frequency(index, spec.ordering);
      GridFunction f;
      f.values.resize(grid.n_nodes());
      f.convention = Convention::LeftPoint;
      const double w = 2.0 * std::numbers::pi * static_cast<double>(freq) / L;
      for (std::size_t j = 0; j <= n; ++j) {
        const double th = w * grid.node_time(j);
        f.values[j] = Complex(std::cos(th), std::sin(th)) / root_l;
      }
      return f;
    }
    case BasisFamily::Cosine: {
      std::vector<Complex> cells(n);
      if (index == 1) {
        std::fill(cells.begin(), cells.end(), Complex(1.0 / root_l, 0.0));
      } else {
        const double k = static_cast<double>(index - 1);
        const double amp = std::sqrt(2.0 / L);
        for (std::size_t j = 0; j < n; ++j) {
          const double tm = (static_cast<double>(j) + 0.5) * grid.dt;  // cell midpoint
          cells[j] = Complex(amp * std::cos(std::numbers::pi * k * tm / L), 0.0);
        }
      }
      return from_cells(grid, cells);
    }
    case BasisFamily::Indicator: {
      std::vector<Complex> cells(n, Complex(0.0, 0.0));
      cells[index - 1] = Complex(1.0 / std::sqrt(grid.dt), 0.0);
      return from_cells(grid, cells);
    }
  }
  throw std::logic_error("basis_function: unknown family");
}

// c_m = sum_j phi_m(t_j) w_j (or conj(phi_m) when conjugate), for m = 1..count.
// w holds one weight per cell. Haar/indicator run in O(n log n) / O(n); the
// sampled families are evaluated directly.
inline std::vector<Complex> analysis_transform(const Grid& grid, const BasisSpec& spec,
                                               std::size_t count, const std::vector<Complex>& w,
                                               bool conjugate) {
  if (w.size() != grid.n_steps)
    throw std::invalid_argument("analysis_transform: need one weight per cell");
  if (count == 0) return {};
  require_representable(spec, count, grid, "analysis_transform");
  const std::size_t n = grid.n_steps;
  const double root_l = std::sqrt(grid.horizon);
  std::vector<Complex> out(count, Complex(0.0, 0.0));

  switch (spec.family) {
    case BasisFamily::Haar: {
      // pairwise sum pyramid; coefficient (k, i) reads level k+1 sums
      std::vector<std::vector<Complex>> sums;
      sums.emplace_back(w);
      while (sums.back().size() > 1) {
        const auto& prev = sums.back();
        std::vector<Complex> next(prev.size() / 2);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] = prev[2 * i] + prev[2 * i + 1];
        sums.push_back(std::move(next));
      }
      const std::size_t p = sums.size() - 1;  // log2 n
      out[0] = sums[p][0] / root_l;
      for (std::size_t m = 2; m <= count; ++m) {
        std::size_t k, i;
        detail::haar_position(m, k, i);
        const auto& lev = sums[p - k - 1];  // cells of size n / 2^{k+1}
        const double v = std::exp2(0.5 * static_cast<double>(k)) / root_l;
        out[m - 1] = v * (lev[2 * i] - lev[2 * i + 1]);
      }
      return out;
    }
    case BasisFamily::Indicator: {
      const double v = 1.0 / std::sqrt(grid.dt);
      for (std::size_t m = 1; m <= count; ++m) out[m - 1] = v * w[m - 1];
      return out;
    }
    case BasisFamily::Trigonometric: {
      for (std::size_t m = 1; m <= count; ++m) {
        const long freq = detail::trig_frequency(m, spec.ordering);
        const double ww = 2.0 * std::numbers::pi * static_cast<double>(freq) / grid.horizon *
                          (conjugate ? -1.0 : 1.0);
        Complex acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          const double th = ww * grid.node_time(j);
          acc += Complex(std::cos(th), std::sin(th)) * w[j];
        }
        out[m - 1] = acc / root_l;
      }
      return out;
    }
    case BasisFamily::Cosine: {
      for (std::size_t m = 1; m <= count; ++m) {
        Complex acc(0.0, 0.0);
        if (m == 1) {
          for (std::size_t j = 0; j < n; ++j) acc += w[j];
          out[0] = acc / root_l;
        } else {
          const double k = static_cast<double>(m - 1);
          const double amp = std::sqrt(2.0 / grid.horizon);
          for (std::size_t j = 0; j < n; ++j) {
            const double tm = (static_cast<double>(j) + 0.5) * grid.dt;
            acc += amp * std::cos(std::numbers::pi * k * tm / grid.horizon) * w[j];
          }
          out[m - 1] = acc;
        }
      }
      return out;
    }
  }
  throw std::logic_error("analysis_transform: unknown family");
}

// sum_m c_m phi_m as a grid function; entries with present[m-1] == 0 are
// skipped (mask-fill-zero policy)
inline GridFunction synthesize(const Grid& grid, const BasisSpec& spec,
                               const std::vector<Complex>& coeffs,
                               const std::vector<char>* present = nullptr) {
  const std::size_t count = coeffs.size();
  if (count == 0) return constant_function(grid, Complex(0.0, 0.0));
  require_representable(spec, count, grid, "synthesize");
  const std::size_t n = grid.n_steps;
  const double root_l = std::sqrt(grid.horizon);
  auto included = [&](std::size_t m) { return present == nullptr || (*present)[m - 1] != 0; };

  if (spec.family == BasisFamily::Haar) {
    // top-down refinement over levels
    std::vector<Complex> acc(1, included(1) ? coeffs[0] / root_l : Complex(0.0, 0.0));
    std::size_t level_first = 2;  // first index of level k = 0
    for (std::size_t k = 0; acc.size() < n; ++k) {
      const std::size_t cells = acc.size();
      std::vector<Complex> next(2 * cells);
      const double v = std::exp2(0.5 * static_cast<double>(k)) / root_l;
      for (std::size_t i = 0; i < cells; ++i) {
        const std::size_t m = level_first + i;
        Complex d(0.0, 0.0);
        if (m <= count && included(m)) d = v * coeffs[m - 1];
        next[2 * i] = acc[i] + d;
        next[2 * i + 1] = acc[i] - d;
      }
      acc = std::move(next);
      level_first += cells;
    }
    return from_cells(grid, acc);
  }
  if (spec.family == BasisFamily::Indicator) {
    std::vector<Complex> cells(n, Complex(0.0, 0.0));
    const double v = 1.0 / std::sqrt(grid.dt);
    for (std::size_t m = 1; m <= count; ++m)
      if (included(m)) cells[m - 1] = v * coeffs[m - 1];
    return from_cells(grid, cells);
  }
  GridFunction out = constant_function(grid, Complex(0.0, 0.0));
  for (std::size_t m = 1; m <= count; ++m) {
    if (!included(m) || coeffs[m - 1] == Complex(0.0, 0.0)) continue;
    const GridFunction phi = basis_function(spec, m, grid);
    for (std::size_t j = 0; j < out.values.size(); ++j)
      out.values[j] += coeffs[m - 1] * phi.values[j];
  }
  return out;
}

// c_m = <phi_m, f> for m = 1..count
inline std::vector<Complex> project(const Grid& grid, const GridFunction& f,
                                    const BasisSpec& spec, std::size_t count) {
  require_match(grid, f, "project");
  std::vector<Complex> w(grid.n_steps);
  for (std::size_t j = 0; j < grid.n_steps; ++j) w[j] = f.values[j] * grid.dt;
  return analysis_transform(grid, spec, count, w, /*conjugate=*/true);
}

// cumulative left-point primitive; value at t_0 is 0
inline GridFunction antiderivative(const Grid& grid, const GridFunction& e) {
  require_match(grid, e, "antiderivative");
  GridFunction out;
  out.values.resize(grid.n_nodes());
  out.convention = Convention::Node;
  Complex acc(0.0, 0.0);
  out.values[0] = acc;
  for (std::size_t j = 0; j < grid.n_steps; ++j) {
    acc += e.values[j] * grid.dt;
    out.values[j + 1] = acc;
  }
  return out;
}

// Diagnostic for the basis conditions (C.1)/(C.2): tracks the running norms
// of sum_{m<=M} phi_m * antiderivative(phi_m) and a grid proxy for bounded
// variation of e. Report-only.
struct BasisConditionReport {
  std::vector<double> sup_l2;  // ||sum_{m<=M} phi_m phi~_m||_{L2}, M = 1..M_max
  std::vector<double> sup_l1;
  double growth_ratio_l2 = 0.0;  // max over last quartile / max over first three
  double growth_ratio_l1 = 0.0;
  bool l2_bounded = false;
  bool l1_bounded = false;
  double e_tv_fine = 0.0;    // total variation sampled on the full grid
  double e_tv_coarse = 0.0;  // total variation on every second node
  bool e_tv_ok = false;      // false when variation keeps growing with refinement
  bool c1 = false;
  bool c2 = false;
  double c1_margin = 0.0;
  double c2_margin = 0.0;
};

inline BasisConditionReport check_basis_condition(const Grid& grid, const GridFunction& e,
                                                  const BasisSpec& phi, std::size_t m_max) {
  require_match(grid, e, "check_basis_condition");
  require_representable(phi, m_max, grid, "check_basis_condition");
  BasisConditionReport rep;
  rep.sup_l2.reserve(m_max);
  rep.sup_l1.reserve(m_max);

  GridFunction running = constant_function(grid, Complex(0.0, 0.0));
  for (std::size_t m = 1; m <= m_max; ++m) {
    const GridFunction f = basis_function(phi, m, grid);
    const GridFunction fa = antiderivative(grid, f);
    for (std::size_t j = 0; j < running.values.size(); ++j)
      running.values[j] += f.values[j] * fa.values[j];
    rep.sup_l2.push_back(l2_norm(grid, running));
    double l1 = 0.0;
    for (std::size_t j = 0; j < grid.n_steps; ++j) l1 += std::abs(running.values[j]);
    rep.sup_l1.push_back(l1 * grid.dt);
  }

  auto growth = [&](const std::vector<double>& seq) {
    const std::size_t q = std::max<std::size_t>(1, (3 * seq.size()) / 4);
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < seq.size(); ++i)
      (i < q ? head : tail) = std::max(i < q ? head : tail, seq[i]);
    return head > 0.0 ? tail / head : (tail > 0.0 ? 1e308 : 1.0);
  };
  rep.growth_ratio_l2 = growth(rep.sup_l2);
  rep.growth_ratio_l1 = growth(rep.sup_l1);
  rep.l2_bounded = rep.growth_ratio_l2 <= 1.05;
  rep.l1_bounded = rep.growth_ratio_l1 <= 1.05;

  auto tv_stride = [&](std::size_t stride) {
    double acc = 0.0;
    for (std::size_t j = stride; j <= grid.n_steps; j += stride)
      acc += std::abs(e.values[j] - e.values[j - stride]);
    return acc;
  };
  rep.e_tv_fine = tv_stride(1);
  rep.e_tv_coarse = tv_stride(2);
  rep.e_tv_ok = rep.e_tv_fine <= 1.5 * rep.e_tv_coarse + 1e-12;

  rep.c1 = rep.e_tv_ok && rep.l2_bounded;
  rep.c2 = rep.l1_bounded;  // every grid function is trivially regulated
  rep.c1_margin = 1.05 - rep.growth_ratio_l2;
  rep.c2_margin = 1.05 - rep.growth_ratio_l1;
  return rep;
}

}  // namespace sfclab
