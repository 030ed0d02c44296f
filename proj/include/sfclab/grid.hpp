#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace sfclab {

using Complex = std::complex<double>;

// Uniform dyadic grid on [0, L]. n_steps is a power of two so that Haar
// projections of grid step functions are exact.
struct Grid {
  double horizon = 1.0;
  std::size_t n_steps = 2;
  double dt = 0.5;

  Grid() = default;
  Grid(double L, std::size_t n) : horizon(L), n_steps(n), dt(L / static_cast<double>(n)) {
    if (!(L > 0.0)) throw std::invalid_argument("Grid: horizon must be positive");
    if (n < 2 || (n & (n - 1)) != 0)
      throw std::invalid_argument("Grid: n_steps must be a power of two >= 2");
  }

  std::size_t n_nodes() const { return n_steps + 1; }
  double node_time(std::size_t j) const { return static_cast<double>(j) * dt; }

  // nodes only; every theorem in scope is evaluated at nodes
  std::size_t node_index(double t) const {
    const double x = t / dt;
    const auto j = static_cast<long long>(std::llround(x));
    if (j < 0 || static_cast<std::size_t>(j) > n_steps ||
        std::abs(x - static_cast<double>(j)) > 1e-9)
      throw std::invalid_argument("off-grid time: t=" + std::to_string(t));
    return static_cast<std::size_t>(j);
  }

  bool is_node(double t) const {
    const double x = t / dt;
    const auto j = static_cast<long long>(std::llround(x));
    return j >= 0 && static_cast<std::size_t>(j) <= n_steps &&
           std::abs(x - static_cast<double>(j)) <= 1e-9;
  }
};

// Interpretation of node values: LeftPoint means piecewise constant on
// [t_j, t_{j+1}) with value values[j]; Node means plain samples at nodes.
enum class Convention { LeftPoint, Node };

struct GridFunction {
  std::vector<Complex> values;  // n_steps + 1 entries
  Convention convention = Convention::LeftPoint;

  std::size_t size() const { return values.size(); }

  double max_imag() const {
    double m = 0.0;
    for (const auto& z : values) m = std::max(m, std::abs(z.imag()));
    return m;
  }
  bool is_real(double tol = 1e-12) const { return max_imag() <= tol; }
};

inline void require_match(const Grid& grid, const GridFunction& f, const char* who) {
  if (f.values.size() != grid.n_nodes())
    throw std::invalid_argument(std::string(who) + ": grid mismatch");
}

inline void require_match(const GridFunction& f, const GridFunction& g, const char* who) {
  if (f.values.size() != g.values.size())
    throw std::invalid_argument(std::string(who) + ": grid mismatch");
}

inline GridFunction constant_function(const Grid& grid, Complex c,
                                      Convention conv = Convention::LeftPoint) {
  GridFunction f;
  f.values.assign(grid.n_nodes(), c);
  f.convention = conv;
  return f;
}

// Build a left-point step function from per-cell values; the final node
// carries the last cell's value so node-wise comparisons stay consistent.
inline GridFunction from_cells(const Grid& grid, const std::vector<Complex>& cells) {
  if (cells.size() != grid.n_steps)
    throw std::invalid_argument("from_cells: need one value per cell");
  GridFunction f;
  f.values.resize(grid.n_nodes());
  for (std::size_t j = 0; j < grid.n_steps; ++j) f.values[j] = cells[j];
  f.values[grid.n_steps] = cells[grid.n_steps - 1];
  f.convention = Convention::LeftPoint;
  return f;
}

inline GridFunction sample_nodes(const Grid& grid, const std::vector<double>& v) {
  if (v.size() != grid.n_nodes()) throw std::invalid_argument("sample_nodes: size mismatch");
  GridFunction f;
  f.values.assign(v.begin(), v.end());
  f.convention = Convention::Node;
  return f;
}

inline GridFunction add(const GridFunction& f, const GridFunction& g) {
  require_match(f, g, "add");
  GridFunction out = f;
  for (std::size_t j = 0; j < out.values.size(); ++j) out.values[j] += g.values[j];
  return out;
}

inline GridFunction scale(const GridFunction& f, Complex c) {
  GridFunction out = f;
  for (auto& z : out.values) z *= c;
  return out;
}

inline GridFunction pointwise_mul(const GridFunction& f, const GridFunction& g) {
  require_match(f, g, "pointwise_mul");
  GridFunction out = f;
  for (std::size_t j = 0; j < out.values.size(); ++j) out.values[j] *= g.values[j];
  return out;
}

// One sampled Brownian trajectory: increments ~ N(0, dt) and node values.
struct BrownianPath {
  std::uint64_t seed = 0;
  std::vector<double> increments;  // n_steps entries; increments[j] covers [t_j, t_{j+1})
  std::vector<double> values;      // n_steps + 1 entries; values[0] = 0

  GridFunction as_grid_function() const {
    GridFunction f;
    f.values.assign(values.begin(), values.end());
    f.convention = Convention::Node;
    return f;
  }
};

inline BrownianPath sample_brownian(const Grid& grid, std::uint64_t seed) {
  BrownianPath path;
  path.seed = seed;
  path.increments.resize(grid.n_steps);
  path.values.resize(grid.n_nodes());
  SplitMix64 rng(seed);
  const double sdt = std::sqrt(grid.dt);
  double acc = 0.0;
  path.values[0] = 0.0;
  for (std::size_t j = 0; j < grid.n_steps; ++j) {
    const double inc = sdt * rng.next_gaussian();
    path.increments[j] = inc;
    acc += inc;
    path.values[j + 1] = acc;
  }
  return path;
}

// B_t[e] = left-point sum over [0, t):  sum_{t_j < t} e(t_j) dB_{j+1}
inline Complex wiener_integral(const Grid& grid, const GridFunction& e,
                               const BrownianPath& path, double t) {
  require_match(grid, e, "wiener_integral");
  const std::size_t jt = grid.node_index(t);
  Complex acc(0.0, 0.0);
  for (std::size_t j = 0; j < jt; ++j) acc += e.values[j] * path.increments[j];
  return acc;
}

// all partial sums B_{t_j}[e], j = 0..n_steps
inline std::vector<Complex> wiener_partial_sums(const Grid& grid, const GridFunction& e,
                                                const BrownianPath& path) {
  require_match(grid, e, "wiener_partial_sums");
  std::vector<Complex> w(grid.n_nodes());
  Complex acc(0.0, 0.0);
  w[0] = acc;
  for (std::size_t j = 0; j < grid.n_steps; ++j) {
    acc += e.values[j] * path.increments[j];
    w[j + 1] = acc;
  }
  return w;
}

// left-point rule over [s, t); exact for functions constant on cells
inline Complex lebesgue_integral(const Grid& grid, const GridFunction& f, double s, double t) {
  require_match(grid, f, "lebesgue_integral");
  const std::size_t i = grid.node_index(s);
  const std::size_t jt = grid.node_index(t);
  if (i > jt) throw std::invalid_argument("lebesgue_integral: need s <= t");
  Complex acc(0.0, 0.0);
  for (std::size_t j = i; j < jt; ++j) acc += f.values[j];
  return acc * grid.dt;
}

// Discrete Stieltjes integral over the open interval (s, t): the measure dv
// of the left-point step realization puts the atom v(t_j) - v(t_{j-1}) at
// node t_j; nodes strictly inside (s, t) contribute. For f == 1 this
// telescopes to v(t-) - v(s+) with the grid one-sided limits.
inline Complex stieltjes_integral(const Grid& grid, const GridFunction& f,
                                  const GridFunction& v, double s, double t) {
  require_match(grid, f, "stieltjes_integral");
  require_match(grid, v, "stieltjes_integral");
  if (!v.is_real(1e-12))
    throw std::invalid_argument("stieltjes_integral: integrator must be real-valued");
  const std::size_t i = grid.node_index(s);
  const std::size_t jt = grid.node_index(t);
  if (i > jt) throw std::invalid_argument("stieltjes_integral: need s <= t");
  Complex acc(0.0, 0.0);
  for (std::size_t j = i + 1; j < jt; ++j)
    acc += f.values[j] * (v.values[j].real() - v.values[j - 1].real());
  return acc;
}

// <f, g> = sum conj(f) g dt, conjugate-linear in the first argument
inline Complex l2_inner(const Grid& grid, const GridFunction& f, const GridFunction& g) {
  require_match(grid, f, "l2_inner");
  require_match(grid, g, "l2_inner");
  Complex acc(0.0, 0.0);
  for (std::size_t j = 0; j < grid.n_steps; ++j) acc += std::conj(f.values[j]) * g.values[j];
  return acc * grid.dt;
}

inline double l2_norm(const Grid& grid, const GridFunction& f) {
  require_match(grid, f, "l2_norm");
  double acc = 0.0;
  for (std::size_t j = 0; j < grid.n_steps; ++j) acc += std::norm(f.values[j]);
  return std::sqrt(acc * grid.dt);
}

inline double sup_norm(const GridFunction& f) {
  double m = 0.0;
  for (const auto& z : f.values) m = std::max(m, std::abs(z));
  return m;
}

}  // namespace sfclab
