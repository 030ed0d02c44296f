#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "sfclab/grid.hpp"
#include "sfclab/rng.hpp"

using namespace sfclab;

namespace {

GridFunction ramp(const Grid& grid) {
  GridFunction f;
  f.values.resize(grid.n_nodes());
  for (std::size_t j = 0; j < f.values.size(); ++j) f.values[j] = grid.node_time(j);
  return f;
}

}  // namespace

TEST_CASE("grid construction and node lookup") {
  const Grid grid(1.0, 1024);
  CHECK(grid.dt == doctest::Approx(1.0 / 1024).epsilon(1e-15));
  CHECK(grid.node_time(0) == 0.0);
  CHECK(grid.node_time(1024) == doctest::Approx(1.0));
  CHECK(grid.node_index(0.5) == 512);
  CHECK_THROWS_WITH_AS(grid.node_index(0.5 + 0.3 * grid.dt), doctest::Contains("off-grid"),
                       std::invalid_argument);
  CHECK_THROWS(Grid(1.0, 1000));  // not a power of two
  CHECK_THROWS(Grid(-1.0, 1024));
}

TEST_CASE("brownian sampling is deterministic in (grid, seed)") {
  const Grid grid(1.0, 256);
  const BrownianPath p1 = sample_brownian(grid, 42);
  const BrownianPath p2 = sample_brownian(grid, 42);
  const BrownianPath p3 = sample_brownian(grid, 43);
  CHECK(p1.increments == p2.increments);
  CHECK(p1.values[0] == 0.0);
  CHECK(p1.increments != p3.increments);
  // values are cumulative sums of increments
  double acc = 0.0;
  for (std::size_t j = 0; j < grid.n_steps; ++j) {
    acc += p1.increments[j];
    CHECK(p1.values[j + 1] == doctest::Approx(acc).epsilon(1e-15));
  }
}

TEST_CASE("brownian terminal moments over 1e4 replicates") {
  const Grid grid(1.0, 64);
  const std::size_t reps = 10000;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    const BrownianPath p = sample_brownian(grid, replicate_seed(777, r));
    mean += p.values[grid.n_steps];
  }
  mean /= static_cast<double>(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const BrownianPath p = sample_brownian(grid, replicate_seed(777, r));
    const double d = p.values[grid.n_steps] - mean;
    m2 += d * d;
  }
  const double var = m2 / static_cast<double>(reps - 1);
  CHECK(std::abs(mean) <= 4.0 * std::sqrt(grid.horizon) / 100.0);
  CHECK(std::abs(var - grid.horizon) <= 0.05 * grid.horizon);
}

TEST_CASE("wiener integral basics") {
  const Grid grid(1.0, 512);
  const BrownianPath path = sample_brownian(grid, 7);

  const GridFunction zero = constant_function(grid, Complex(0.0, 0.0));
  CHECK(wiener_integral(grid, zero, path, 1.0) == Complex(0.0, 0.0));

  const GridFunction one = constant_function(grid, Complex(1.0, 0.0));
  CHECK(wiener_integral(grid, one, path, 0.0) == Complex(0.0, 0.0));  // B_0[e] = 0
  CHECK(std::abs(wiener_integral(grid, one, path, 1.0) - path.values[grid.n_steps]) < 1e-12);

  // e = 1_{[0, L/2]} -> B(L/2), against the direct increment-sum oracle
  GridFunction half = constant_function(grid, Complex(0.0, 0.0));
  for (std::size_t j = 0; j < grid.n_steps / 2; ++j) half.values[j] = 1.0;
  Complex oracle(0.0, 0.0);
  for (std::size_t j = 0; j < grid.n_steps / 2; ++j) oracle += path.increments[j];
  CHECK(std::abs(wiener_integral(grid, half, path, 1.0) - oracle) < 1e-14);
  CHECK(std::abs(wiener_integral(grid, half, path, 1.0) - path.values[grid.n_steps / 2]) < 1e-12);

  CHECK_THROWS_WITH_AS(wiener_integral(grid, one, path, 0.5 * grid.dt),
                       doctest::Contains("off-grid"), std::invalid_argument);
}

TEST_CASE("wiener integral is linear in the integrand") {
  const Grid grid(1.0, 128);
  const BrownianPath path = sample_brownian(grid, 11);
  SplitMix64 rng(5);
  GridFunction e, f;
  e.values.resize(grid.n_nodes());
  f.values.resize(grid.n_nodes());
  for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
    e.values[j] = Complex(rng.next_gaussian(), rng.next_gaussian());
    f.values[j] = Complex(rng.next_gaussian(), rng.next_gaussian());
  }
  const Complex alpha(0.7, -1.3);
  GridFunction comb = f;
  for (std::size_t j = 0; j < grid.n_nodes(); ++j) comb.values[j] += alpha * e.values[j];
  const Complex lhs = wiener_integral(grid, comb, path, 1.0);
  const Complex rhs =
      alpha * wiener_integral(grid, e, path, 1.0) + wiener_integral(grid, f, path, 1.0);
  CHECK(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("lebesgue integral: left-point rule") {
  const Grid grid(1.0, 1024);
  CHECK(std::abs(lebesgue_integral(grid, constant_function(grid, 1.0), 0.0, 1.0) -
                 Complex(1.0, 0.0)) < 1e-15);
  CHECK(lebesgue_integral(grid, constant_function(grid, 0.0), 0.0, 1.0) == Complex(0.0, 0.0));
  // empty interval
  CHECK(lebesgue_integral(grid, constant_function(grid, 1.0), 0.5, 0.5) == Complex(0.0, 0.0));
  // f(t) = t: exactly 0.5 - dt/2 (left-point bias), dyadic arithmetic is exact
  const Complex v = lebesgue_integral(grid, ramp(grid), 0.0, 1.0);
  CHECK(v.real() == doctest::Approx(0.5 - grid.dt / 2).epsilon(1e-15));
  CHECK_THROWS(lebesgue_integral(grid, ramp(grid), 0.1 * grid.dt, 1.0));
}

TEST_CASE("stieltjes integral on the open interval") {
  const Grid grid(1.0, 1024);
  const GridFunction r = ramp(grid);

  SUBCASE("constant integrator gives zero") {
    const GridFunction v = constant_function(grid, Complex(3.0, 0.0));
    CHECK(stieltjes_integral(grid, r, v, 0.0, 1.0) == Complex(0.0, 0.0));
  }
  SUBCASE("f == 1 telescopes to v(t-) - v(s+)") {
    SplitMix64 rng(9);
    GridFunction v;
    v.values.resize(grid.n_nodes());
    for (auto& z : v.values) z = rng.next_gaussian();
    const Complex got =
        stieltjes_integral(grid, constant_function(grid, 1.0), v, 0.25, 0.75);
    const std::size_t i = grid.node_index(0.25), jt = grid.node_index(0.75);
    const Complex want = v.values[jt - 1] - v.values[i];
    CHECK(std::abs(got - want) < 1e-12);
  }
  SUBCASE("int t dt = 0.5 within dt") {
    const Complex got = stieltjes_integral(grid, r, r, 0.0, 1.0);
    CHECK(std::abs(got.real() - 0.5) < grid.dt);
  }
  SUBCASE("complex integrator rejected") {
    GridFunction v = constant_function(grid, Complex(0.0, 1.0));
    CHECK_THROWS_AS(stieltjes_integral(grid, r, v, 0.0, 1.0), std::invalid_argument);
  }
}

TEST_CASE("l2 inner product") {
  const Grid grid(1.0, 1024);
  const GridFunction one = constant_function(grid, Complex(1.0, 0.0));
  CHECK(std::abs(l2_inner(grid, one, one) - Complex(1.0, 0.0)) < 1e-13);
  // <1, t> = 0.5 within dt
  CHECK(std::abs(l2_inner(grid, one, ramp(grid)).real() - 0.5) < grid.dt);
  // conjugate symmetry
  SplitMix64 rng(3);
  GridFunction f, g;
  f.values.resize(grid.n_nodes());
  g.values.resize(grid.n_nodes());
  for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
    f.values[j] = Complex(rng.next_gaussian(), rng.next_gaussian());
    g.values[j] = Complex(rng.next_gaussian(), rng.next_gaussian());
  }
  CHECK(std::abs(l2_inner(grid, f, g) - std::conj(l2_inner(grid, g, f))) < 1e-12);
  CHECK(l2_inner(grid, f, f).real() >= 0.0);
  // grid mismatch
  const Grid other(1.0, 512);
  CHECK_THROWS_WITH_AS(l2_inner(other, f, g), doctest::Contains("grid mismatch"),
                       std::invalid_argument);
}

TEST_CASE("ito isometry, statistical") {
  const Grid grid(1.0, 256);
  GridFunction e;
  e.values.resize(grid.n_nodes());
  for (std::size_t j = 0; j < grid.n_nodes(); ++j)
    e.values[j] = 1.0 + 0.5 * std::sin(6.0 * grid.node_time(j));
  const double ee = l2_inner(grid, e, e).real();

  const std::size_t reps = 10000;
  double mean = 0.0, m2 = 0.0;
  std::vector<double> vals(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const BrownianPath p = sample_brownian(grid, replicate_seed(101, r));
    const Complex w = wiener_integral(grid, e, p, 1.0);
    vals[r] = std::norm(w);
    mean += vals[r];
  }
  mean /= static_cast<double>(reps);
  for (double v : vals) m2 += (v - mean) * (v - mean);
  const double se = std::sqrt(m2 / static_cast<double>(reps - 1) / static_cast<double>(reps));
  CHECK(std::abs(mean - ee) <= 5.0 * se);
}

TEST_CASE("doob l2 tail bound for vanishing integrands") {
  const Grid grid(1.0, 256);
  const std::size_t reps = 2000;
  double prev = 1e308;
  for (std::size_t k = 1; k <= 3; ++k) {
    // f_k supported on [0, 4^-k], unit height: ||f_k||^2 = 4^-k -> 0
    GridFunction f = constant_function(grid, Complex(0.0, 0.0));
    const std::size_t cells = grid.n_steps >> (2 * k);
    for (std::size_t j = 0; j < cells; ++j) f.values[j] = 1.0;
    const double ff = l2_inner(grid, f, f).real();

    double mean = 0.0, m2 = 0.0;
    std::vector<double> sups(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      const BrownianPath p = sample_brownian(grid, replicate_seed(55 + k, r));
      const auto w = wiener_partial_sums(grid, f, p);
      double s = 0.0;
      for (const auto& z : w) s = std::max(s, std::norm(z));
      sups[r] = s;
      mean += s;
    }
    mean /= static_cast<double>(reps);
    for (double v : sups) m2 += (v - mean) * (v - mean);
    const double se = std::sqrt(m2 / static_cast<double>(reps - 1) / static_cast<double>(reps));
    CHECK(mean <= 4.0 * ff * (1.0 + 3.0 * se / std::max(mean, 1e-300)));
    CHECK(mean < prev);
    prev = mean;
  }
}

TEST_CASE("stieltjes against sup bound holds exactly on the grid") {
  const Grid grid(1.0, 512);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const BrownianPath p = sample_brownian(grid, seed);
    GridFunction f;
    f.values.resize(grid.n_nodes());
    SplitMix64 rng(seed + 100);
    for (auto& z : f.values) z = rng.next_gaussian();
    GridFunction w;
    w.values = wiener_partial_sums(grid, f, p);
    w.convention = Convention::Node;

    // a bounded-variation integrator
    GridFunction v;
    v.values.resize(grid.n_nodes());
    for (std::size_t j = 0; j < grid.n_nodes(); ++j)
      v.values[j] = std::sin(12.0 * grid.node_time(j)) + 0.3 * grid.node_time(j);

    const Complex got = stieltjes_integral(grid, w, v, 0.0, 1.0);
    double tv = 0.0;
    for (std::size_t j = 1; j < grid.n_nodes(); ++j)
      tv += std::abs(v.values[j].real() - v.values[j - 1].real());
    double sup = 0.0;
    for (const auto& z : w.values) sup = std::max(sup, std::abs(z));
    CHECK(std::abs(got) <= tv * sup + 1e-12);
  }
}
