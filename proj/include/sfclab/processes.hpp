#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "basis.hpp"
#include "grid.hpp"

namespace sfclab {

// Scalar functionals of the path used as anticipative factors.
struct PathFunctional {
  enum class Kind { Constant, Terminal, TerminalSin, Midpoint };
  Kind kind = Kind::Constant;
  double scale = 1.0;
  double value = 0.0;  // Constant only
};

inline double eval_functional(const PathFunctional& f, const Grid& grid,
                              const BrownianPath& path) {
  switch (f.kind) {
    case PathFunctional::Kind::Constant: return f.scale * f.value;
    case PathFunctional::Kind::Terminal: return f.scale * path.values[grid.n_steps];
    case PathFunctional::Kind::TerminalSin:
      return f.scale * std::sin(path.values[grid.n_steps]);
    case PathFunctional::Kind::Midpoint: {
      if (grid.n_steps % 2 != 0)
        throw std::invalid_argument("eval_functional: off-grid functional argument L/2");
      return f.scale * path.values[grid.n_steps / 2];
    }
  }
  throw std::logic_error("eval_functional: unknown kind");
}

// D_t F as a grid function (realized on the given path):
//   D_t B(L) = 1,  D_t sin(B(L)) = cos(B(L)),  D_t B(L/2) = 1_{t < L/2}
inline GridFunction functional_derivative(const PathFunctional& f, const Grid& grid,
                                          const BrownianPath& path) {
  switch (f.kind) {
    case PathFunctional::Kind::Constant:
      return constant_function(grid, Complex(0.0, 0.0));
    case PathFunctional::Kind::Terminal:
      return constant_function(grid, Complex(f.scale, 0.0));
    case PathFunctional::Kind::TerminalSin:
      return constant_function(grid, Complex(f.scale * std::cos(path.values[grid.n_steps]), 0.0));
    case PathFunctional::Kind::Midpoint: {
      std::vector<Complex> cells(grid.n_steps, Complex(0.0, 0.0));
      for (std::size_t j = 0; j < grid.n_steps / 2; ++j) cells[j] = Complex(f.scale, 0.0);
      return from_cells(grid, cells);
    }
  }
  throw std::logic_error("functional_derivative: unknown kind");
}

// ---- spec variants ---------------------------------------------------------

struct DeterministicVariant {
  GridFunction g;
};

// a(t, w) = g(t) * F(w), g of bounded variation
struct FvAnticipativeVariant {
  GridFunction g;
  PathFunctional functional;
};

// a(t) = offset + sum over jumps with time <= t of size_k(w)
struct StepRandomVariant {
  double offset = 0.0;
  struct Jump {
    double time = 0.0;
    PathFunctional size;
  };
  std::vector<Jump> jumps;
};

// a(t) = u0(t) + sum_r u_r(t) * B_L[v_r]
struct FirstChaosVariant {
  GridFunction u0;
  struct Term {
    GridFunction u;
    GridFunction v;
  };
  std::vector<Term> terms;
};

// c0 + sum_r alpha_r * B_L[w_r]
struct ScalarChaos {
  double c0 = 0.0;
  struct Term {
    double alpha = 0.0;
    GridFunction w;
  };
  std::vector<Term> terms;
};

// a(t) = int_0^t f dB (Skorokhod) + int_0^t h ds + a(0)
struct STypeItoVariant {
  FirstChaosVariant f;
  FirstChaosVariant h;
  ScalarChaos a0;
};

// a(t) = a(0) + int_0^t a'(s) ds, with grid-exact absolute continuity
struct LocallyAcVariant {
  ScalarChaos a0;
  std::variant<DeterministicVariant, FvAnticipativeVariant, FirstChaosVariant> derivative;
};

struct RandomFunctionSpec {
  std::variant<DeterministicVariant, FvAnticipativeVariant, StepRandomVariant,
               FirstChaosVariant, STypeItoVariant, LocallyAcVariant>
      v;
};

inline RandomFunctionSpec deterministic_spec(GridFunction g) {
  return RandomFunctionSpec{DeterministicVariant{std::move(g)}};
}

inline bool is_fv_variant(const RandomFunctionSpec& spec) {
  return std::holds_alternative<DeterministicVariant>(spec.v) ||
         std::holds_alternative<FvAnticipativeVariant>(spec.v) ||
         std::holds_alternative<StepRandomVariant>(spec.v) ||
         std::holds_alternative<LocallyAcVariant>(spec.v);
}

// ---- chaos normal form -----------------------------------------------------

// Every supported spec flattens to
//   a(t) = det(t) + sum_r u_r(t) B_L[v_r] + sum_q g_q(t) sin(B_L) + B_t[f]
// realized per path; this is what the Skorokhod/trace closed forms consume.
struct ChaosNormalForm {
  GridFunction det;
  struct Chaos1 {
    GridFunction u;
    GridFunction v;
  };
  std::vector<Chaos1> chaos1;
  struct SinTerm {
    GridFunction g;  // includes the scale
  };
  std::vector<SinTerm> sin_terms;
  GridFunction ito_kernel;  // adapted component B_t[ito_kernel]
  bool has_ito = false;
};

namespace detail {

inline GridFunction indicator_prefix(const Grid& grid, std::size_t cells_on) {
  std::vector<Complex> cells(grid.n_steps, Complex(0.0, 0.0));
  for (std::size_t j = 0; j < cells_on && j < grid.n_steps; ++j) cells[j] = Complex(1.0, 0.0);
  return from_cells(grid, cells);
}

inline GridFunction indicator_suffix(const Grid& grid, std::size_t first_cell) {
  std::vector<Complex> cells(grid.n_steps, Complex(0.0, 0.0));
  for (std::size_t j = first_cell; j < grid.n_steps; ++j) cells[j] = Complex(1.0, 0.0);
  return from_cells(grid, cells);
}

// g(t) * F folded into the normal form
inline void push_functional_product(ChaosNormalForm& nf, const Grid& grid, GridFunction g,
                                    const PathFunctional& f) {
  switch (f.kind) {
    case PathFunctional::Kind::Constant: {
      const double c = f.scale * f.value;
      for (std::size_t j = 0; j < nf.det.values.size(); ++j)
        nf.det.values[j] += c * g.values[j];
      return;
    }
    case PathFunctional::Kind::Terminal: {
      if (f.scale != 1.0) g = scale(g, Complex(f.scale, 0.0));
      nf.chaos1.push_back({std::move(g), constant_function(grid, Complex(1.0, 0.0))});
      return;
    }
    case PathFunctional::Kind::Midpoint: {
      if (grid.n_steps % 2 != 0)
        throw std::invalid_argument("normal_form: off-grid functional argument L/2");
      if (f.scale != 1.0) g = scale(g, Complex(f.scale, 0.0));
      nf.chaos1.push_back({std::move(g), indicator_prefix(grid, grid.n_steps / 2)});
      return;
    }
    case PathFunctional::Kind::TerminalSin: {
      if (f.scale != 1.0) g = scale(g, Complex(f.scale, 0.0));
      nf.sin_terms.push_back({std::move(g)});
      return;
    }
  }
}

inline void push_scalar_chaos(ChaosNormalForm& nf, const Grid& grid, const ScalarChaos& a0) {
  if (a0.c0 != 0.0)
    for (auto& z : nf.det.values) z += a0.c0;
  for (const auto& term : a0.terms)
    nf.chaos1.push_back({constant_function(grid, Complex(term.alpha, 0.0)), term.w});
}

}  // namespace detail

inline ChaosNormalForm normal_form(const RandomFunctionSpec& spec, const Grid& grid) {
  ChaosNormalForm nf;
  nf.det = constant_function(grid, Complex(0.0, 0.0));

  if (const auto* d = std::get_if<DeterministicVariant>(&spec.v)) {
    require_match(grid, d->g, "normal_form");
    nf.det = d->g;
    return nf;
  }
  if (const auto* fv = std::get_if<FvAnticipativeVariant>(&spec.v)) {
    require_match(grid, fv->g, "normal_form");
    detail::push_functional_product(nf, grid, fv->g, fv->functional);
    return nf;
  }
  if (const auto* st = std::get_if<StepRandomVariant>(&spec.v)) {
    for (auto& z : nf.det.values) z += st->offset;
    for (const auto& jump : st->jumps) {
      const std::size_t j0 = grid.node_index(jump.time);
      detail::push_functional_product(nf, grid, detail::indicator_suffix(grid, j0), jump.size);
    }
    return nf;
  }
  if (const auto* fc = std::get_if<FirstChaosVariant>(&spec.v)) {
    require_match(grid, fc->u0, "normal_form");
    nf.det = fc->u0;
    for (const auto& term : fc->terms) nf.chaos1.push_back({term.u, term.v});
    return nf;
  }
  if (const auto* st = std::get_if<STypeItoVariant>(&spec.v)) {
    if (!st->f.terms.empty())
      throw std::invalid_argument(
          "normal_form: unsupported spec (s_type_ito with chaos f exceeds order-2 cap)");
    nf.ito_kernel = st->f.u0;
    require_match(grid, nf.ito_kernel, "normal_form");
    nf.has_ito = true;
    // int_0^t h ds
    require_match(grid, st->h.u0, "normal_form");
    const GridFunction h0 = antiderivative(grid, st->h.u0);
    for (std::size_t j = 0; j < nf.det.values.size(); ++j) nf.det.values[j] += h0.values[j];
    for (const auto& term : st->h.terms)
      nf.chaos1.push_back({antiderivative(grid, term.u), term.v});
    detail::push_scalar_chaos(nf, grid, st->a0);
    return nf;
  }
  if (const auto* ac = std::get_if<LocallyAcVariant>(&spec.v)) {
    detail::push_scalar_chaos(nf, grid, ac->a0);
    if (const auto* d = std::get_if<DeterministicVariant>(&ac->derivative)) {
      const GridFunction prim = antiderivative(grid, d->g);
      for (std::size_t j = 0; j < nf.det.values.size(); ++j) nf.det.values[j] += prim.values[j];
    } else if (const auto* fv = std::get_if<FvAnticipativeVariant>(&ac->derivative)) {
      detail::push_functional_product(nf, grid, antiderivative(grid, fv->g), fv->functional);
    } else if (const auto* fc = std::get_if<FirstChaosVariant>(&ac->derivative)) {
      const GridFunction prim = antiderivative(grid, fc->u0);
      for (std::size_t j = 0; j < nf.det.values.size(); ++j) nf.det.values[j] += prim.values[j];
      for (const auto& term : fc->terms)
        nf.chaos1.push_back({antiderivative(grid, term.u), term.v});
    }
    return nf;
  }
  throw std::logic_error("normal_form: unknown variant");
}

// ---- realization -----------------------------------------------------------

struct RealizedFunction {
  GridFunction fn;
  std::uint64_t path_seed = 0;
};

namespace detail {

// int_0^t f dB in the Skorokhod sense for first-chaos f, per node
inline GridFunction skorokhod_primitive(const Grid& grid, const FirstChaosVariant& f,
                                        const BrownianPath& path) {
  GridFunction out;
  out.values.assign(grid.n_nodes(), Complex(0.0, 0.0));
  out.convention = Convention::Node;
  const std::vector<Complex> base = wiener_partial_sums(grid, f.u0, path);
  for (std::size_t j = 0; j < grid.n_nodes(); ++j) out.values[j] = base[j];
  for (const auto& term : f.terms) {
    const Complex bv = wiener_integral(grid, term.v, path, grid.horizon);
    const std::vector<Complex> bu = wiener_partial_sums(grid, term.u, path);
    Complex corr(0.0, 0.0);  // <conj(u 1_{[0,t]}), v>
    for (std::size_t j = 0; j < grid.n_nodes(); ++j) {
      out.values[j] += bu[j] * bv - corr;
      if (j < grid.n_steps) corr += std::conj(term.u.values[j]) * term.v.values[j] * grid.dt;
    }
  }
  return out;
}

}  // namespace detail

inline RealizedFunction realize(const RandomFunctionSpec& spec, const Grid& grid,
                                const BrownianPath& path) {
  if (const auto* st = std::get_if<STypeItoVariant>(&spec.v); st && !st->f.terms.empty()) {
    // chaos f: evaluate the Skorokhod primitive directly
    GridFunction out = detail::skorokhod_primitive(grid, st->f, path);
    const GridFunction h0 = antiderivative(grid, st->h.u0);
    for (std::size_t j = 0; j < out.values.size(); ++j) out.values[j] += h0.values[j];
    for (const auto& term : st->h.terms) {
      const Complex bv = wiener_integral(grid, term.v, path, grid.horizon);
      const GridFunction hu = antiderivative(grid, term.u);
      for (std::size_t j = 0; j < out.values.size(); ++j) out.values[j] += hu.values[j] * bv;
    }
    Complex a0(st->a0.c0, 0.0);
    for (const auto& term : st->a0.terms)
      a0 += term.alpha * wiener_integral(grid, term.w, path, grid.horizon);
    for (auto& z : out.values) z += a0;
    return {std::move(out), path.seed};
  }

  const ChaosNormalForm nf = normal_form(spec, grid);
  GridFunction out = nf.det;
  // cell-step variants keep the left-point reading; integrated ones are node samples
  out.convention = is_fv_variant(spec) && !std::holds_alternative<LocallyAcVariant>(spec.v)
                       ? Convention::LeftPoint
                       : Convention::Node;
  for (const auto& term : nf.chaos1) {
    const Complex bv = wiener_integral(grid, term.v, path, grid.horizon);
    for (std::size_t j = 0; j < out.values.size(); ++j)
      out.values[j] += term.u.values[j] * bv;
  }
  if (!nf.sin_terms.empty()) {
    const double s = std::sin(path.values[grid.n_steps]);
    for (const auto& term : nf.sin_terms)
      for (std::size_t j = 0; j < out.values.size(); ++j)
        out.values[j] += term.g.values[j] * s;
  }
  if (nf.has_ito) {
    const std::vector<Complex> bf = wiener_partial_sums(grid, nf.ito_kernel, path);
    for (std::size_t j = 0; j < out.values.size(); ++j) out.values[j] += bf[j];
  }
  return {std::move(out), path.seed};
}

// ---- variation -------------------------------------------------------------

inline std::pair<GridFunction, GridFunction> jordan_decompose(const Grid& grid,
                                                              const GridFunction& r) {
  require_match(grid, r, "jordan_decompose");
  if (!r.is_real(1e-12))
    throw std::invalid_argument("jordan_decompose: complex-valued input");
  GridFunction vp, vm;
  vp.values.assign(grid.n_nodes(), Complex(0.0, 0.0));
  vm.values.assign(grid.n_nodes(), Complex(0.0, 0.0));
  vp.convention = vm.convention = Convention::Node;
  double accp = 0.0, accm = 0.0;
  for (std::size_t j = 1; j < grid.n_nodes(); ++j) {
    const double d = r.values[j].real() - r.values[j - 1].real();
    if (d > 0.0) accp += d; else accm -= d;
    vp.values[j] = accp;
    vm.values[j] = accm;
  }
  return {std::move(vp), std::move(vm)};
}

// grid total variation up to a node; equals v_plus + v_minus there
inline double total_variation(const Grid& grid, const GridFunction& r, double up_to) {
  require_match(grid, r, "total_variation");
  if (!r.is_real(1e-12))
    throw std::invalid_argument("total_variation: complex-valued input");
  const std::size_t idx = grid.node_index(up_to);
  const auto [vp, vm] = jordan_decompose(grid, r);
  return vp.values[idx].real() + vm.values[idx].real();
}

// ---- Malliavin derivative --------------------------------------------------

// D_t a(s) = triangular(t) 1_{t < s} + sum_q p_q(s) r_q(t), realized per path.
struct MalliavinKernel {
  GridFunction triangular;  // empty values => no triangular part
  struct Separable {
    GridFunction p;  // in s
    GridFunction r;  // in t
  };
  std::vector<Separable> separable;

  Complex eval(std::size_t t_idx, std::size_t s_idx) const {
    Complex acc(0.0, 0.0);
    if (!triangular.values.empty() && t_idx < s_idx) acc += triangular.values[t_idx];
    for (const auto& term : separable) acc += term.p.values[s_idx] * term.r.values[t_idx];
    return acc;
  }

  // D_t a(t) with the strict convention 1_{t<t} = 0 (adaptedness detector)
  GridFunction diagonal(const Grid& grid) const {
    GridFunction out = constant_function(grid, Complex(0.0, 0.0), Convention::Node);
    for (const auto& term : separable)
      for (std::size_t j = 0; j < out.values.size(); ++j)
        out.values[j] += term.p.values[j] * term.r.values[j];
    return out;
  }

  // diagonal of the symmetrized kernel: the triangular part contributes
  // half its coefficient, which is what trace formulas integrate
  GridFunction symmetrized_diagonal(const Grid& grid) const {
    GridFunction out = diagonal(grid);
    if (!triangular.values.empty())
      for (std::size_t j = 0; j < out.values.size(); ++j)
        out.values[j] += 0.5 * triangular.values[j];
    return out;
  }
};

inline MalliavinKernel malliavin_derivative(const RandomFunctionSpec& spec, const Grid& grid,
                                            const BrownianPath& path) {
  MalliavinKernel ker;

  if (const auto* st = std::get_if<STypeItoVariant>(&spec.v)) {
    // D_t(B_s[f]) = f(t) 1_{t<s} + sum_r B_s[fu_r] fv_r(t)  (f realized)
    ker.triangular = realize(RandomFunctionSpec{st->f}, grid, path).fn;
    for (const auto& term : st->f.terms) {
      GridFunction p;
      p.values = wiener_partial_sums(grid, term.u, path);
      p.convention = Convention::Node;
      ker.separable.push_back({std::move(p), term.v});
    }
    for (const auto& term : st->h.terms)
      ker.separable.push_back({antiderivative(grid, term.u), term.v});
    for (const auto& term : st->a0.terms)
      ker.separable.push_back({constant_function(grid, Complex(term.alpha, 0.0)), term.w});
    return ker;
  }

  const ChaosNormalForm nf = normal_form(spec, grid);
  for (const auto& term : nf.chaos1) ker.separable.push_back({term.u, term.v});
  if (!nf.sin_terms.empty()) {
    const GridFunction dsin =
        constant_function(grid, Complex(std::cos(path.values[grid.n_steps]), 0.0));
    for (const auto& term : nf.sin_terms) ker.separable.push_back({term.g, dsin});
  }
  if (nf.has_ito) ker.triangular = nf.ito_kernel;
  return ker;
}

}  // namespace sfclab
