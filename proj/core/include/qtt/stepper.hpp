#pragma once

#include <array>
#include <functional>

#include "qtt/matalg.hpp"
#include "qtt/system.hpp"

namespace qtt {

// Reduced problem on a flattened tensor core.  `matrix` is needed only by the
// implicit solver; `on_eval` is a hook for counting right-hand-side
// evaluations.
template <class T>
struct ReducedProblem {
  std::function<Vec<T>(const Vec<T>&, double)> apply;
  std::function<Mat<T>(double)> matrix;
  std::function<void(Index)> on_eval;
  bool is_linear = false;

  Vec<T> rhs(const Vec<T>& m, double t) const {
    if (on_eval) on_eval(m.size());
    Vec<T> d = apply(m, t);
    if (!d.allFinite()) throw solver_divergence("reduced right-hand side diverged");
    return d;
  }
};

template <class T>
Vec<T> euler(const ReducedProblem<T>& rp, const Vec<T>& m, double t, double dt) {
  Vec<T> out = m + T(dt) * rp.rhs(m, t);
  if (!out.allFinite()) throw solver_divergence("euler: non-finite update");
  return out;
}

template <class T>
struct Rk4Result {
  Vec<T> m;
  std::array<Vec<T>, 4> stage_inputs;  // the states fed to each derivative evaluation
};

template <class T>
Rk4Result<T> rk4(const ReducedProblem<T>& rp, const Vec<T>& m, double t, double dt) {
  Rk4Result<T> r;
  const T h(dt);
  r.stage_inputs[0] = m;
  Vec<T> k1 = rp.rhs(m, t);
  r.stage_inputs[1] = m + (h / T(2)) * k1;
  Vec<T> k2 = rp.rhs(r.stage_inputs[1], t + dt / 2);
  r.stage_inputs[2] = m + (h / T(2)) * k2;
  Vec<T> k3 = rp.rhs(r.stage_inputs[2], t + dt / 2);
  r.stage_inputs[3] = m + h * k3;
  Vec<T> k4 = rp.rhs(r.stage_inputs[3], t + dt);
  r.m = m + (h / T(6)) * (k1 + T(2) * k2 + T(2) * k3 + k4);
  if (!r.m.allFinite()) throw solver_divergence("rk4: non-finite update");
  return r;
}

// Solves (I - dt/2 A(t + dt/2)) m' = (I + dt/2 A(t + dt/2)) m with conjugate
// gradient squared on the explicitly assembled reduced matrix.
template <class T>
Vec<T> crank_nicolson(const ReducedProblem<T>& rp, const Vec<T>& m, double t, double dt,
                      double tol = 1e-10, int max_iter = 2000) {
  if (!rp.matrix) throw state_error("crank_nicolson: reduced matrix unavailable");
  const Mat<T> a = rp.matrix(t + dt / 2);
  const T h(dt);
  Vec<T> rhs = m + (h / T(2)) * (a * m);
  auto apply = [&](const Vec<T>& x) {
    if (rp.on_eval) rp.on_eval(x.size());
    return Vec<T>(x - (h / T(2)) * (a * x));
  };
  auto res = cgs_solve<T>(apply, rhs, tol, max_iter);
  if (!res.converged)
    throw solver_divergence("crank_nicolson: cgs stalled, residual " + std::to_string(res.residual));
  return res.x;
}

// --- global step-and-truncate --------------------------------------------

struct SatInfo {
  Index r_in = 0;  // largest bond rank of the exact update, before truncation
  Index r = 0;
};

// One explicit Euler step computed with exact TT arithmetic followed by a
// single rank truncation.
template <class T>
SatInfo sat_step(std::vector<TtVector<T>>& states, const DlrSystem<T>& sys, double t, double dt,
                 double eps, Index r_max = rank_unbounded, Index r_min = 1) {
  if (!sys.is_linear) throw state_error("sat_step: linear terms required");
  SatInfo info;
  const std::vector<TtVector<T>> old = states;
  for (int f = 0; f < sys.n_fields; ++f) {
    TtVector<T> acc = old[static_cast<size_t>(f)];
    for (const auto& term : sys.terms_for_sat()) {
      if (term.out_field != f) continue;
      TtVector<T> y = apply_op(term.op, old[static_cast<size_t>(term.in_field)]);
      acc = add(acc, scale(std::move(y), T(dt) * term.coeff_at(t)));
    }
    for (const auto& src : sys.sources) {
      if (src.field != f) continue;
      acc = add(acc, scale(src.tt, T(dt) * src.coeff_at(t)));
    }
    info.r_in = std::max(info.r_in, acc.max_rank());
    truncate(acc, eps, r_max, r_min);
    info.r = std::max(info.r, acc.max_rank());
    states[static_cast<size_t>(f)] = std::move(acc);
  }
  return info;
}

}  // namespace qtt
