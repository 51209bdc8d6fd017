#pragma once

#include <array>
#include <functional>
#include <vector>

#include "qtt/diagnostics.hpp"
#include "qtt/stepper.hpp"
#include "qtt/system.hpp"

namespace qtt {

enum class Flavor { G, X, P };
enum class Scheme { PS, AP };
enum class StepperKind { Euler, RK4, CN };
enum class SweepDir { LeftToRight, RightToLeft };

inline const char* to_string(Flavor f) { return f == Flavor::G ? "G" : f == Flavor::X ? "X" : "P"; }
inline const char* to_string(Scheme s) { return s == Scheme::PS ? "PS" : "AP"; }
inline const char* to_string(StepperKind s) {
  return s == StepperKind::Euler ? "euler" : s == StepperKind::RK4 ? "rk4" : "cn";
}

// Full configuration of one DLR time step.
struct SweepPlan {
  Flavor flavor = Flavor::G;
  Scheme scheme = Scheme::AP;
  StepperKind stepper = StepperKind::Euler;
  double eps = 1e-10;
  double eps_in = -1.0;  // negative -> eps
  Index r_max = rank_unbounded;
  Index r_min = 1;
  bool two_site = false;
  bool oversample = false;
  SweepDir direction = SweepDir::LeftToRight;
  bool feiguin_targets = false;  // RK4 expansion at the classic intermediate times
  double cn_tol = 1e-10;
  int cn_max_iter = 5000;

  double internal_eps() const { return eps_in < 0 ? eps : eps_in; }
  void validate() const {
    if (two_site && scheme != Scheme::PS)
      throw config_error("two-site variant requires the PS scheme");
    if (oversample && scheme != Scheme::AP)
      throw config_error("oversampling is only supported with the AP scheme");
    if (oversample && flavor != Flavor::X)
      throw config_error("oversampling applies to the interpolative flavor");
  }
};

// ---------------------------------------------------------------------------
// environment blocks
// ---------------------------------------------------------------------------
//
// An operator environment at bond b is a three-way block E(x, beta, a):
// x runs over the bra space (basis functions for G, selected multi-indices
// for X), beta over the operator bond, a over the ket bond.  Vector
// environments drop the operator index.

namespace detail {

template <class T>
Tensor3<T> env_ones() {
  Tensor3<T> e(1, 1, 1);
  e(0, 0, 0) = T(1);
  return e;
}

// left operator environment step, orthonormal bra
template <class T>
Tensor3<T> envl_step_g(const Tensor3<T>& e, const Tensor3<T>& bra, const Tensor4<T>& op,
                       const Tensor3<T>& ket) {
  const Index bl = e.r0, B = e.d, kl = e.r1;
  const Index blp = bra.r1, Bp = op.b1, klp = ket.r1;
  if (bra.r0 != bl || op.b0 != B || ket.r0 != kl) throw shape_error("envl_step_g: shape mismatch");
  std::vector<RMat<T>> r_acc(static_cast<size_t>(op.dout), RMat<T>::Zero(bl * klp, Bp));
  for (Index s = 0; s < op.din; ++s) {
    RMat<T> t = e.left_mat() * ket.slice(s);  // (bl*B) x klp
    // permute to (bl, klp, B)
    RMat<T> tp(bl * klp, B);
    for (Index c = 0; c < bl; ++c)
      for (Index x = 0; x < B; ++x)
        for (Index a = 0; a < klp; ++a) tp(c * klp + a, x) = t(c * B + x, a);
    for (Index sp = 0; sp < op.dout; ++sp)
      r_acc[static_cast<size_t>(sp)].noalias() += tp * op.slice(sp, s);
  }
  Tensor3<T> out(blp, Bp, klp);
  for (Index sp = 0; sp < op.dout; ++sp) {
    // contract bra: (blp x bl) x (bl x (klp*Bp))
    RMat<T> m = bra.slice(sp).adjoint() *
                CMapRM<T>(r_acc[static_cast<size_t>(sp)].data(), bl, klp * Bp);
    for (Index ap = 0; ap < blp; ++ap)
      for (Index a = 0; a < klp; ++a)
        for (Index x = 0; x < Bp; ++x) out(ap, x, a) += m(ap, a * Bp + x);
  }
  return out;
}

// left operator environment step, sampled bra: sel holds flat rows a*d + s of
// the bra space at the new bond, each extending one row of the old bond
template <class T>
Tensor3<T> envl_step_x(const Tensor3<T>& e, const std::vector<Index>& sel, Index bra_d,
                       const Tensor4<T>& op, const Tensor3<T>& ket) {
  const Index B = e.d, kl = e.r1;
  const Index Bp = op.b1, klp = ket.r1;
  if (op.b0 != B || ket.r0 != kl) throw shape_error("envl_step_x: shape mismatch");
  const Index nj = Index(sel.size());
  Tensor3<T> out(nj, Bp, klp);
  Mat<T> kslice[8];
  for (Index s = 0; s < op.din; ++s) kslice[s] = ket.slice(s);
  for (Index j = 0; j < nj; ++j) {
    const Index parent = sel[static_cast<size_t>(j)] / bra_d;
    const Index bit = sel[static_cast<size_t>(j)] % bra_d;
    CMapRM<T> eblock(e.v.data() + parent * B * kl, B, kl);
    Mat<T> acc = Mat<T>::Zero(Bp, klp);
    for (Index s = 0; s < op.din; ++s)
      acc.noalias() += (op.slice(bit, s).transpose() * eblock) * kslice[s];
    for (Index x = 0; x < Bp; ++x)
      for (Index a = 0; a < klp; ++a) out(j, x, a) = acc(x, a);
  }
  return out;
}

// right operator environment step, orthonormal bra
template <class T>
Tensor3<T> envr_step_g(const Tensor3<T>& e, const Tensor3<T>& bra, const Tensor4<T>& op,
                       const Tensor3<T>& ket) {
  const Index br = e.r0, B = e.d, kr = e.r1;
  const Index brp = bra.r0, Bp = op.b0, krp = ket.r0;
  if (bra.r1 != br || op.b1 != B || ket.r1 != kr) throw shape_error("envr_step_g: shape mismatch");
  std::vector<RMat<T>> q_acc(static_cast<size_t>(op.dout), RMat<T>::Zero(krp * br, Bp));
  for (Index s = 0; s < op.din; ++s) {
    RMat<T> t = ket.slice(s) * e.left_mat().transpose();  // krp x (br*B)
    RMat<T> tm(krp * br, B);  // (a, c') x B
    for (Index a = 0; a < krp; ++a)
      for (Index c = 0; c < br; ++c)
        for (Index x = 0; x < B; ++x) tm(a * br + c, x) = t(a, c * B + x);
    for (Index sp = 0; sp < op.dout; ++sp)
      q_acc[static_cast<size_t>(sp)].noalias() += tm * op.slice(sp, s).transpose();
  }
  Tensor3<T> out(brp, Bp, krp);
  for (Index sp = 0; sp < op.dout; ++sp) {
    // permute q to (c', a, Bp) then contract bra
    const auto& q = q_acc[static_cast<size_t>(sp)];
    RMat<T> qp(br, krp * Bp);
    for (Index a = 0; a < krp; ++a)
      for (Index c = 0; c < br; ++c)
        for (Index x = 0; x < Bp; ++x) qp(c, a * Bp + x) = q(a * br + c, x);
    RMat<T> m = bra.slice(sp).conjugate() * qp;  // brp x (krp*Bp)
    for (Index ap = 0; ap < brp; ++ap)
      for (Index a = 0; a < krp; ++a)
        for (Index x = 0; x < Bp; ++x) out(ap, x, a) += m(ap, a * Bp + x);
  }
  return out;
}

// right operator environment step, sampled bra: sel holds flat columns
// s * r_next + c of the bra space
template <class T>
Tensor3<T> envr_step_x(const Tensor3<T>& e, const std::vector<Index>& sel, Index bra_rnext,
                       const Tensor4<T>& op, const Tensor3<T>& ket) {
  const Index B = e.d, kr = e.r1;
  const Index Bp = op.b0, krp = ket.r0;
  if (op.b1 != B || ket.r1 != kr) throw shape_error("envr_step_x: shape mismatch");
  const Index nj = Index(sel.size());
  Tensor3<T> out(nj, Bp, krp);
  Mat<T> kslice[8];
  for (Index s = 0; s < op.din; ++s) kslice[s] = ket.slice(s);
  for (Index j = 0; j < nj; ++j) {
    const Index bit = sel[static_cast<size_t>(j)] / bra_rnext;
    const Index parent = sel[static_cast<size_t>(j)] % bra_rnext;
    CMapRM<T> eblock(e.v.data() + parent * B * kr, B, kr);
    Mat<T> acc = Mat<T>::Zero(Bp, krp);
    for (Index s = 0; s < op.din; ++s)
      acc.noalias() += op.slice(bit, s) * eblock * kslice[s].transpose();
    for (Index x = 0; x < Bp; ++x)
      for (Index a = 0; a < krp; ++a) out(j, x, a) = acc(x, a);
  }
  return out;
}

// vector environment steps (no operator index)
template <class T>
Mat<T> venvl_step_g(const Mat<T>& e, const Tensor3<T>& bra, const Tensor3<T>& vec) {
  Mat<T> out = Mat<T>::Zero(bra.r1, vec.r1);
  for (Index s = 0; s < bra.d; ++s) out.noalias() += bra.slice(s).adjoint() * e * vec.slice(s);
  return out;
}

template <class T>
Mat<T> venvl_step_x(const Mat<T>& e, const std::vector<Index>& sel, Index bra_d,
                    const Tensor3<T>& vec) {
  Mat<T> out(Index(sel.size()), vec.r1);
  for (Index j = 0; j < Index(sel.size()); ++j) {
    const Index parent = sel[static_cast<size_t>(j)] / bra_d;
    const Index bit = sel[static_cast<size_t>(j)] % bra_d;
    out.row(j) = e.row(parent) * vec.slice(bit);
  }
  return out;
}

template <class T>
Mat<T> venvr_step_g(const Mat<T>& e, const Tensor3<T>& bra, const Tensor3<T>& vec) {
  Mat<T> out = Mat<T>::Zero(bra.r0, vec.r0);
  for (Index s = 0; s < bra.d; ++s) out.noalias() += bra.slice(s).conjugate() * e * vec.slice(s).transpose();
  return out;
}

template <class T>
Mat<T> venvr_step_x(const Mat<T>& e, const std::vector<Index>& sel, Index bra_rnext,
                    const Tensor3<T>& vec) {
  Mat<T> out(Index(sel.size()), vec.r0);
  for (Index j = 0; j < Index(sel.size()); ++j) {
    const Index bit = sel[static_cast<size_t>(j)] / bra_rnext;
    const Index parent = sel[static_cast<size_t>(j)] % bra_rnext;
    out.row(j) = (vec.slice(bit) * e.row(parent).transpose()).transpose();
  }
  return out;
}

// effective operator application at one site:
// out(x, s', y) = sum envL(x, bL, a) op(bL, s', s, bR) envR(y, bR, b) m(a, s, b)
template <class T>
Tensor3<T> apply_site(const Tensor3<T>& envl, const Tensor4<T>& op, const Tensor3<T>& envr,
                      const Tensor3<T>& m) {
  const Index kl = m.r0, kr = m.r1;
  const Index bl = envl.r0, BL = envl.d;
  const Index br = envr.r0, BR = envr.d;
  if (envl.r1 != kl || envr.r1 != kr || op.b0 != BL || op.b1 != BR)
    throw shape_error("apply_site: shape mismatch");
  std::vector<RMat<T>> u(static_cast<size_t>(op.dout), RMat<T>::Zero(kl * br, BL));
  for (Index s = 0; s < op.din; ++s) {
    RMat<T> t = m.slice(s) * envr.left_mat().transpose();  // kl x (br*BR)
    RMat<T> tm(kl * br, BR);
    for (Index a = 0; a < kl; ++a)
      for (Index c = 0; c < br; ++c)
        for (Index x = 0; x < BR; ++x) tm(a * br + c, x) = t(a, c * BR + x);
    for (Index sp = 0; sp < op.dout; ++sp)
      u[static_cast<size_t>(sp)].noalias() += tm * op.slice(sp, s).transpose();
  }
  Tensor3<T> out(bl, op.dout, br);
  for (Index sp = 0; sp < op.dout; ++sp) {
    // permute u to (BL, kl, br)
    const auto& us = u[static_cast<size_t>(sp)];
    RMat<T> up(BL * kl, br);
    for (Index a = 0; a < kl; ++a)
      for (Index c = 0; c < br; ++c)
        for (Index x = 0; x < BL; ++x) up(x * kl + a, c) = us(a * br + c, x);
    RMat<T> o = envl.left_mat() * up;  // bl x br, envl viewed (bl x (BL*kl))
    for (Index ap = 0; ap < bl; ++ap)
      for (Index c = 0; c < br; ++c) out(ap, sp, c) = o(ap, c);
  }
  return out;
}

// bond application: out(x, y) = sum envL(x, b, a) envR(y, b, c) w(a, c)
template <class T>
Mat<T> apply_bond(const Tensor3<T>& envl, const Tensor3<T>& envr, const Mat<T>& w) {
  Mat<T> out = Mat<T>::Zero(envl.r0, envr.r0);
  for (Index x = 0; x < envl.d; ++x) out.noalias() += envl.slice(x) * w * envr.slice(x).transpose();
  return out;
}

template <class T>
Mat<T> dense_site_op(const Tensor3<T>& envl, const Tensor4<T>& op, const Tensor3<T>& envr) {
  const Index bl = envl.r0, kl = envl.r1;
  const Index br = envr.r0, kr = envr.r1;
  Mat<T> out = Mat<T>::Zero(bl * op.dout * br, kl * op.din * kr);
  Tensor3<T> envl_p = permute_021(envl);  // (bl, kl, BL)
  Tensor3<T> envr_p = permute_102(envr);  // (BR, br, kr)
  for (Index sp = 0; sp < op.dout; ++sp)
    for (Index s = 0; s < op.din; ++s) {
      RMat<T> t1 = envl_p.left_mat() * op.slice(sp, s);            // (bl*kl) x BR
      RMat<T> t2 = t1 * envr_p.right_mat();                        // (bl*kl) x (br*kr)
      for (Index x = 0; x < bl; ++x)
        for (Index a = 0; a < kl; ++a)
          for (Index y = 0; y < br; ++y)
            for (Index b = 0; b < kr; ++b)
              out((x * op.dout + sp) * br + y, (a * op.din + s) * kr + b) +=
                  t2(x * kl + a, y * kr + b);
    }
  return out;
}

template <class T>
Mat<T> dense_bond_op(const Tensor3<T>& envl, const Tensor3<T>& envr) {
  const Index bl = envl.r0, kl = envl.r1;
  const Index br = envr.r0, kr = envr.r1;
  Mat<T> out(bl * br, kl * kr);
  for (Index x = 0; x < bl; ++x)
    for (Index y = 0; y < br; ++y)
      for (Index a = 0; a < kl; ++a)
        for (Index b = 0; b < kr; ++b) {
          T acc(0);
          for (Index q = 0; q < envl.d; ++q) acc += envl(x, q, a) * envr(y, q, b);
          out(x * br + y, a * kr + b) = acc;
        }
  return out;
}

// contract two neighbouring operator cores over their shared bond into a
// fused two-site core
template <class T>
Tensor4<T> fuse_op_pair(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.b1 != b.b0) throw shape_error("fuse_op_pair: bond mismatch");
  Tensor4<T> out(a.b0, a.dout * b.dout, a.din * b.din, b.b1);
  for (Index so = 0; so < a.dout; ++so)
    for (Index si = 0; si < a.din; ++si)
      for (Index to = 0; to < b.dout; ++to)
        for (Index ti = 0; ti < b.din; ++ti) {
          Mat<T> prod = Mat<T>(a.slice(so, si)) * Mat<T>(b.slice(to, ti));
          for (Index i = 0; i < a.b0; ++i)
            for (Index j = 0; j < b.b1; ++j)
              out(i, so * b.dout + to, si * b.din + ti, j) = prod(i, j);
        }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// stand-alone projections (the sweep engine keeps incremental caches; these
// build the environments from scratch)
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
std::vector<Tensor3<T>> build_envl_chain(const TtVector<T>& bra, const TtOperator<T>& op,
                                         const TtVector<T>& ket, int upto, Flavor f) {
  std::vector<Tensor3<T>> env{env_ones<T>()};
  for (int p = 0; p < upto; ++p) {
    const auto& berc = bra.cores[static_cast<size_t>(p)];
    if (f == Flavor::G)
      env.push_back(envl_step_g(env.back(), berc, op.cores[static_cast<size_t>(p)],
                                ket.cores[static_cast<size_t>(p)]));
    else
      env.push_back(envl_step_x(env.back(), bra.lsel_rows[static_cast<size_t>(p + 1)], berc.d,
                                op.cores[static_cast<size_t>(p)], ket.cores[static_cast<size_t>(p)]));
  }
  return env;
}

template <class T>
std::vector<Tensor3<T>> build_envr_chain(const TtVector<T>& bra, const TtOperator<T>& op,
                                         const TtVector<T>& ket, int downto, Flavor f) {
  const int L = bra.length();
  std::vector<Tensor3<T>> env(static_cast<size_t>(L + 1));
  env[static_cast<size_t>(L)] = env_ones<T>();
  for (int p = L - 1; p >= downto; --p) {
    const auto& berc = bra.cores[static_cast<size_t>(p)];
    if (f == Flavor::G)
      env[static_cast<size_t>(p)] = envr_step_g(env[static_cast<size_t>(p + 1)], berc,
                                                op.cores[static_cast<size_t>(p)],
                                                ket.cores[static_cast<size_t>(p)]);
    else
      env[static_cast<size_t>(p)] = envr_step_x(env[static_cast<size_t>(p + 1)],
                                                bra.rsel_cols[static_cast<size_t>(p)], berc.r1,
                                                op.cores[static_cast<size_t>(p)],
                                                ket.cores[static_cast<size_t>(p)]);
  }
  return env;
}

}  // namespace detail

// Dense effective operator at `site`: the equation-of-motion block mapping the
// active core of `ket`'s manifold into the bra space of `bra`'s manifold.
// For the oblique flavor, bra must carry the selection caches and ket must be
// the same orthonormal state.
template <class T>
Mat<T> project_operator(const TtOperator<T>& a, const TtVector<T>& bra, const TtVector<T>& ket,
                        int site, Flavor f) {
  if (bra.center != site) throw state_error("project_operator: bra not centred at site");
  const Flavor env_f = f == Flavor::G ? Flavor::G : Flavor::X;
  if (f == Flavor::X && bra.form != Form::Interpolative)
    throw state_error("project_operator: interpolative form required");
  if (f != Flavor::X && bra.form != Form::Orthonormal)
    throw state_error("project_operator: orthonormal form required");
  auto envl = detail::build_envl_chain(bra, a, ket, site, env_f);
  auto envr = detail::build_envr_chain(bra, a, ket, site + 1, env_f);
  Mat<T> m = detail::dense_site_op(envl.back(), a.cores[static_cast<size_t>(site)],
                                   envr[static_cast<size_t>(site + 1)]);
  if (f == Flavor::P) {
    // compose with the map from sampled coordinates back to the orthonormal
    // ones on the ket side: M_Q = linv . M_X . rinv
    const auto& linv = bra.lsel_inv[static_cast<size_t>(site)];
    const auto& rinv = bra.rsel_inv[static_cast<size_t>(site + 1)];
    if (linv.size() == 0 || rinv.size() == 0)
      throw state_error("project_operator: oblique caches missing");
    const Index rl = linv.rows(), d = bra.cores[static_cast<size_t>(site)].d, rr = rinv.rows();
    Mat<T> tr = Mat<T>::Zero(rl * d * rr, rl * d * rr);
    for (Index a2 = 0; a2 < rl; ++a2)
      for (Index ax = 0; ax < rl; ++ax)
        for (Index s = 0; s < d; ++s)
          for (Index c = 0; c < rr; ++c)
            for (Index j = 0; j < rr; ++j)
              tr((a2 * d + s) * rr + c, (ax * d + s) * rr + j) = linv(a2, ax) * rinv(j, c);
    m = m * tr;
  }
  return m;
}

// Reduced vector at `site`: samples for X, Galerkin coefficients for G, and
// samples of the orthogonally projected vector for P.
template <class T>
Tensor3<T> project_vector(const TtVector<T>& b, const TtVector<T>& bra, int site, Flavor f) {
  if (bra.center != site) throw state_error("project_vector: bra not centred at site");
  const int L = bra.length();
  Mat<T> el = Mat<T>::Ones(1, 1), er = Mat<T>::Ones(1, 1);
  const bool sampled = f == Flavor::X;
  for (int p = 0; p < site; ++p) {
    const auto& bc = bra.cores[static_cast<size_t>(p)];
    el = sampled ? detail::venvl_step_x(el, bra.lsel_rows[static_cast<size_t>(p + 1)], bc.d,
                                        b.cores[static_cast<size_t>(p)])
                 : detail::venvl_step_g(el, bc, b.cores[static_cast<size_t>(p)]);
  }
  for (int p = L - 1; p > site; --p) {
    const auto& bc = bra.cores[static_cast<size_t>(p)];
    er = sampled ? detail::venvr_step_x(er, bra.rsel_cols[static_cast<size_t>(p)], bc.r1,
                                        b.cores[static_cast<size_t>(p)])
                 : detail::venvr_step_g(er, bc, b.cores[static_cast<size_t>(p)]);
  }
  const auto& vc = b.cores[static_cast<size_t>(site)];
  Tensor3<T> out(el.rows(), vc.d, er.rows());
  for (Index s = 0; s < vc.d; ++s) {
    Mat<T> m = el * vc.slice(s) * er.transpose();
    for (Index x = 0; x < m.rows(); ++x)
      for (Index y = 0; y < m.cols(); ++y) out(x, s, y) = m(x, y);
  }
  if (f == Flavor::P) {
    // samples of the projected vector: lsel . (E^H b) . rsel
    const auto& ls = bra.lsel_mat[static_cast<size_t>(site)];
    const auto& rs = bra.rsel_mat[static_cast<size_t>(site + 1)];
    if (ls.size() == 0 || rs.size() == 0) throw state_error("project_vector: oblique caches missing");
    out = mode2_mul(mode0_mul(ls, out), rs);
  }
  return out;
}

// Apply the manifold projector of `state` (canonical at `site`) to x.
template <class T>
TtVector<T> project_onto_manifold(const TtVector<T>& state, int site, const TtVector<T>& x,
                                  Flavor f) {
  TtVector<T> out = state;
  out.cores[static_cast<size_t>(site)] = project_vector(x, state, site, f);
  return out;
}

// core conversions between the orthonormal and sampled representations at the
// centre site of an oblique-canonical state
template <class T>
Tensor3<T> to_interpolative(const TtVector<T>& state, int site, const Tensor3<T>& mq) {
  const auto& ls = state.lsel_mat[static_cast<size_t>(site)];
  const auto& rs = state.rsel_mat[static_cast<size_t>(site + 1)];
  if (ls.size() == 0 || rs.size() == 0) throw state_error("to_interpolative: caches missing");
  return mode2_mul(mode0_mul(ls, mq), rs);
}

template <class T>
Tensor3<T> to_orthonormal(const TtVector<T>& state, int site, const Tensor3<T>& mx) {
  const auto& li = state.lsel_inv[static_cast<size_t>(site)];
  const auto& ri = state.rsel_inv[static_cast<size_t>(site + 1)];
  if (li.size() == 0 || ri.size() == 0) throw state_error("to_orthonormal: caches missing");
  return mode2_mul(mode0_mul(li, mx), ri);
}

// ---------------------------------------------------------------------------
// subspace expansion and decimation
// ---------------------------------------------------------------------------

template <class T>
struct Expansion {
  Tensor3<T> basis;              // new canonical core
  std::vector<Mat<T>> weights;   // per-candidate projection weights
  std::vector<Index> sel;        // selected rows/columns (interpolative flavors)
  bool oversampled = false;
};

// Expand a site basis to span several candidate centre cores.  side
// LeftToRight produces a left-canonical basis (weights act on the right
// bond), RightToLeft the mirror image.
template <class T>
Expansion<T> subspace_expand(const std::vector<Tensor3<T>>& candidates, Flavor f, SweepDir side,
                             double eps_in, Index r_min = 1, bool oversample = false) {
  if (candidates.empty()) throw std::invalid_argument("subspace_expand: no candidates");
  const Index rl = candidates.front().r0, d = candidates.front().d, rr = candidates.front().r1;
  for (const auto& c : candidates)
    if (c.r0 != rl || c.d != d || c.r1 != rr) throw shape_error("subspace_expand: ragged candidates");
  const Index m = Index(candidates.size());
  Expansion<T> out;

  if (side == SweepDir::LeftToRight) {
    Mat<T> stack(rl * d, m * rr);
    for (Index k = 0; k < m; ++k) stack.middleCols(k * rr, rr) = candidates[static_cast<size_t>(k)].left_mat();
    if (f == Flavor::X) {
      std::vector<Index> extra;
      if (oversample && m > 1) {
        for (Index k = 0; k < m; ++k) {
          auto fk = detail::xr_factor<T>(candidates[static_cast<size_t>(k)].left_mat(), eps_in,
                                         rank_unbounded, 1);
          extra.insert(extra.end(), fk.rows.begin(), fk.rows.end());
        }
      }
      auto fx = detail::xr_factor<T>(stack, eps_in, rank_unbounded, std::min(r_min, rl * d),
                                     oversample ? &extra : nullptr);
      const Index rn = fx.interp.cols();
      out.basis = Tensor3<T>(rl, d, rn);
      MapRM<T>(out.basis.v.data(), rl * d, rn) = fx.interp;
      out.sel = fx.rows;
      out.oversampled = fx.oversampled;
      for (Index k = 0; k < m; ++k) {
        Mat<T> w(rn, rr);
        for (Index i = 0; i < rn; ++i)
          w.row(i) = candidates[static_cast<size_t>(k)].left_mat().row(fx.rows[static_cast<size_t>(i)]);
        out.weights.push_back(std::move(w));
      }
    } else {
      auto svd = svd_truncate(stack, eps_in, rank_unbounded, std::min(r_min, rl * d));
      out.basis = Tensor3<T>(rl, d, svd.rank);
      MapRM<T>(out.basis.v.data(), rl * d, svd.rank) = svd.U;
      for (Index k = 0; k < m; ++k)
        out.weights.push_back(svd.U.adjoint() * candidates[static_cast<size_t>(k)].left_mat());
    }
    return out;
  }

  Mat<T> stack(m * rl, d * rr);
  for (Index k = 0; k < m; ++k) stack.middleRows(k * rl, rl) = candidates[static_cast<size_t>(k)].right_mat();
  if (f == Flavor::X) {
    std::vector<Index> extra;
    if (oversample && m > 1) {
      for (Index k = 0; k < m; ++k) {
        auto fk = detail::xr_factor<T>(
            Mat<T>(candidates[static_cast<size_t>(k)].right_mat().transpose()), eps_in, rank_unbounded, 1);
        extra.insert(extra.end(), fk.rows.begin(), fk.rows.end());
      }
    }
    auto fx = detail::xr_factor<T>(Mat<T>(stack.transpose()), eps_in, rank_unbounded,
                                   std::min(r_min, d * rr), oversample ? &extra : nullptr);
    const Index rn = fx.interp.cols();
    out.basis = Tensor3<T>(rn, d, rr);
    MapRM<T>(out.basis.v.data(), rn, d * rr) = fx.interp.transpose();
    out.sel = fx.rows;
    out.oversampled = fx.oversampled;
    for (Index k = 0; k < m; ++k) {
      Mat<T> w(rl, rn);
      for (Index j = 0; j < rn; ++j)
        w.col(j) = candidates[static_cast<size_t>(k)].right_mat().col(fx.rows[static_cast<size_t>(j)]);
      out.weights.push_back(std::move(w));
    }
  } else {
    auto svd = svd_truncate(stack, eps_in, rank_unbounded, std::min(r_min, d * rr));
    out.basis = Tensor3<T>(svd.rank, d, rr);
    MapRM<T>(out.basis.v.data(), svd.rank, d * rr) = svd.V.adjoint();
    for (Index k = 0; k < m; ++k)
      out.weights.push_back(candidates[static_cast<size_t>(k)].right_mat() * svd.V);
  }
  return out;
}

// Install an expanded basis at `site` and shift the centre one site along the
// sweep, projecting the first candidate (the state being swept) onto it.
template <class T>
void decimate_ap(TtVector<T>& state, int site, const Expansion<T>& exp, SweepDir dir,
                 Flavor f) {
  state.cores[static_cast<size_t>(site)] = exp.basis;
  if (dir == SweepDir::LeftToRight) {
    detail::absorb_right(state, site, exp.weights.front());
    state.center = site + 1;
    if (f == Flavor::X) {
      state.lsel_rows[static_cast<size_t>(site + 1)] = exp.sel;
      if (exp.oversampled) state.oversampled = true;
    } else if (f == Flavor::P) {
      const auto& c = state.cores[static_cast<size_t>(site)];
      auto idx = qdeim(Mat<T>(c.left_mat()), c.r1);
      state.lsel_rows[static_cast<size_t>(site + 1)] = idx;
      Mat<T> se(c.r1, c.r1);
      for (Index j = 0; j < c.r1; ++j) {
        const Index parent = idx[static_cast<size_t>(j)] / c.d;
        const Index bit = idx[static_cast<size_t>(j)] % c.d;
        se.row(j) = state.lsel_mat[static_cast<size_t>(site)].row(parent) * c.slice(bit);
      }
      state.lsel_mat[static_cast<size_t>(site + 1)] = se;
      Eigen::FullPivLU<Mat<T>> lu(se);
      if (!lu.isInvertible()) throw state_error("decimate_ap: singular oblique selection");
      state.lsel_inv[static_cast<size_t>(site + 1)] = lu.inverse();
    }
  } else {
    detail::absorb_left(state, site, exp.weights.front());
    state.center = site - 1;
    if (f == Flavor::X) {
      state.rsel_cols[static_cast<size_t>(site)] = exp.sel;
      if (exp.oversampled) state.oversampled = true;
    } else if (f == Flavor::P) {
      const auto& c = state.cores[static_cast<size_t>(site)];
      Mat<T> rm = c.right_mat();
      auto idx = qdeim(Mat<T>(rm.transpose()), c.r0);
      state.rsel_cols[static_cast<size_t>(site)] = idx;
      Mat<T> se(c.r0, c.r0);
      for (Index j = 0; j < c.r0; ++j) {
        const Index bit = idx[static_cast<size_t>(j)] / c.r1;
        const Index parent = idx[static_cast<size_t>(j)] % c.r1;
        se.col(j) = c.slice(bit) * state.rsel_mat[static_cast<size_t>(site + 1)].col(parent);
      }
      state.rsel_mat[static_cast<size_t>(site)] = se;
      Eigen::FullPivLU<Mat<T>> lu(se);
      if (!lu.isInvertible()) throw state_error("decimate_ap: singular oblique selection");
      state.rsel_inv[static_cast<size_t>(site)] = lu.inverse();
    }
  }
}

}  // namespace qtt
