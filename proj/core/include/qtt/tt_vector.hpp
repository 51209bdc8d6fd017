#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qtt/common.hpp"
#include "qtt/matalg.hpp"
#include "qtt/tensor.hpp"

namespace qtt {

enum class Form { None, Orthonormal, Interpolative };

// Tensor train vector with canonical-form metadata.
//
// Bond b in [0, L] sits to the left of site b; rank(0) = rank(L) = 1.
// Interpolative selections are stored as flat local indices:
//   lsel_rows[b]: rows (a * d + sigma) of the left-matricised core b-1 picked
//                 when that core was made left canonical,
//   rsel_cols[b]: columns (sigma * r_{b+1} + c) of the right-matricised core b
//                 picked when it was made right canonical.
// Each selected row/column extends one selection of the neighbouring bond, so
// the multi-index sets are nested by construction.
//
// For the oblique (orthonormal + selection) representation, lsel_mat/rsel_mat
// hold the cumulative selected-basis matrices L[I,:] and R[:,J] per bond along
// with their inverses.
template <class T>
struct TtVector {
  std::vector<Tensor3<T>> cores;
  int center = -1;
  Form form = Form::None;
  bool oversampled = false;

  std::vector<std::vector<Index>> lsel_rows, rsel_cols;
  std::vector<Mat<T>> lsel_mat, lsel_inv, rsel_mat, rsel_inv;

  TtVector() = default;
  explicit TtVector(std::vector<Tensor3<T>> cs) : cores(std::move(cs)) { init_selection_storage(); }

  int length() const { return int(cores.size()); }
  Index rank(int b) const {
    if (b <= 0) return cores.empty() ? 1 : cores.front().r0;
    if (b >= length()) return cores.back().r1;
    return cores[static_cast<size_t>(b)].r0;
  }
  Index max_rank() const {
    Index r = 1;
    for (int b = 1; b < length(); ++b) r = std::max(r, rank(b));
    return r;
  }
  std::vector<Index> bond_ranks() const {
    std::vector<Index> r;
    for (int b = 1; b < length(); ++b) r.push_back(rank(b));
    return r;
  }

  void init_selection_storage() {
    const size_t n = cores.size() + 1;
    lsel_rows.assign(n, {});
    rsel_cols.assign(n, {});
    lsel_mat.assign(n, Mat<T>());
    rsel_mat.assign(n, Mat<T>());
    lsel_inv.assign(n, Mat<T>());
    rsel_inv.assign(n, Mat<T>());
    lsel_rows[0] = {0};
    rsel_cols[cores.size()] = {0};
    lsel_mat[0] = Mat<T>::Ones(1, 1);
    lsel_inv[0] = Mat<T>::Ones(1, 1);
    rsel_mat[cores.size()] = Mat<T>::Ones(1, 1);
    rsel_inv[cores.size()] = Mat<T>::Ones(1, 1);
  }

  void invalidate_form() {
    form = Form::None;
    center = -1;
    oversampled = false;
    init_selection_storage();
  }
};

template <class T>
TtVector<T> tt_zero(int L, Index d = 2) {
  std::vector<Tensor3<T>> cs;
  for (int p = 0; p < L; ++p) cs.emplace_back(1, d, 1);
  return TtVector<T>(std::move(cs));
}

template <class T>
TtVector<T> tt_ones(int L, Index d = 2) {
  auto tt = tt_zero<T>(L, d);
  for (auto& c : tt.cores)
    for (auto& x : c.v) x = T(1);
  return tt;
}

// product state from one bit per site (a grid delta function)
template <class T>
TtVector<T> tt_delta(const std::vector<std::uint8_t>& bits, Index d = 2) {
  std::vector<Tensor3<T>> cs;
  for (auto b : bits) {
    Tensor3<T> c(1, d, 1);
    c(0, b, 0) = T(1);
    cs.push_back(std::move(c));
  }
  return TtVector<T>(std::move(cs));
}

template <class T, class Rng>
TtVector<T> tt_random(Rng& rng, int L, Index r, Index d = 2) {
  std::normal_distribution<double> g(0.0, 1.0);
  auto draw = [&]() {
    if constexpr (scalar_traits<T>::is_complex)
      return T(g(rng), g(rng));
    else
      return T(g(rng));
  };
  std::vector<Tensor3<T>> cs;
  Index rl = 1;
  for (int p = 0; p < L; ++p) {
    Index rr = p == L - 1 ? 1 : std::min({r, rl * d, Index(1) << ((L - 1 - p))});
    // cap by what the remaining sites can support
    Index cap = 1;
    for (int q = p + 1; q < L && cap < 1 << 30; ++q) cap = std::min<Index>(cap * d, Index(1) << 30);
    rr = std::min(rr, cap);
    Tensor3<T> c(rl, d, rr);
    for (auto& x : c.v) x = draw();
    cs.push_back(std::move(c));
    rl = rr;
  }
  return TtVector<T>(std::move(cs));
}

// --- dense conversion ---------------------------------------------------

// tensor-ordered dense data (site 0 slowest) -> TT by sequential SVD
template <class T>
TtVector<T> tt_from_dense(const std::vector<T>& data, int L, double eps = 0.0,
                          Index r_max = rank_unbounded, Index d = 2) {
  Index n = 1;
  for (int p = 0; p < L; ++p) n *= d;
  if (Index(data.size()) != n) throw shape_error("tt_from_dense: length != d^L");
  std::vector<Tensor3<T>> cs;
  Mat<T> w(1, n);
  for (Index i = 0; i < n; ++i) w(0, i) = data[static_cast<size_t>(i)];
  Index rl = 1;
  for (int p = 0; p < L - 1; ++p) {
    // reshape to (rl*d) x rest
    const Index rest = w.cols() / d;
    Mat<T> m(rl * d, rest);
    for (Index a = 0; a < rl; ++a)
      for (Index s = 0; s < d; ++s)
        for (Index j = 0; j < rest; ++j) m(a * d + s, j) = w(a, s * rest + j);
    auto svd = svd_truncate(m, eps, r_max, 1);
    Tensor3<T> c(rl, d, svd.rank);
    MapRM<T>(c.v.data(), rl * d, svd.rank) = svd.U;
    cs.push_back(std::move(c));
    w = svd.S.template cast<T>().asDiagonal() * svd.V.adjoint();
    rl = svd.rank;
  }
  Tensor3<T> last(rl, d, 1);
  for (Index a = 0; a < rl; ++a)
    for (Index s = 0; s < d; ++s) last(a, s, 0) = w(a, s);
  cs.push_back(std::move(last));
  return TtVector<T>(std::move(cs));
}

template <class T>
std::vector<T> tt_to_dense(const TtVector<T>& tt) {
  Index n = 1;
  for (const auto& c : tt.cores) {
    n *= c.d;
    if (n > (Index(1) << 24)) throw numeric_error("tt_to_dense: grid too large");
  }
  Mat<T> acc = Mat<T>::Ones(1, 1);
  for (const auto& c : tt.cores) {
    // acc: (prefix x rl) -> (prefix*d x rr)
    Mat<T> nxt = acc * c.right_mat();  // prefix x (d*rr)
    Mat<T> re(acc.rows() * c.d, c.r1);
    for (Index i = 0; i < acc.rows(); ++i)
      for (Index s = 0; s < c.d; ++s)
        for (Index b = 0; b < c.r1; ++b) re(i * c.d + s, b) = nxt(i, s * c.r1 + b);
    acc = std::move(re);
  }
  std::vector<T> out(static_cast<size_t>(acc.rows()));
  for (Index i = 0; i < acc.rows(); ++i) out[static_cast<size_t>(i)] = acc(i, 0);
  return out;
}

// --- elementwise access and algebra --------------------------------------

template <class T>
T sample(const TtVector<T>& tt, const std::vector<std::uint8_t>& sites) {
  if (Index(sites.size()) != tt.length()) throw shape_error("sample: wrong index length");
  Mat<T> v = Mat<T>::Ones(1, 1);
  for (int p = 0; p < tt.length(); ++p)
    v = (v * tt.cores[static_cast<size_t>(p)].slice(sites[static_cast<size_t>(p)])).eval();
  return v(0, 0);
}

template <class T>
T dot(const TtVector<T>& x, const TtVector<T>& y) {
  if (x.length() != y.length()) throw shape_error("dot: length mismatch");
  Mat<T> e = Mat<T>::Ones(1, 1);
  for (int p = 0; p < x.length(); ++p) {
    const auto& cx = x.cores[static_cast<size_t>(p)];
    const auto& cy = y.cores[static_cast<size_t>(p)];
    if (cx.d != cy.d) throw shape_error("dot: physical dimension mismatch");
    Mat<T> nxt = Mat<T>::Zero(cx.r1, cy.r1);
    for (Index s = 0; s < cx.d; ++s) nxt += cx.slice(s).adjoint() * e * cy.slice(s);
    e = std::move(nxt);
  }
  return e(0, 0);
}

template <class T>
real_t<T> norm(const TtVector<T>& x) {
  return std::sqrt(std::abs(dot(x, x)));
}

template <class T>
TtVector<T> scale(TtVector<T> x, T c) {
  Tensor3<T>& t = x.cores[static_cast<size_t>(x.center >= 0 ? x.center : 0)];
  for (auto& v : t.v) v *= c;
  return x;
}

// direct-sum addition; ranks add bond-wise
template <class T>
TtVector<T> add(const TtVector<T>& x, const TtVector<T>& y) {
  if (x.length() != y.length()) throw shape_error("add: length mismatch");
  const int L = x.length();
  std::vector<Tensor3<T>> cs;
  for (int p = 0; p < L; ++p) {
    const auto& a = x.cores[static_cast<size_t>(p)];
    const auto& b = y.cores[static_cast<size_t>(p)];
    if (a.d != b.d) throw shape_error("add: physical dimension mismatch");
    const Index rl = p == 0 ? 1 : a.r0 + b.r0;
    const Index rr = p == L - 1 ? 1 : a.r1 + b.r1;
    Tensor3<T> c(rl, a.d, rr);
    for (Index s = 0; s < a.d; ++s) {
      for (Index i = 0; i < a.r0; ++i)
        for (Index j = 0; j < a.r1; ++j) c(i, s, j) = a(i, s, j);
      const Index oi = p == 0 ? 0 : a.r0;
      const Index oj = p == L - 1 ? 0 : a.r1;
      for (Index i = 0; i < b.r0; ++i)
        for (Index j = 0; j < b.r1; ++j) c(i + oi, s, j + oj) = b(i, s, j);
    }
    cs.push_back(std::move(c));
  }
  return TtVector<T>(std::move(cs));
}

// --- canonicalization ----------------------------------------------------

namespace detail {

template <class T>
void absorb_right(TtVector<T>& tt, int p, const Mat<T>& w) {
  tt.cores[static_cast<size_t>(p + 1)] = mode0_mul(w, tt.cores[static_cast<size_t>(p + 1)]);
}

template <class T>
void absorb_left(TtVector<T>& tt, int p, const Mat<T>& w) {
  tt.cores[static_cast<size_t>(p - 1)] = mode2_mul(tt.cores[static_cast<size_t>(p - 1)], w);
}

// left-orthonormalise site p by thin QR, push the factor right.
// With track_selection, also q-DEIM rows of Q and refresh the cumulative
// selected-basis cache at bond p+1.
template <class T>
void orth_step_left(TtVector<T>& tt, int p, bool track_selection) {
  auto& c = tt.cores[static_cast<size_t>(p)];
  Mat<T> m = c.left_mat();
  const Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Mat<T>> qr(m);
  Mat<T> q = qr.householderQ() * Mat<T>::Identity(m.rows(), k);
  Mat<T> r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  Tensor3<T> nc(c.r0, c.d, k);
  MapRM<T>(nc.v.data(), c.r0 * c.d, k) = q;
  tt.cores[static_cast<size_t>(p)] = std::move(nc);
  absorb_right(tt, p, r);
  if (track_selection) {
    auto idx = qdeim(q, k);
    tt.lsel_rows[static_cast<size_t>(p + 1)] = idx;
    const auto& nc2 = tt.cores[static_cast<size_t>(p)];
    Mat<T> se(k, k);
    for (Index j = 0; j < k; ++j) {
      const Index parent = idx[static_cast<size_t>(j)] / nc2.d;
      const Index bit = idx[static_cast<size_t>(j)] % nc2.d;
      se.row(j) = tt.lsel_mat[static_cast<size_t>(p)].row(parent) * nc2.slice(bit);
    }
    tt.lsel_mat[static_cast<size_t>(p + 1)] = se;
    Eigen::FullPivLU<Mat<T>> lu(se);
    if (!lu.isInvertible()) throw state_error("orth_step_left: selected basis is singular");
    tt.lsel_inv[static_cast<size_t>(p + 1)] = lu.inverse();
  }
}

template <class T>
void orth_step_right(TtVector<T>& tt, int p, bool track_selection) {
  auto& c = tt.cores[static_cast<size_t>(p)];
  Mat<T> m = c.right_mat();
  const Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Mat<T>> qr(m.adjoint());
  Mat<T> q = qr.householderQ() * Mat<T>::Identity(m.cols(), k);  // (d*rr) x k
  Mat<T> r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  Tensor3<T> nc(k, c.d, c.r1);
  MapRM<T>(nc.v.data(), k, c.d * c.r1) = q.adjoint();
  tt.cores[static_cast<size_t>(p)] = std::move(nc);
  absorb_left(tt, p, Mat<T>(r.adjoint()));
  if (track_selection) {
    auto idx = qdeim(q, k);
    tt.rsel_cols[static_cast<size_t>(p)] = idx;
    const auto& nc2 = tt.cores[static_cast<size_t>(p)];
    Mat<T> se(k, k);
    for (Index j = 0; j < k; ++j) {
      const Index bit = idx[static_cast<size_t>(j)] / nc2.r1;
      const Index parent = idx[static_cast<size_t>(j)] % nc2.r1;
      se.col(j) = nc2.slice(bit) * tt.rsel_mat[static_cast<size_t>(p + 1)].col(parent);
    }
    tt.rsel_mat[static_cast<size_t>(p)] = se;
    Eigen::FullPivLU<Mat<T>> lu(se);
    if (!lu.isInvertible()) throw state_error("orth_step_right: selected basis is singular");
    tt.rsel_inv[static_cast<size_t>(p)] = lu.inverse();
  }
}

// interpolative XR factorisation of a matricised core: returns the
// interpolating functions, the selected rows, and the weight matrix M[I,:].
template <class T>
struct XrFactors {
  Mat<T> interp;
  std::vector<Index> rows;
  Mat<T> w;
  bool oversampled = false;
};

template <class T>
XrFactors<T> xr_factor(const Mat<T>& m, double eps, Index r_max, Index r_min,
                       const std::vector<Index>* extra_rows = nullptr) {
  XrFactors<T> out;
  auto svd = svd_truncate(m, eps, r_max, r_min);
  const Index r = svd.rank;
  if (svd.S.size() == 0 || svd.S(0) == 0) {
    out.rows.resize(static_cast<size_t>(r));
    for (Index i = 0; i < r; ++i) out.rows[static_cast<size_t>(i)] = i;
    out.interp = Mat<T>::Zero(m.rows(), r);
    for (Index i = 0; i < r; ++i) out.interp(i, i) = T(1);
    out.w = Mat<T>::Zero(r, m.cols());
    return out;
  }
  if (svd.rank_eps >= r || svd.rank_eps == 0) {
    out.rows = qdeim(svd.U, r);
  } else {
    out.rows = qdeim(Mat<T>(svd.U.leftCols(svd.rank_eps)), svd.rank_eps);
    std::vector<bool> used(static_cast<size_t>(m.rows()), false);
    for (Index i : out.rows) used[static_cast<size_t>(i)] = true;
    std::vector<Index> free_rows;
    for (Index i = 0; i < m.rows(); ++i)
      if (!used[static_cast<size_t>(i)]) free_rows.push_back(i);
    const Index pad = r - svd.rank_eps;
    Mat<T> rest(Index(free_rows.size()), pad);
    for (Index i = 0; i < Index(free_rows.size()); ++i)
      rest.row(i) = svd.U.row(free_rows[static_cast<size_t>(i)]).segment(svd.rank_eps, pad);
    auto mv = maxvol(rest);
    for (Index k = 0; k < pad; ++k)
      out.rows.push_back(free_rows[static_cast<size_t>(mv.rows[static_cast<size_t>(k)])]);
  }
  if (extra_rows != nullptr) {
    const size_t cap = static_cast<size_t>(2 * r);
    for (Index e : *extra_rows) {
      if (out.rows.size() >= cap) break;
      if (std::find(out.rows.begin(), out.rows.end(), e) == out.rows.end()) out.rows.push_back(e);
    }
  }
  const Index nrows = Index(out.rows.size());
  Mat<T> sub(nrows, m.cols());
  for (Index i = 0; i < nrows; ++i) sub.row(i) = m.row(out.rows[static_cast<size_t>(i)]);
  if (nrows == m.rows()) {
    // selecting every row: the interpolating functions are the permutation
    // matching the pivot order
    out.interp = Mat<T>::Zero(m.rows(), nrows);
    for (Index j = 0; j < nrows; ++j) out.interp(out.rows[static_cast<size_t>(j)], j) = T(1);
    out.w = sub;
    return out;
  }
  bool pinv = nrows != r || nrows != m.cols();
  if (!pinv) {
    Eigen::FullPivLU<Mat<T>> lu(sub);
    if (lu.isInvertible())
      out.interp = m * lu.inverse();
    else
      pinv = true;
  }
  if (pinv) {
    out.interp = m * pseudo_inverse(sub);
    out.oversampled = nrows != r;
  }
  // rank-deficient selected rows leave only the relaxed canonical condition
  if (!out.oversampled) {
    double dev = 0.0;
    for (Index i = 0; i < nrows; ++i)
      for (Index j = 0; j < nrows; ++j) {
        const double want = i == j ? 1.0 : 0.0;
        dev = std::max(dev, std::abs(out.interp(out.rows[static_cast<size_t>(i)], j) - T(want)));
      }
    if (dev > 1e-8) out.oversampled = true;
  }
  out.w = std::move(sub);
  return out;
}

template <class T>
void interp_step_left(TtVector<T>& tt, int p, double eps, Index r_max, Index r_min,
                      const std::vector<Index>* extra_rows = nullptr) {
  auto& c = tt.cores[static_cast<size_t>(p)];
  auto f = xr_factor<T>(c.left_mat(), eps, r_max, r_min, extra_rows);
  Tensor3<T> nc(c.r0, c.d, f.interp.cols());
  MapRM<T>(nc.v.data(), c.r0 * c.d, f.interp.cols()) = f.interp;
  tt.cores[static_cast<size_t>(p)] = std::move(nc);
  tt.lsel_rows[static_cast<size_t>(p + 1)] = f.rows;
  if (f.oversampled) tt.oversampled = true;
  absorb_right(tt, p, f.w);
}

template <class T>
void interp_step_right(TtVector<T>& tt, int p, double eps, Index r_max, Index r_min,
                       const std::vector<Index>* extra_cols = nullptr) {
  auto& c = tt.cores[static_cast<size_t>(p)];
  Mat<T> m = c.right_mat().transpose();  // (d*rr) x rl, select "rows" = columns of the core
  auto f = xr_factor<T>(m, eps, r_max, r_min, extra_cols);
  Tensor3<T> nc(f.interp.cols(), c.d, c.r1);
  MapRM<T>(nc.v.data(), f.interp.cols(), c.d * c.r1) = f.interp.transpose();
  tt.cores[static_cast<size_t>(p)] = std::move(nc);
  tt.rsel_cols[static_cast<size_t>(p)] = f.rows;
  if (f.oversampled) tt.oversampled = true;
  absorb_left(tt, p, Mat<T>(f.w.transpose()));
}

}  // namespace detail

// Bring the train into canonical form with the orthogonality centre at
// `center`.  eps_internal = 0 re-gauges without changing the represented
// tensor; with Orthonormal form and track_selection the oblique caches
// (selected rows/columns of the orthonormal factors plus inverses) are kept.
template <class T>
void canonicalize(TtVector<T>& tt, int center, Form form, double eps_internal = 0.0,
                  Index r_min = 1, bool track_selection = false) {
  const int L = tt.length();
  if (center < 0 || center >= L) throw std::invalid_argument("canonicalize: bad centre");
  if (form == Form::None) throw std::invalid_argument("canonicalize: form required");
  tt.oversampled = false;
  if (Index(tt.lsel_rows.size()) != L + 1) tt.init_selection_storage();
  for (int p = 0; p < center; ++p) {
    if (form == Form::Orthonormal)
      detail::orth_step_left(tt, p, track_selection);
    else
      detail::interp_step_left(tt, p, eps_internal, rank_unbounded, eps_internal > 0 ? r_min : 1);
  }
  for (int p = L - 1; p > center; --p) {
    if (form == Form::Orthonormal)
      detail::orth_step_right(tt, p, track_selection);
    else
      detail::interp_step_right(tt, p, eps_internal, rank_unbounded, eps_internal > 0 ? r_min : 1);
  }
  tt.center = center;
  tt.form = form;
}

// SVD rank truncation routed through the orthonormal form (default), or a
// CUR-based truncation that stays in the interpolative representation.
template <class T>
void truncate(TtVector<T>& tt, double eps, Index r_max = rank_unbounded, Index r_min = 1,
              bool cur_based = false) {
  const int L = tt.length();
  if (L < 2) return;
  if (cur_based) {
    canonicalize(tt, L - 1, Form::Interpolative, 0.0);
    for (int p = L - 1; p > 0; --p)
      detail::interp_step_right(tt, p, eps, r_max, r_min);
    tt.center = 0;
    tt.form = Form::Interpolative;
    return;
  }
  canonicalize(tt, L - 1, Form::Orthonormal, 0.0);
  for (int p = L - 1; p > 0; --p) {
    auto& c = tt.cores[static_cast<size_t>(p)];
    auto svd = svd_truncate(Mat<T>(c.right_mat()), eps, r_max, 1);
    Mat<T> vrows = svd.V;                                          // (d*r1) x rank
    Mat<T> carry = svd.U * svd.S.template cast<T>().asDiagonal();  // r0 x rank
    // rank floor: pad the right-canonical basis with orthonormal complement
    // vectors carrying zero weight
    Index attain_left = 1;
    for (int q = 0; q < p && attain_left < (Index(1) << 40); ++q)
      attain_left *= tt.cores[static_cast<size_t>(q)].d;
    const Index want = std::min({r_min, c.d * c.r1, attain_left, r_max});
    for (Index j = 0; vrows.cols() < want && j < c.d * c.r1; ++j) {
      Vec<T> cand = Vec<T>::Zero(c.d * c.r1);
      cand(j) = T(1);
      cand -= vrows * (vrows.adjoint() * cand);
      const double nrm = cand.norm();
      if (nrm < 0.5) continue;
      vrows.conservativeResize(Eigen::NoChange, vrows.cols() + 1);
      vrows.col(vrows.cols() - 1) = cand / T(nrm);
      carry.conservativeResize(Eigen::NoChange, carry.cols() + 1);
      carry.col(carry.cols() - 1).setZero();
    }
    const Index k = vrows.cols();
    Tensor3<T> nc(k, c.d, c.r1);
    MapRM<T>(nc.v.data(), k, c.d * c.r1) = vrows.adjoint();
    tt.cores[static_cast<size_t>(p)] = std::move(nc);
    detail::absorb_left(tt, p, carry);
  }
  tt.center = 0;
  tt.form = Form::Orthonormal;
  tt.oversampled = false;
}

// --- canonical-form verification -----------------------------------------

struct CanonicalReport {
  double ortho_residual = 0.0;    // orthonormality defect left/right of centre
  double interp_residual = 0.0;   // U[I,:] = id defect (or relaxed variant)
  double center_sample_residual = 0.0;  // centre vs sampled entries (interp.)
  bool nested_ok = true;
  bool ok(double tol_ortho = 1e-10, double tol_interp = 1e-8) const {
    return ortho_residual <= tol_ortho && interp_residual <= tol_interp && nested_ok;
  }
};

// multi-indices (bit strings) selected at bond b, built from the nested flats
template <class T>
std::vector<std::vector<std::uint8_t>> left_multi_indices(const TtVector<T>& tt, int b) {
  std::vector<std::vector<std::uint8_t>> out{{}};
  for (int q = 1; q <= b; ++q) {
    std::vector<std::vector<std::uint8_t>> nxt;
    const Index d = tt.cores[static_cast<size_t>(q - 1)].d;
    for (Index flat : tt.lsel_rows[static_cast<size_t>(q)]) {
      auto s = out[static_cast<size_t>(flat / d)];
      s.push_back(static_cast<std::uint8_t>(flat % d));
      nxt.push_back(std::move(s));
    }
    out = std::move(nxt);
  }
  return out;
}

template <class T>
std::vector<std::vector<std::uint8_t>> right_multi_indices(const TtVector<T>& tt, int b) {
  const int L = tt.length();
  std::vector<std::vector<std::uint8_t>> out{{}};
  for (int q = L - 1; q >= b; --q) {
    std::vector<std::vector<std::uint8_t>> nxt;
    const auto& c = tt.cores[static_cast<size_t>(q)];
    for (Index flat : tt.rsel_cols[static_cast<size_t>(q)]) {
      std::vector<std::uint8_t> s;
      s.push_back(static_cast<std::uint8_t>(flat / c.r1));
      const auto& parent = out[static_cast<size_t>(flat % c.r1)];
      s.insert(s.end(), parent.begin(), parent.end());
      nxt.push_back(std::move(s));
    }
    out = std::move(nxt);
  }
  return out;
}

template <class T>
CanonicalReport verify_canonical(const TtVector<T>& tt) {
  CanonicalReport rep;
  if (tt.form == Form::None || tt.center < 0) {
    rep.nested_ok = false;
    return rep;
  }
  const int L = tt.length();
  auto update = [](double& acc, double v) { acc = std::max(acc, v); };

  for (int p = 0; p < L; ++p) {
    const auto& c = tt.cores[static_cast<size_t>(p)];
    if (p < tt.center) {
      Mat<T> m = c.left_mat();
      if (tt.form == Form::Orthonormal) {
        update(rep.ortho_residual,
               (m.adjoint() * m - Mat<T>::Identity(m.cols(), m.cols())).cwiseAbs().maxCoeff());
      } else {
        const auto& rows = tt.lsel_rows[static_cast<size_t>(p + 1)];
        if (Index(rows.size()) < m.cols()) {
          rep.nested_ok = false;
          continue;
        }
        Mat<T> sel(Index(rows.size()), m.cols());
        for (Index i = 0; i < Index(rows.size()); ++i) sel.row(i) = m.row(rows[static_cast<size_t>(i)]);
        if (Index(rows.size()) == m.cols())
          update(rep.interp_residual,
                 (sel - Mat<T>::Identity(sel.rows(), sel.cols())).cwiseAbs().maxCoeff());
        else  // oversampled: relaxed condition, interpolation reproduces the core
          update(rep.interp_residual, (m * sel - m).cwiseAbs().maxCoeff());
      }
      for (Index flat : tt.lsel_rows[static_cast<size_t>(p + 1)])
        if (flat < 0 || flat >= c.r0 * c.d) rep.nested_ok = false;
    } else if (p > tt.center) {
      Mat<T> m = c.right_mat();
      if (tt.form == Form::Orthonormal) {
        update(rep.ortho_residual,
               (m * m.adjoint() - Mat<T>::Identity(m.rows(), m.rows())).cwiseAbs().maxCoeff());
      } else {
        const auto& cols = tt.rsel_cols[static_cast<size_t>(p)];
        if (Index(cols.size()) < m.rows()) {
          rep.nested_ok = false;
          continue;
        }
        Mat<T> sel(m.rows(), Index(cols.size()));
        for (Index j = 0; j < Index(cols.size()); ++j) sel.col(j) = m.col(cols[static_cast<size_t>(j)]);
        if (Index(cols.size()) == m.rows())
          update(rep.interp_residual,
                 (sel - Mat<T>::Identity(sel.rows(), sel.cols())).cwiseAbs().maxCoeff());
        else
          update(rep.interp_residual, (sel * m - m).cwiseAbs().maxCoeff());
      }
      for (Index flat : tt.rsel_cols[static_cast<size_t>(p)])
        if (flat < 0 || flat >= c.d * c.r1) rep.nested_ok = false;
    }
  }

  // centre entries equal sampled data in the strict interpolative form
  if (tt.form == Form::Interpolative && !tt.oversampled && L <= 24) {
    const auto li = left_multi_indices(tt, tt.center);
    const auto ri = right_multi_indices(tt, tt.center + 1);
    const auto& c = tt.cores[static_cast<size_t>(tt.center)];
    double scale = 0.0;
    for (const auto& x : c.v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) scale = 1.0;
    if (Index(li.size()) == c.r0 && Index(ri.size()) == c.r1) {
      for (Index a = 0; a < c.r0; ++a)
        for (Index s = 0; s < c.d; ++s)
          for (Index b = 0; b < c.r1; ++b) {
            std::vector<std::uint8_t> idx = li[static_cast<size_t>(a)];
            idx.push_back(static_cast<std::uint8_t>(s));
            idx.insert(idx.end(), ri[static_cast<size_t>(b)].begin(), ri[static_cast<size_t>(b)].end());
            update(rep.center_sample_residual, std::abs(sample(tt, idx) - c(a, s, b)) / scale);
          }
    } else {
      rep.nested_ok = false;
    }
  }
  return rep;
}

// --- plain-text dump ------------------------------------------------------

template <class T>
void dump(const TtVector<T>& tt, std::ostream& os) {
  os << "tt " << tt.length() << " " << (scalar_traits<T>::is_complex ? "complex" : "real") << "\n";
  os.precision(17);
  for (const auto& c : tt.cores) {
    os << c.r0 << " " << c.d << " " << c.r1 << " :";
    for (const auto& x : c.v) {
      if constexpr (scalar_traits<T>::is_complex)
        os << " " << x.real() << " " << x.imag();
      else
        os << " " << x;
    }
    os << "\n";
  }
}

template <class T>
TtVector<T> parse_tt(std::istream& is) {
  std::string tag, kind;
  int L = 0;
  is >> tag >> L >> kind;
  if (tag != "tt") throw std::invalid_argument("parse_tt: bad header");
  const bool want_complex = kind == "complex";
  if (want_complex != scalar_traits<T>::is_complex)
    throw std::invalid_argument("parse_tt: scalar kind mismatch");
  std::vector<Tensor3<T>> cs;
  for (int p = 0; p < L; ++p) {
    Index r0, d, r1;
    std::string colon;
    is >> r0 >> d >> r1 >> colon;
    Tensor3<T> c(r0, d, r1);
    for (auto& x : c.v) {
      if constexpr (scalar_traits<T>::is_complex) {
        double re, im;
        is >> re >> im;
        x = T(re, im);
      } else {
        is >> x;
      }
    }
    cs.push_back(std::move(c));
  }
  return TtVector<T>(std::move(cs));
}

}  // namespace qtt
