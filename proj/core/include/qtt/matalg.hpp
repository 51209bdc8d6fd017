#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "qtt/common.hpp"
#include "qtt/tensor.hpp"

namespace qtt {

template <class T>
struct SvdFactors {
  Mat<T> U;             // m x rank, orthonormal columns
  Vec<real_t<T>> S;     // rank singular values
  Mat<T> V;             // n x rank
  Index rank = 0;       // after clamping to [r_min, min(r_max, full rank)]
  Index rank_eps = 0;   // rank selected by the tolerance alone
};

constexpr Index rank_unbounded = std::numeric_limits<Index>::max();

// Truncated SVD with a Frobenius-relative tail criterion: keep the smallest
// rank whose discarded tail mass is <= eps * ||M||_F, then clamp to
// [r_min, min(r_max, min(m,n))].  eps = 0 keeps every singular value.
template <class T>
SvdFactors<T> svd_truncate(const Mat<T>& M, double eps, Index r_max = rank_unbounded,
                           Index r_min = 1) {
  if (!M.allFinite()) throw numeric_error("svd_truncate: non-finite input");
  if (eps < 0 || r_min > r_max) throw std::invalid_argument("svd_truncate: bad tolerance/bounds");
  Eigen::BDCSVD<Mat<T>> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const Index full = std::min<Index>(M.rows(), M.cols());
  const double nrm = sv.norm();

  Index r_eps = full;
  if (nrm == 0.0) {
    r_eps = 0;
  } else if (eps > 0.0) {
    double tail2 = 0.0;
    const double bound2 = eps * eps * nrm * nrm;
    r_eps = full;
    for (Index k = full - 1; k >= 0; --k) {
      const double t = tail2 + double(sv(k)) * double(sv(k));
      if (t <= bound2) {
        tail2 = t;
        r_eps = k;
      } else {
        break;
      }
    }
  } else {
    r_eps = 0;
    for (Index k = 0; k < full; ++k)
      if (sv(k) > 0) r_eps = k + 1;
  }

  SvdFactors<T> out;
  out.rank_eps = r_eps;
  out.rank = std::clamp<Index>(r_eps, std::min(r_min, full), std::min(r_max, full));
  out.U = svd.matrixU().leftCols(out.rank);
  out.S = sv.head(out.rank);
  out.V = svd.matrixV().leftCols(out.rank);
  return out;
}

// Row selection via a column-pivoted QR of U^H (q-DEIM).  U is expected to
// have (near-)orthonormal columns; selecting n_select < cols(U) takes the
// leading pivots.
template <class T>
std::vector<Index> qdeim(const Mat<T>& U, Index n_select) {
  if (n_select > U.cols())
    throw std::invalid_argument("qdeim: cannot select more rows than basis vectors");
  if (U.cols() == 0) return {};
  Eigen::ColPivHouseholderQR<Mat<T>> qr(U.adjoint());
  const auto& R = qr.matrixR();
  const double r00 = std::abs(R(0, 0));
  if (r00 == 0.0 || !(std::abs(R(U.cols() - 1, U.cols() - 1)) > 1e-14 * r00))
    throw degenerate_selection("qdeim: rank-deficient basis");
  std::vector<Index> idx(static_cast<size_t>(n_select));
  for (Index k = 0; k < n_select; ++k) idx[static_cast<size_t>(k)] = qr.colsPermutation().indices()(k);
  return idx;
}

struct MaxvolResult {
  std::vector<Index> rows;
  bool converged = true;
  int iterations = 0;
};

// Greedy row swaps until every entry of A * A[I,:]^{-1} has magnitude below
// 1 + delta.  Initialised from the pivoted-QR selection.
template <class T>
MaxvolResult maxvol(const Mat<T>& A, double delta = 1e-2, int max_iter = 100) {
  const Index n = A.rows(), r = A.cols();
  if (n < r) throw std::invalid_argument("maxvol: matrix must be tall");
  MaxvolResult res;
  res.rows = qdeim(A, r);

  Mat<T> sub(r, r);
  bool reinitialized = false;
  for (int it = 0; it < max_iter; ++it) {
    for (Index k = 0; k < r; ++k) sub.row(k) = A.row(res.rows[static_cast<size_t>(k)]);
    Eigen::FullPivLU<Mat<T>> lu(sub);
    if (!lu.isInvertible()) {
      if (reinitialized) {
        res.converged = false;
        return res;
      }
      res.rows = qdeim(A, r);
      reinitialized = true;
      continue;
    }
    Mat<T> B = A * lu.inverse();  // n x r
    Index bi = 0, bj = 0;
    double bmax = 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < r; ++j) {
        const double a = std::abs(B(i, j));
        if (a > bmax) {
          bmax = a;
          bi = i;
          bj = j;
        }
      }
    res.iterations = it + 1;
    if (bmax <= 1.0 + delta) return res;
    res.rows[static_cast<size_t>(bj)] = bi;
  }
  res.converged = false;
  return res;
}

template <class T>
struct CurFactors {
  Mat<T> interp;                // m x |I|, the interpolating functions C Uhat^{-1}
  Mat<T> rows;                  // |I| x n, selected rows of M
  std::vector<Index> row_idx;   // I
  std::vector<Index> col_idx;   // J
  bool oversampled = false;
  Index rank = 0;               // rank of the underlying truncated SVD
};

namespace detail {

template <class T>
Mat<T> pseudo_inverse(const Mat<T>& A) {
  Eigen::CompleteOrthogonalDecomposition<Mat<T>> cod(A);
  return cod.pseudoInverse();
}

}  // namespace detail

// CUR interpolative factorisation: truncated SVD, q-DEIM row/column selection
// on the singular vectors, then interp = M[:,J] * pinv(M[I,J]) and
// rows = M[I,:].  A rank floor below the tolerance rank is padded with rows
// picked by maxvol on the discarded singular vectors; extra_rows, when given,
// are unioned into I (capped at twice the base rank) which leaves the factors
// oversampled.
template <class T>
CurFactors<T> cur(const Mat<T>& M, double eps, Index r_max = rank_unbounded, Index r_min = 1,
                  const std::vector<Index>* extra_rows = nullptr) {
  CurFactors<T> out;
  const auto svd = svd_truncate(M, eps, r_max, r_min);
  const Index r = svd.rank;
  out.rank = r;

  if (svd.S.size() == 0 || svd.S(0) == 0) {
    // zero matrix: unit interpolating functions on the first r rows/columns
    out.row_idx.resize(static_cast<size_t>(r));
    out.col_idx.resize(static_cast<size_t>(r));
    for (Index k = 0; k < r; ++k) out.row_idx[static_cast<size_t>(k)] = out.col_idx[static_cast<size_t>(k)] = k;
    out.interp = Mat<T>::Zero(M.rows(), r);
    for (Index k = 0; k < r; ++k) out.interp(k, k) = T(1);
    out.rows = Mat<T>::Zero(r, M.cols());
    return out;
  }

  if (svd.rank_eps >= r || svd.rank_eps == 0) {
    out.row_idx = qdeim(svd.U, r);
  } else {
    // floor padding: base selection on the kept vectors, remainder by maxvol
    // on the discarded subspace restricted to unused rows
    out.row_idx = qdeim(Mat<T>(svd.U.leftCols(svd.rank_eps)), svd.rank_eps);
    std::vector<bool> used(static_cast<size_t>(M.rows()), false);
    for (Index i : out.row_idx) used[static_cast<size_t>(i)] = true;
    std::vector<Index> free_rows;
    for (Index i = 0; i < M.rows(); ++i)
      if (!used[static_cast<size_t>(i)]) free_rows.push_back(i);
    const Index pad = r - svd.rank_eps;
    Mat<T> rest(Index(free_rows.size()), pad);
    for (Index i = 0; i < Index(free_rows.size()); ++i)
      rest.row(i) = svd.U.row(free_rows[static_cast<size_t>(i)]).segment(svd.rank_eps, pad);
    auto mv = maxvol(rest);
    for (Index k = 0; k < pad; ++k)
      out.row_idx.push_back(free_rows[static_cast<size_t>(mv.rows[static_cast<size_t>(k)])]);
  }
  out.col_idx = qdeim(svd.V, r);

  if (extra_rows != nullptr) {
    const size_t cap = static_cast<size_t>(2 * r);
    for (Index e : *extra_rows) {
      if (out.row_idx.size() >= cap) break;
      if (std::find(out.row_idx.begin(), out.row_idx.end(), e) == out.row_idx.end())
        out.row_idx.push_back(e);
    }
  }
  const Index nrows = Index(out.row_idx.size());

  Mat<T> C(M.rows(), r), hat(nrows, r);
  for (Index j = 0; j < r; ++j) C.col(j) = M.col(out.col_idx[static_cast<size_t>(j)]);
  for (Index i = 0; i < nrows; ++i) hat.row(i) = C.row(out.row_idx[static_cast<size_t>(i)]);

  bool use_pinv = nrows != r;
  if (!use_pinv) {
    Eigen::FullPivLU<Mat<T>> lu(hat);
    if (lu.isInvertible())
      out.interp = C * lu.inverse();
    else
      use_pinv = true;
  }
  if (use_pinv) {
    out.interp = C * detail::pseudo_inverse(hat);
    out.oversampled = true;
  }
  out.rows.resize(nrows, M.cols());
  for (Index i = 0; i < nrows; ++i) out.rows.row(i) = M.row(out.row_idx[static_cast<size_t>(i)]);
  return out;
}

template <class T>
struct CgsResult {
  Vec<T> x;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;
};

// Conjugate gradient squared on a matrix-free linear map.  One restart from
// the current iterate on breakdown, then a hard error.
template <class T>
CgsResult<T> cgs_solve(const std::function<Vec<T>(const Vec<T>&)>& apply_a, const Vec<T>& b,
                       double tol = 1e-10, int max_iter = 1000) {
  if (!b.allFinite()) throw numeric_error("cgs_solve: non-finite right-hand side");
  CgsResult<T> res;
  const double bnorm = b.norm();
  res.x = Vec<T>::Zero(b.size());
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  Vec<T> r = b, r0 = b, u = b, p = b;
  T rho = r0.dot(r);
  bool restarted = false;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    Vec<T> v = apply_a(p);
    const T sigma = r0.dot(v);
    bool breakdown = std::abs(sigma) == 0.0 || std::abs(rho) == 0.0;
    if (!breakdown) {
      const T alpha = rho / sigma;
      Vec<T> q = u - alpha * v;
      Vec<T> uq = u + q;
      res.x += alpha * uq;
      r -= alpha * apply_a(uq);
      res.residual = r.norm() / bnorm;
      if (!r.allFinite()) throw solver_divergence("cgs_solve: iterate diverged");
      if (res.residual <= tol) {
        res.converged = true;
        return res;
      }
      const T rho_new = r0.dot(r);
      if (std::abs(rho_new) == 0.0) {
        breakdown = true;
      } else {
        const T beta = rho_new / rho;
        rho = rho_new;
        u = r + beta * q;
        p = u + beta * (q + beta * p);
      }
    }
    if (breakdown) {
      if (restarted) throw numeric_error("cgs_solve: repeated breakdown");
      restarted = true;
      r = b - apply_a(res.x);
      r0 = r;
      u = r;
      p = r;
      rho = r0.dot(r);
      res.residual = r.norm() / bnorm;
      if (res.residual <= tol) {
        res.converged = true;
        return res;
      }
    }
  }
  return res;
}

}  // namespace qtt
