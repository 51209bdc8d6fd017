#pragma once

#include <vector>

#include "qtt/tt_vector.hpp"

namespace qtt {

inline Index ipow(Index b, int e) {
  Index r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// Tensor train operator: one four-way core (b0 x dout x din x b1) per site.
template <class T>
struct TtOperator {
  std::vector<Tensor4<T>> cores;

  TtOperator() = default;
  explicit TtOperator(std::vector<Tensor4<T>> cs) : cores(std::move(cs)) {}

  int length() const { return int(cores.size()); }
  Index rank(int b) const {
    if (b <= 0) return 1;
    if (b >= length()) return 1;
    return cores[static_cast<size_t>(b)].b0;
  }
  Index max_rank() const {
    Index r = 1;
    for (int b = 1; b < length(); ++b) r = std::max(r, rank(b));
    return r;
  }
};

template <class T>
TtOperator<T> identity_op(int L, Index d = 2) {
  std::vector<Tensor4<T>> cs;
  for (int p = 0; p < L; ++p) {
    Tensor4<T> c(1, d, d, 1);
    for (Index s = 0; s < d; ++s) c(0, s, s, 0) = T(1);
    cs.push_back(std::move(c));
  }
  return TtOperator<T>(std::move(cs));
}

template <class T>
TtOperator<T> op_scale(TtOperator<T> a, T c) {
  for (auto& x : a.cores.front().v) x *= c;
  return a;
}

template <class T>
TtOperator<T> op_add(const TtOperator<T>& a, const TtOperator<T>& b) {
  if (a.length() != b.length()) throw shape_error("op_add: length mismatch");
  const int L = a.length();
  std::vector<Tensor4<T>> cs;
  for (int p = 0; p < L; ++p) {
    const auto& x = a.cores[static_cast<size_t>(p)];
    const auto& y = b.cores[static_cast<size_t>(p)];
    if (x.dout != y.dout || x.din != y.din) throw shape_error("op_add: physical dims mismatch");
    const Index bl = p == 0 ? 1 : x.b0 + y.b0;
    const Index br = p == L - 1 ? 1 : x.b1 + y.b1;
    Tensor4<T> c(bl, x.dout, x.din, br);
    for (Index so = 0; so < x.dout; ++so)
      for (Index si = 0; si < x.din; ++si) {
        for (Index i = 0; i < x.b0; ++i)
          for (Index j = 0; j < x.b1; ++j) c(i, so, si, j) = x(i, so, si, j);
        const Index oi = p == 0 ? 0 : x.b0;
        const Index oj = p == L - 1 ? 0 : x.b1;
        for (Index i = 0; i < y.b0; ++i)
          for (Index j = 0; j < y.b1; ++j) c(i + oi, so, si, j + oj) = y(i, so, si, j);
      }
    cs.push_back(std::move(c));
  }
  return TtOperator<T>(std::move(cs));
}

// rank truncation on the fused (dout*din) physical index
template <class T>
void op_truncate(TtOperator<T>& a, double eps, Index r_max = rank_unbounded) {
  std::vector<Tensor3<T>> fused;
  std::vector<std::pair<Index, Index>> dims;
  for (const auto& c : a.cores) {
    dims.emplace_back(c.dout, c.din);
    fused.push_back(c.fuse_physical());
  }
  TtVector<T> v(std::move(fused));
  truncate(v, eps, r_max, 1);
  for (int p = 0; p < a.length(); ++p)
    a.cores[static_cast<size_t>(p)] = Tensor4<T>::split_physical(
        v.cores[static_cast<size_t>(p)], dims[static_cast<size_t>(p)].first, dims[static_cast<size_t>(p)].second);
}

enum class ApplyMethod { Exact, ZipUp };

// y = A x.  Exact contraction multiplies the bond ranks and then truncates;
// zip-up interleaves the contraction with local truncations.
template <class T>
TtVector<T> apply_op(const TtOperator<T>& a, const TtVector<T>& x, double eps = 0.0,
                     Index r_max = rank_unbounded, ApplyMethod method = ApplyMethod::Exact) {
  if (a.length() != x.length()) throw shape_error("apply_op: length mismatch");
  const int L = a.length();

  if (method == ApplyMethod::Exact) {
    std::vector<Tensor3<T>> cs;
    for (int p = 0; p < L; ++p) {
      const auto& o = a.cores[static_cast<size_t>(p)];
      const auto& c = x.cores[static_cast<size_t>(p)];
      if (o.din != c.d) throw shape_error("apply_op: physical dims mismatch");
      Tensor3<T> z(o.b0 * c.r0, o.dout, o.b1 * c.r1);
      for (Index so = 0; so < o.dout; ++so)
        for (Index si = 0; si < o.din; ++si) {
          const auto om = o.slice(so, si);
          const auto cm = c.slice(si);
          for (Index i = 0; i < o.b0; ++i)
            for (Index j = 0; j < o.b1; ++j) {
              if (om(i, j) == T(0)) continue;
              const T w = om(i, j);
              for (Index ai = 0; ai < c.r0; ++ai)
                for (Index bj = 0; bj < c.r1; ++bj)
                  z(i * c.r0 + ai, so, j * c.r1 + bj) += w * cm(ai, bj);
            }
        }
      cs.push_back(std::move(z));
    }
    TtVector<T> y(std::move(cs));
    if (eps > 0 || r_max != rank_unbounded) truncate(y, eps, r_max);
    return y;
  }

  // zip-up: carry the residual factor to the right while truncating locally,
  // then a final opposite-direction sweep
  Mat<T> carry = Mat<T>::Ones(1, 1);  // rz x (b*r)
  std::vector<Tensor3<T>> cs;
  for (int p = 0; p < L; ++p) {
    const auto& o = a.cores[static_cast<size_t>(p)];
    const auto& c = x.cores[static_cast<size_t>(p)];
    if (o.din != c.d) throw shape_error("apply_op: physical dims mismatch");
    const Index rz = carry.rows();
    Tensor3<T> big(rz, o.dout, o.b1 * c.r1);
    // big(z, so, (j,bj)) = sum_{i,ai,si} carry(z,(i,ai)) o(i,so,si,j) c(ai,si,bj)
    for (Index so = 0; so < o.dout; ++so)
      for (Index si = 0; si < o.din; ++si) {
        const auto om = o.slice(so, si);
        const auto cm = c.slice(si);
        for (Index i = 0; i < o.b0; ++i)
          for (Index j = 0; j < o.b1; ++j) {
            if (om(i, j) == T(0)) continue;
            const T w = om(i, j);
            for (Index z = 0; z < rz; ++z)
              for (Index ai = 0; ai < c.r0; ++ai) {
                const T f = w * carry(z, i * c.r0 + ai);
                if (f == T(0)) continue;
                for (Index bj = 0; bj < c.r1; ++bj) big(z, so, j * c.r1 + bj) += f * cm(ai, bj);
              }
          }
      }
    if (p == L - 1) {
      cs.push_back(std::move(big));
      break;
    }
    auto svd = svd_truncate(Mat<T>(big.left_mat()), eps, r_max, 1);
    Tensor3<T> q(rz, o.dout, svd.rank);
    MapRM<T>(q.v.data(), rz * o.dout, svd.rank) = svd.U;
    cs.push_back(std::move(q));
    carry = svd.S.template cast<T>().asDiagonal() * svd.V.adjoint();
  }
  TtVector<T> y(std::move(cs));
  truncate(y, eps, r_max);
  return y;
}

// operator product (a . b), exact then truncated
template <class T>
TtOperator<T> op_compose(const TtOperator<T>& a, const TtOperator<T>& b, double eps = 0.0,
                         Index r_max = rank_unbounded) {
  if (a.length() != b.length()) throw shape_error("op_compose: length mismatch");
  const int L = a.length();
  std::vector<Tensor4<T>> cs;
  for (int p = 0; p < L; ++p) {
    const auto& x = a.cores[static_cast<size_t>(p)];
    const auto& y = b.cores[static_cast<size_t>(p)];
    if (x.din != y.dout) throw shape_error("op_compose: physical dims mismatch");
    Tensor4<T> z(x.b0 * y.b0, x.dout, y.din, x.b1 * y.b1);
    for (Index so = 0; so < x.dout; ++so)
      for (Index sm = 0; sm < x.din; ++sm)
        for (Index si = 0; si < y.din; ++si) {
          const auto xm = x.slice(so, sm);
          const auto ym = y.slice(sm, si);
          for (Index i = 0; i < x.b0; ++i)
            for (Index j = 0; j < x.b1; ++j) {
              if (xm(i, j) == T(0)) continue;
              const T w = xm(i, j);
              for (Index k = 0; k < y.b0; ++k)
                for (Index l = 0; l < y.b1; ++l)
                  z(i * y.b0 + k, so, si, j * y.b1 + l) += w * ym(k, l);
            }
        }
    cs.push_back(std::move(z));
  }
  TtOperator<T> out(std::move(cs));
  if (eps > 0 || r_max != rank_unbounded) op_truncate(out, eps, r_max);
  return out;
}

template <class T>
Mat<T> op_to_dense(const TtOperator<T>& a) {
  Index nr = 1, nc = 1;
  for (const auto& c : a.cores) {
    nr *= c.dout;
    nc *= c.din;
    if (nr * nc > (Index(1) << 26)) throw numeric_error("op_to_dense: operator too large");
  }
  // accumulate over sites: acc((rows, cols), b)
  Mat<T> acc = Mat<T>::Ones(1, 1);
  Index rows = 1, cols = 1;
  for (const auto& c : a.cores) {
    Mat<T> nxt = Mat<T>::Zero(rows * c.dout * cols * c.din, c.b1);
    for (Index rc = 0; rc < rows * cols; ++rc) {
      const Index r0 = rc / cols, c0 = rc % cols;
      for (Index so = 0; so < c.dout; ++so)
        for (Index si = 0; si < c.din; ++si) {
          const auto om = c.slice(so, si);
          const Index row = (r0 * c.dout + so) * (cols * c.din) + (c0 * c.din + si);
          nxt.row(row) += acc.row(rc) * om;
        }
    }
    rows *= c.dout;
    cols *= c.din;
    acc = std::move(nxt);
  }
  Mat<T> out(nr, nc);
  for (Index r = 0; r < nr; ++r)
    for (Index cc = 0; cc < nc; ++cc) out(r, cc) = acc(r * nc + cc, 0);
  return out;
}

// dense matrix indexed by tensor-ordered row/column bits -> TT operator
template <class T>
TtOperator<T> op_from_dense(const Mat<T>& m, int L, double eps = 0.0,
                            Index r_max = rank_unbounded, Index d = 2) {
  Index n = 1;
  for (int p = 0; p < L; ++p) n *= d;
  if (m.rows() != n || m.cols() != n) throw shape_error("op_from_dense: size mismatch");
  // interleave row and column bits per site into a fused d^2 index
  std::vector<T> data(static_cast<size_t>(n * n));
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) {
      Index ti = 0;
      for (int p = 0; p < L; ++p) {
        const int sh = L - 1 - p;
        const Index rb = (r / ipow(d, sh)) % d;
        const Index cb = (c / ipow(d, sh)) % d;
        ti = ti * d * d + rb * d + cb;
      }
      data[static_cast<size_t>(ti)] = m(r, c);
    }
  auto v = tt_from_dense(data, L, eps, r_max, d * d);
  std::vector<Tensor4<T>> cs;
  for (const auto& c : v.cores) cs.push_back(Tensor4<T>::split_physical(c, d, d));
  return TtOperator<T>(std::move(cs));
}

}  // namespace qtt
