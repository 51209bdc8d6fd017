#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "qtt/common.hpp"

namespace qtt {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using RMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
using MapRM = Eigen::Map<RMat<T>>;
template <class T>
using CMapRM = Eigen::Map<const RMat<T>>;
template <class T>
using CMapStride =
    Eigen::Map<const RMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// Three-way tensor core (r0 x d x r1), row-major with the last index fastest.
template <class T>
struct Tensor3 {
  Index r0 = 0, d = 0, r1 = 0;
  std::vector<T> v;

  Tensor3() = default;
  Tensor3(Index r0_, Index d_, Index r1_)
      : r0(r0_), d(d_), r1(r1_), v(static_cast<size_t>(r0_ * d_ * r1_), T(0)) {}

  Index size() const { return r0 * d * r1; }

  T& operator()(Index a, Index s, Index b) { return v[static_cast<size_t>((a * d + s) * r1 + b)]; }
  T operator()(Index a, Index s, Index b) const { return v[static_cast<size_t>((a * d + s) * r1 + b)]; }

  // (r0*d) x r1 view
  MapRM<T> left_mat() { return MapRM<T>(v.data(), r0 * d, r1); }
  CMapRM<T> left_mat() const { return CMapRM<T>(v.data(), r0 * d, r1); }

  // r0 x (d*r1) view
  MapRM<T> right_mat() { return MapRM<T>(v.data(), r0, d * r1); }
  CMapRM<T> right_mat() const { return CMapRM<T>(v.data(), r0, d * r1); }

  // r0 x r1 view of one physical slice
  CMapStride<T> slice(Index s) const {
    return CMapStride<T>(v.data() + s * r1, r0, r1, Eigen::OuterStride<>(d * r1));
  }

  Vec<T> as_vector() const { return CMapRM<T>(v.data(), size(), 1); }

  static Tensor3<T> from_vector(const Vec<T>& x, Index r0, Index d, Index r1) {
    if (x.size() != r0 * d * r1) throw shape_error("Tensor3::from_vector: size mismatch");
    Tensor3<T> t(r0, d, r1);
    for (Index i = 0; i < x.size(); ++i) t.v[static_cast<size_t>(i)] = x(i);
    return t;
  }
};

// Four-way operator core (b0 x dout x din x b1), row-major.
template <class T>
struct Tensor4 {
  Index b0 = 0, dout = 0, din = 0, b1 = 0;
  std::vector<T> v;

  Tensor4() = default;
  Tensor4(Index b0_, Index dout_, Index din_, Index b1_)
      : b0(b0_), dout(dout_), din(din_), b1(b1_),
        v(static_cast<size_t>(b0_ * dout_ * din_ * b1_), T(0)) {}

  Index size() const { return b0 * dout * din * b1; }

  T& operator()(Index x, Index so, Index si, Index y) {
    return v[static_cast<size_t>(((x * dout + so) * din + si) * b1 + y)];
  }
  T operator()(Index x, Index so, Index si, Index y) const {
    return v[static_cast<size_t>(((x * dout + so) * din + si) * b1 + y)];
  }

  // b0 x b1 view of one (so, si) slice
  CMapStride<T> slice(Index so, Index si) const {
    return CMapStride<T>(v.data() + (so * din + si) * b1, b0, b1,
                         Eigen::OuterStride<>(dout * din * b1));
  }

  // fuse (dout, din) into one physical index of size dout*din
  Tensor3<T> fuse_physical() const {
    Tensor3<T> t(b0, dout * din, b1);
    t.v = v;
    return t;
  }
  static Tensor4<T> split_physical(const Tensor3<T>& t, Index dout, Index din) {
    if (t.d != dout * din) throw shape_error("Tensor4::split_physical: bad physical dim");
    Tensor4<T> o(t.r0, dout, din, t.r1);
    o.v = t.v;
    return o;
  }
};

// out(a,b,s) from in(a,s,b)
template <class T>
Tensor3<T> permute_021(const Tensor3<T>& t) {
  Tensor3<T> o(t.r0, t.r1, t.d);
  for (Index a = 0; a < t.r0; ++a)
    for (Index s = 0; s < t.d; ++s)
      for (Index b = 0; b < t.r1; ++b) o(a, b, s) = t(a, s, b);
  return o;
}

// out(s,a,b) from in(a,s,b)
template <class T>
Tensor3<T> permute_102(const Tensor3<T>& t) {
  Tensor3<T> o(t.d, t.r0, t.r1);
  for (Index a = 0; a < t.r0; ++a)
    for (Index s = 0; s < t.d; ++s)
      for (Index b = 0; b < t.r1; ++b) o(s, a, b) = t(a, s, b);
  return o;
}

// out(x,s,b) = sum_a M(x,a) in(a,s,b)
template <class T>
Tensor3<T> mode0_mul(const Mat<T>& m, const Tensor3<T>& t) {
  if (m.cols() != t.r0) throw shape_error("mode0_mul: shape mismatch");
  Tensor3<T> o(m.rows(), t.d, t.r1);
  MapRM<T>(o.v.data(), o.r0, o.d * o.r1).noalias() = m * t.right_mat();
  return o;
}

// out(a,s,y) = sum_b in(a,s,b) M(b,y)
template <class T>
Tensor3<T> mode2_mul(const Tensor3<T>& t, const Mat<T>& m) {
  if (m.rows() != t.r1) throw shape_error("mode2_mul: shape mismatch");
  Tensor3<T> o(t.r0, t.d, m.cols());
  MapRM<T>(o.v.data(), o.r0 * o.d, o.r1).noalias() = t.left_mat() * m;
  return o;
}

template <class T>
bool all_finite(const std::vector<T>& v) {
  for (const T& x : v) {
    if constexpr (scalar_traits<T>::is_complex) {
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
    } else {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

}  // namespace qtt
