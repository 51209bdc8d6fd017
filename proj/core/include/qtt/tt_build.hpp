#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <map>

#include "qtt/quantize.hpp"
#include "qtt/tt_operator.hpp"

namespace qtt {

// Cyclic shift by one grid point on a 2^L real-space grid (sigma_1 most
// significant).  direction = +1 maps u_j -> u_{j+1}; the carry automaton keeps
// every bond at rank two.
template <class T>
TtOperator<T> shift_op(int L, int direction) {
  if (L < 1) throw std::invalid_argument("shift_op: L >= 1 required");
  if (direction != 1 && direction != -1) throw std::invalid_argument("shift_op: direction is +-1");
  // S^+ : A(j, k) = [k == j + 1 mod 2^L].  Site L-1 holds the least
  // significant bit, so the increment enters there and the carry propagates
  // leftwards; the right bond of site p carries the carry into site p, the
  // final carry out of site 0 is discarded (periodic wrap).
  std::vector<Tensor4<T>> cs;
  for (int p = 0; p < L; ++p) {
    const Index bl = p == 0 ? 1 : 2;
    const Index br = p == L - 1 ? 1 : 2;
    Tensor4<T> c(bl, 2, 2, br);
    for (Index cin = 0; cin < 2; ++cin) {
      if (p == L - 1 && cin != 1) continue;  // the +1 itself
      for (Index j = 0; j < 2; ++j) {
        const Index s = j + cin;
        const Index k = s % 2, cout = s / 2;
        c(p == 0 ? 0 : cout, k, j, p == L - 1 ? 0 : cin) += T(1);
      }
    }
    cs.push_back(std::move(c));
  }
  TtOperator<T> plus(std::move(cs));
  if (direction == 1) return plus;
  // S^- is the transpose of S^+
  for (auto& c : plus.cores) {
    Tensor4<T> t(c.b0, c.din, c.dout, c.b1);
    for (Index i = 0; i < c.b0; ++i)
      for (Index so = 0; so < c.dout; ++so)
        for (Index si = 0; si < c.din; ++si)
          for (Index j = 0; j < c.b1; ++j) t(i, si, so, j) = c(i, so, si, j);
    c = std::move(t);
  }
  return plus;
}

struct StencilSpec {
  std::map<int, double> coeffs;  // offset -> coefficient, offsets in [-2, 2]
  double scale = 1.0;
  enum class Boundary { Periodic } boundary = Boundary::Periodic;
};

// finite-difference stencil as a sum of shift powers
template <class T>
TtOperator<T> fd_op(const StencilSpec& spec, int L, double eps = 1e-13) {
  if (!std::isfinite(spec.scale)) throw numeric_error("fd_op: non-finite scale");
  TtOperator<T> acc;
  bool first = true;
  for (const auto& [off, coeff] : spec.coeffs) {
    if (off < -2 || off > 2) throw std::invalid_argument("fd_op: offset outside [-2, 2]");
    if (coeff == 0.0) continue;
    TtOperator<T> term;
    if (off == 0) {
      term = identity_op<T>(L);
    } else {
      term = shift_op<T>(L, off > 0 ? 1 : -1);
      for (int k = 1; k < std::abs(off); ++k)
        term = op_compose(term, shift_op<T>(L, off > 0 ? 1 : -1), eps);
    }
    term = op_scale(term, T(coeff * spec.scale));
    acc = first ? term : op_add(acc, term);
    first = false;
  }
  if (first) {  // zero stencil
    acc = op_scale(identity_op<T>(L), T(0));
  }
  op_truncate(acc, eps);
  return acc;
}

// diagonal operator diag(v) with the ranks of v
template <class T>
TtOperator<T> diag_op(const TtVector<T>& v) {
  std::vector<Tensor4<T>> cs;
  for (const auto& c : v.cores) {
    Tensor4<T> o(c.r0, c.d, c.d, c.r1);
    for (Index a = 0; a < c.r0; ++a)
      for (Index s = 0; s < c.d; ++s)
        for (Index b = 0; b < c.r1; ++b) o(a, s, s, b) = c(a, s, b);
    cs.push_back(std::move(o));
  }
  return TtOperator<T>(std::move(cs));
}

// Mode-index addition tensor of the circular convolution, (x*y)_k =
// sum_{i+j=k mod 2^L} x_i y_j, as a rank-two carry automaton.  Output bit per
// site is k_p, input is the fused pair (i_p, j_p) with i the slower index.
// Sites are in Fourier bit order (site 0 least significant).
template <class T>
TtOperator<T> conv_tensor_qtt(int L) {
  std::vector<Tensor4<T>> cs;
  for (int p = 0; p < L; ++p) {
    const Index bl = p == 0 ? 1 : 2;
    const Index br = p == L - 1 ? 1 : 2;
    Tensor4<T> c(bl, 2, 4, br);
    for (Index cin = 0; cin < bl; ++cin)
      for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j) {
          const Index s = i + j + (p == 0 ? 0 : cin);
          const Index k = s % 2, cout = s / 2;
          if (p == L - 1)
            c(cin, k, i * 2 + j, 0) += T(1);  // final carry wraps (mod 2^L)
          else
            c(cin, k, i * 2 + j, cout) += T(1);
        }
    cs.push_back(std::move(c));
  }
  return TtOperator<T>(std::move(cs));
}

namespace detail {

// radix-2 decimation-in-time FFT, in place, FFT-standard mode order
inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft_pow2: length not a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * pi / double(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k], v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= double(n);
}

}  // namespace detail

// mode coefficients (FFT(f)/N convention) of samples on the grid of `spec`
inline std::vector<std::complex<double>> mode_coefficients(
    const std::function<double(double)>& f, const GridSpec& spec, int dim = 0) {
  const Index n = spec.points_per_dim();
  std::vector<std::complex<double>> a(static_cast<size_t>(n));
  for (Index j = 0; j < n; ++j) a[static_cast<size_t>(j)] = f(spec.coord(dim, j));
  detail::fft_pow2(a, false);
  for (auto& x : a) x /= double(n);
  return a;
}

// QTT of a length-2^L mode-coefficient vector (little-endian bit order)
inline TtVector<std::complex<double>> tt_from_modes(const std::vector<std::complex<double>>& modes,
                                                    const GridSpec& spec, double eps = 1e-14) {
  GridSpec s1 = spec;
  s1.n_dims = 1;
  auto t = tensorize(modes, s1);
  return tt_from_dense(t, spec.L, eps);
}

// Circular convolution by a fixed mode vector g: (A f)_k = sum_j g_{k-j} f_j.
// Contracts the addition tensor with the QTT of g site by site, then
// canonicalises and truncates sweeping right to left.
inline TtOperator<std::complex<double>> conv_with_vector_op(
    const TtVector<std::complex<double>>& g, int L, double eps = 1e-12) {
  using C = std::complex<double>;
  if (g.length() != L) throw shape_error("conv_with_vector_op: length mismatch");
  auto conv = conv_tensor_qtt<C>(L);
  std::vector<Tensor4<C>> cs;
  for (int p = 0; p < L; ++p) {
    const auto& ct = conv.cores[static_cast<size_t>(p)];
    const auto& gc = g.cores[static_cast<size_t>(p)];
    Tensor4<C> z(ct.b0 * gc.r0, 2, 2, ct.b1 * gc.r1);
    for (Index cin = 0; cin < ct.b0; ++cin)
      for (Index k = 0; k < 2; ++k)
        for (Index i = 0; i < 2; ++i)
          for (Index j = 0; j < 2; ++j)
            for (Index cout = 0; cout < ct.b1; ++cout) {
              const C w = ct(cin, k, i * 2 + j, cout);
              if (w == C(0)) continue;
              for (Index a = 0; a < gc.r0; ++a)
                for (Index b = 0; b < gc.r1; ++b)
                  z(cin * gc.r0 + a, k, j, cout * gc.r1 + b) += w * gc(a, i, b);
            }
    cs.push_back(std::move(z));
  }
  TtOperator<C> out(std::move(cs));
  op_truncate(out, eps);
  return out;
}

// Multiplication operator for the m-th power of the coordinate, acting on
// mode coefficients: conv with the transform of x^m sampled on the real-space
// grid underlying `spec`.
inline TtOperator<std::complex<double>> moment_op(int m, const GridSpec& spec, int dim = 0,
                                                  double eps = 1e-12) {
  if (m < 1 || m > 2) throw std::invalid_argument("moment_op: m in {1, 2}");
  if (spec.basis != Basis::FourierModes) throw std::invalid_argument("moment_op: Fourier spec required");
  auto ghat = mode_coefficients([m](double x) { return m == 1 ? x : x * x; }, spec, dim);
  auto gtt = tt_from_modes(ghat, spec, 1e-14);
  return conv_with_vector_op(gtt, spec.L, eps);
}

// diag(i k) spectral derivative on one dimension's mode grid, with the
// Nyquist mode zeroed so the operator stays skew-Hermitian
inline TtOperator<std::complex<double>> fourier_deriv_op(const GridSpec& spec, int dim = 0,
                                                         double eps = 1e-14) {
  using C = std::complex<double>;
  if (spec.basis != Basis::FourierModes) throw std::invalid_argument("fourier_deriv_op: Fourier spec required");
  const Index n = spec.points_per_dim();
  std::vector<C> ik(static_cast<size_t>(n));
  for (Index j = 0; j < n; ++j) {
    const bool nyquist = j == n / 2;
    ik[static_cast<size_t>(j)] = nyquist ? C(0) : C(0.0, spec.mode_freq(dim, j));
  }
  auto v = tt_from_modes(ik, spec, eps);
  return diag_op(v);
}

// Lift a one-dimensional operator onto one dimension of a multi-dimensional
// grid (identity on the other dimensions).
template <class T>
TtOperator<T> op_on_dim(const TtOperator<T>& op1d, int dim, const GridSpec& spec) {
  if (op1d.length() != spec.L) throw shape_error("op_on_dim: operator length != L");
  std::vector<Tensor4<T>> cs;
  int next_bit = 0;
  Index bond = 1;
  for (int p = 0; p < spec.sites(); ++p) {
    bool is_dim = false;
    for (int k = 0; k < spec.L; ++k)
      if (spec.site_of(dim, k) == p && k == next_bit) is_dim = true;
    if (is_dim) {
      cs.push_back(op1d.cores[static_cast<size_t>(next_bit)]);
      bond = cs.back().b1;
      ++next_bit;
    } else {
      Tensor4<T> id(bond, 2, 2, bond);
      for (Index b = 0; b < bond; ++b)
        for (Index s = 0; s < 2; ++s) id(b, s, s, b) = T(1);
      cs.push_back(std::move(id));
    }
  }
  return TtOperator<T>(std::move(cs));
}

}  // namespace qtt
