#include <doctest.h>

#include <complex>
#include <random>

#include "qtt/quantize.hpp"
#include "qtt/tt_build.hpp"

using namespace qtt;
using C = std::complex<double>;

namespace {

std::mt19937_64 rng(11);

// dense cyclic shift on 2^L points, tensor (real-space bit) ordering
Mat<double> dense_shift(int L, int dir) {
  const Index n = Index(1) << L;
  Mat<double> s = Mat<double>::Zero(n, n);
  for (Index j = 0; j < n; ++j) s(j, (j + dir + n) % n) = 1.0;
  return s;
}

}  // namespace

TEST_CASE("shift operator dense form") {
  for (int L : {1, 2, 3, 5}) {
    for (int dir : {+1, -1}) {
      auto s = shift_op<double>(L, dir);
      CHECK((op_to_dense(s) - dense_shift(L, dir)).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("shift pair composes to the identity") {
  auto id = op_compose(shift_op<double>(5, +1), shift_op<double>(5, -1), 1e-13);
  auto x = tt_random<double>(rng, 5, 3);
  auto y = apply_op(id, x);
  auto dx = tt_to_dense(x), dy = tt_to_dense(y);
  for (size_t i = 0; i < dx.size(); ++i) CHECK(dy[i] == doctest::Approx(dx[i]).epsilon(1e-12));
}

TEST_CASE("shift ranks stay at two") {
  for (int L : {4, 8, 12}) {
    auto s = shift_op<double>(L, +1);
    CHECK(s.max_rank() <= 2);
  }
}

TEST_CASE("centered first derivative converges at second order") {
  // oracle: analytic derivative of sin(2 pi x)
  double err_prev = 0;
  for (int L : {6, 7}) {
    GridSpec spec;
    spec.L = L;
    StencilSpec st;
    st.coeffs = {{-1, -0.5}, {1, 0.5}};
    st.scale = 1.0 / spec.spacing(0);
    auto d = fd_op<double>(st, L);
    const Index n = spec.points_per_dim();
    std::vector<double> f(static_cast<size_t>(n));
    for (Index j = 0; j < n; ++j) f[size_t(j)] = std::sin(2 * pi * spec.coord(0, j));
    auto ftt = tt_from_dense(tensorize(f, spec), L, 1e-14);
    auto g = detensorize(tt_to_dense(apply_op(d, ftt, 1e-13)), spec);
    double err = 0;
    for (Index j = 0; j < n; ++j)
      err = std::max(err, std::abs(g[size_t(j)] - 2 * pi * std::cos(2 * pi * spec.coord(0, j))));
    if (L == 6) {
      err_prev = err;
    } else {
      CHECK(err <= err_prev / 3.5);  // one refinement, second order
    }
    CHECK(err <= 0.5);
  }
}

TEST_CASE("zero stencil builds the zero operator") {
  StencilSpec st;
  st.coeffs = {{0, 0.0}};
  auto z = fd_op<double>(st, 4);
  CHECK(op_to_dense(z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("second difference has rank three") {
  StencilSpec st;
  st.coeffs = {{-1, 1.0}, {0, -2.0}, {1, 1.0}};
  auto d = fd_op<double>(st, 10, 1e-12);
  CHECK(d.max_rank() <= 3);
  // dense check at moderate size
  auto d6 = fd_op<double>(st, 6, 1e-13);
  Mat<double> want =
      dense_shift(6, +1) - 2.0 * Mat<double>::Identity(64, 64) + dense_shift(6, -1);
  CHECK((op_to_dense(d6) - want).cwiseAbs().maxCoeff() <= 1e-11);
}

TEST_CASE("diag operator") {
  auto ones = tt_ones<double>(4);
  CHECK((op_to_dense(diag_op(ones)) - Mat<double>::Identity(16, 16)).cwiseAbs().maxCoeff() <= 1e-14);

  auto v = tt_random<double>(rng, 5, 3);
  auto w = tt_random<double>(rng, 5, 2);
  auto had = tt_to_dense(apply_op(diag_op(v), w));
  auto dv = tt_to_dense(v);
  auto dw = tt_to_dense(w);
  for (size_t i = 0; i < had.size(); ++i)
    CHECK(had[i] == doctest::Approx(dv[i] * dw[i]).epsilon(1e-10));
  for (int b = 1; b < 5; ++b) CHECK(diag_op(v).rank(b) == v.rank(b));
}

TEST_CASE("convolution tensor has rank two") {
  for (int L : {4, 8, 10}) {
    auto c = conv_tensor_qtt<C>(L);
    CHECK(c.max_rank() <= 2);
    op_truncate(c, 1e-14);
    CHECK(c.max_rank() == 2);
  }
}

TEST_CASE("conv operator equals dense circular convolution") {
  const int L = 4;
  GridSpec spec;
  spec.L = L;
  spec.basis = Basis::FourierModes;
  const Index n = spec.points_per_dim();
  std::vector<C> g(static_cast<size_t>(n));
  std::normal_distribution<double> gg;
  for (auto& x : g) x = C(gg(rng), gg(rng));
  auto gtt = tt_from_modes(g, spec, 1e-14);
  auto conv = conv_with_vector_op(gtt, L, 1e-13);

  std::vector<C> f(static_cast<size_t>(n));
  for (auto& x : f) x = C(gg(rng), gg(rng));
  auto ftt = tt_from_modes(f, spec, 1e-14);
  auto out = detensorize(tt_to_dense(apply_op(conv, ftt, 1e-13)), spec);
  for (Index k = 0; k < n; ++k) {
    C want(0);
    for (Index j = 0; j < n; ++j) want += g[size_t((k - j + n) % n)] * f[size_t(j)];
    CHECK(std::abs(out[size_t(k)] - want) <= 1e-10 * std::abs(want) + 1e-10);
  }
}

TEST_CASE("conv with a delta transform is the identity") {
  const int L = 4;
  GridSpec spec;
  spec.L = L;
  spec.basis = Basis::FourierModes;
  const Index n = spec.points_per_dim();
  // transform of a grid delta at x_0: all modes equal 1/N
  std::vector<C> g(size_t(n), C(1.0 / double(n), 0.0));
  auto conv = conv_with_vector_op(tt_from_modes(g, spec, 1e-14), L, 1e-13);
  // scaled by N: convolving with N * ghat is the identity
  auto x = tt_random<C>(rng, L, 3);
  auto y = apply_op(op_scale(conv, C(double(n))), x, 1e-13);
  auto dx = tt_to_dense(x), dy = tt_to_dense(y);
  for (size_t i = 0; i < dx.size(); ++i) CHECK(std::abs(dy[i] - dx[i]) <= 1e-10);
}

TEST_CASE("moment operator ranks plateau") {
  GridSpec spec;
  spec.L = 10;
  spec.basis = Basis::FourierModes;
  spec.lo = {-12.0, 0.0};
  spec.hi = {12.0, 0.0};
  for (int m : {1, 2}) {
    auto op = moment_op(m, spec, 0, 1e-10);
    CHECK(op.max_rank() <= 24);
  }
}

TEST_CASE("first moment of a symmetric gaussian vanishes") {
  GridSpec spec;
  spec.L = 7;
  spec.basis = Basis::FourierModes;
  spec.lo = {-12.0, 0.0};
  spec.hi = {12.0, 0.0};
  auto fhat = mode_coefficients([](double x) { return std::exp(-x * x / 2); }, spec);
  auto ftt = tt_from_modes(fhat, spec, 1e-14);
  auto xf = apply_op(moment_op(1, spec, 0, 1e-12), ftt, 1e-13);
  // mode zero of the transform of x f(x) is the mean of x f(x); the first
  // moment is that times the domain length
  std::vector<std::uint8_t> zero(7, 0);
  CHECK(std::abs(sample(xf, zero)) <= 1e-8);
}

TEST_CASE("second moment of a centered gaussian") {
  GridSpec spec;
  spec.L = 7;
  spec.basis = Basis::FourierModes;
  spec.lo = {-12.0, 0.0};
  spec.hi = {12.0, 0.0};
  const double vth = 1.0;
  auto fhat = mode_coefficients([&](double x) { return std::exp(-x * x / (2 * vth * vth)); }, spec);
  auto ftt = tt_from_modes(fhat, spec, 1e-14);
  auto x2f = apply_op(moment_op(2, spec, 0, 1e-12), ftt, 1e-13);
  std::vector<std::uint8_t> zero(7, 0);
  const double second = std::real(sample(x2f, zero)) * 24.0;   // integral of x^2 f
  const double mass = std::real(sample(ftt, zero)) * 24.0;     // integral of f
  // quadrature oracle
  double second_q = 0, mass_q = 0;
  for (Index j = 0; j < spec.points_per_dim(); ++j) {
    const double x = spec.coord(0, j);
    const double f = std::exp(-x * x / (2 * vth * vth));
    second_q += x * x * f * spec.spacing(0);
    mass_q += f * spec.spacing(0);
  }
  CHECK(second / mass == doctest::Approx(second_q / mass_q).epsilon(1e-8));
  CHECK(second / mass == doctest::Approx(vth * vth).epsilon(0.02));
}

TEST_CASE("spectral derivative matches ik multiplication") {
  GridSpec spec;
  spec.L = 5;
  spec.basis = Basis::FourierModes;
  spec.lo = {-12.0, 0.0};
  spec.hi = {12.0, 0.0};
  auto d = fourier_deriv_op(spec);
  CHECK(d.max_rank() <= 8);
  const Index n = spec.points_per_dim();
  std::vector<C> f(static_cast<size_t>(n));
  std::normal_distribution<double> gg;
  for (auto& x : f) x = C(gg(rng), gg(rng));
  auto out = detensorize(tt_to_dense(apply_op(d, tt_from_modes(f, spec, 1e-14), 1e-13)), spec);
  for (Index j = 0; j < n; ++j) {
    const C want = (j == n / 2 ? C(0) : C(0, spec.mode_freq(0, j))) * f[size_t(j)];
    CHECK(std::abs(out[size_t(j)] - want) <= 1e-10);
  }
}

TEST_CASE("lifting a 1-d operator to two dimensions") {
  GridSpec spec;
  spec.L = 3;
  spec.n_dims = 2;
  auto s1 = shift_op<double>(3, +1);
  auto sx = op_on_dim(s1, 0, spec);
  auto sy = op_on_dim(s1, 1, spec);
  Mat<double> s = dense_shift(3, +1), id = Mat<double>::Identity(8, 8);
  Mat<double> wx = Mat<double>::Zero(64, 64), wy = wx;
  // serial ordering: dimension 0 is the slow block
  for (Index a = 0; a < 8; ++a)
    for (Index b = 0; b < 8; ++b)
      for (Index c = 0; c < 8; ++c)
        for (Index d = 0; d < 8; ++d) {
          wx(a * 8 + c, b * 8 + d) = s(a, b) * id(c, d);
          wy(a * 8 + c, b * 8 + d) = id(a, b) * s(c, d);
        }
  CHECK((op_to_dense(sx) - wx).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((op_to_dense(sy) - wy).cwiseAbs().maxCoeff() <= 1e-13);
}
