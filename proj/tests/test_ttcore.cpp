#include <doctest.h>

#include <complex>
#include <random>
#include <sstream>

#include "qtt/tt_build.hpp"
#include "qtt/tt_operator.hpp"
#include "qtt/tt_vector.hpp"

using namespace qtt;
using C = std::complex<double>;

namespace {

std::mt19937_64 rng(7);

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / (den > 0 ? den : 1.0));
}

}  // namespace

TEST_CASE("dense round trip") {
  auto tt = tt_random<double>(rng, 6, 4);
  auto dense = tt_to_dense(tt);
  auto back = tt_from_dense(dense, 6);
  CHECK(rel_err(tt_to_dense(back), dense) <= 1e-12);
}

TEST_CASE("sample matches dense everywhere") {
  auto tt = tt_random<double>(rng, 4, 3);
  auto dense = tt_to_dense(tt);
  for (Index n = 0; n < 16; ++n) {
    std::vector<std::uint8_t> bits(4);
    for (int k = 0; k < 4; ++k) bits[size_t(k)] = (n >> (3 - k)) & 1;
    CHECK(sample(tt, bits) == doctest::Approx(dense[size_t(n)]).epsilon(1e-12));
  }
}

TEST_CASE("dot and norm against dense") {
  auto x = tt_random<double>(rng, 6, 3);
  auto y = tt_random<double>(rng, 6, 4);
  auto dx = tt_to_dense(x), dy = tt_to_dense(y);
  double want = 0, nx = 0;
  for (size_t i = 0; i < dx.size(); ++i) {
    want += dx[i] * dy[i];
    nx += dx[i] * dx[i];
  }
  CHECK(dot(x, y) == doctest::Approx(want).epsilon(1e-10));
  CHECK(dot(x, x) == doctest::Approx(nx).epsilon(1e-10));
  CHECK(norm(x) == doctest::Approx(std::sqrt(nx)).epsilon(1e-10));
}

TEST_CASE("add and scale") {
  auto x = tt_random<double>(rng, 5, 3);
  auto z = add(x, scale(x, -1.0));
  CHECK(norm(z) <= 1e-12 * norm(x));

  auto y = tt_random<double>(rng, 5, 2);
  auto s = add(x, scale(y, 2.5));
  auto dx = tt_to_dense(x);
  auto dy = tt_to_dense(y);
  auto ds = tt_to_dense(s);
  for (size_t i = 0; i < ds.size(); ++i)
    CHECK(ds[i] == doctest::Approx(dx[i] + 2.5 * dy[i]).epsilon(1e-11));
}

TEST_CASE("orthonormal canonicalization preserves the tensor") {
  for (int center : {0, 3, 5}) {
    auto tt = tt_random<double>(rng, 6, 4);
    auto before = tt_to_dense(tt);
    canonicalize(tt, center, Form::Orthonormal);
    CHECK(tt.center == center);
    CHECK(rel_err(tt_to_dense(tt), before) <= 1e-10);
    auto rep = verify_canonical(tt);
    CHECK(rep.ortho_residual <= 1e-10);
    CHECK(rep.nested_ok);
    // idempotence
    auto again = tt;
    canonicalize(again, center, Form::Orthonormal);
    CHECK(rel_err(tt_to_dense(again), before) <= 1e-10);
  }
}

TEST_CASE("interpolative canonicalization preserves the tensor") {
  for (int center : {0, 2, 5}) {
    auto tt = tt_random<double>(rng, 6, 4);
    auto before = tt_to_dense(tt);
    canonicalize(tt, center, Form::Interpolative);
    CHECK(rel_err(tt_to_dense(tt), before) <= 1e-10);
    auto rep = verify_canonical(tt);
    CHECK(rep.interp_residual <= 1e-8);
    CHECK(rep.center_sample_residual <= 1e-8);
    CHECK(rep.nested_ok);
  }
}

TEST_CASE("rank-one product state canonicalizes exactly") {
  auto tt = tt_delta<double>({1, 0, 1, 1});
  auto before = tt_to_dense(tt);
  canonicalize(tt, 2, Form::Interpolative);
  CHECK(rel_err(tt_to_dense(tt), before) <= 1e-12);
  canonicalize(tt, 2, Form::Orthonormal);
  CHECK(rel_err(tt_to_dense(tt), before) <= 1e-12);
}

TEST_CASE("oblique caches invert the selected basis") {
  auto tt = tt_random<double>(rng, 5, 4);
  canonicalize(tt, 2, Form::Orthonormal, 0.0, 1, true);
  for (int b : {0, 1, 2}) {
    const auto& m = tt.lsel_mat[size_t(b)];
    REQUIRE(m.size() > 0);
    CHECK((m * tt.lsel_inv[size_t(b)] - Mat<double>::Identity(m.rows(), m.rows()))
              .cwiseAbs()
              .maxCoeff() <= 1e-10);
  }
  for (int b : {3, 4, 5}) {
    const auto& m = tt.rsel_mat[size_t(b)];
    REQUIRE(m.size() > 0);
    CHECK((m * tt.rsel_inv[size_t(b)] - Mat<double>::Identity(m.rows(), m.rows()))
              .cwiseAbs()
              .maxCoeff() <= 1e-10);
  }
}

TEST_CASE("nested index sets extend their parents") {
  auto tt = tt_random<double>(rng, 6, 5);
  canonicalize(tt, 3, Form::Interpolative);
  for (int b = 1; b <= 3; ++b) {
    auto lists = left_multi_indices(tt, b);
    auto parents = left_multi_indices(tt, b - 1);
    for (const auto& s : lists) {
      REQUIRE(Index(s.size()) == b);
      std::vector<std::uint8_t> pref(s.begin(), s.end() - 1);
      CHECK(std::find(parents.begin(), parents.end(), pref) != parents.end());
    }
  }
  for (int b = 5; b >= 4; --b) {
    auto lists = right_multi_indices(tt, b);
    auto parents = right_multi_indices(tt, b + 1);
    for (const auto& s : lists) {
      REQUIRE(Index(s.size()) == 6 - b);
      std::vector<std::uint8_t> suff(s.begin() + 1, s.end());
      CHECK(std::find(parents.begin(), parents.end(), suff) != parents.end());
    }
  }
}

TEST_CASE("truncate recovers a padded low-rank train") {
  // rank-2 tensor stored at rank 5
  auto low = tt_random<double>(rng, 6, 2);
  auto noise = scale(tt_random<double>(rng, 6, 3), 0.0);
  auto padded = add(low, noise);
  CHECK(padded.max_rank() == 5);
  auto want = tt_to_dense(low);
  truncate(padded, 1e-12);
  CHECK(padded.max_rank() == 2);
  CHECK(rel_err(tt_to_dense(padded), want) <= 1e-10);
}

TEST_CASE("truncate with eps zero is exact") {
  auto tt = tt_random<double>(rng, 7, 4);
  auto before = tt_to_dense(tt);
  truncate(tt, 0.0);
  CHECK(rel_err(tt_to_dense(tt), before) <= 1e-12);
}

TEST_CASE("truncate enforces the rank floor") {
  auto tt = tt_delta<double>({0, 1, 0, 1, 1});
  truncate(tt, 1e-12, rank_unbounded, 4);
  for (int b = 1; b < 5; ++b) {
    const Index attainable = std::min(Index(1) << b, Index(1) << (5 - b));
    CHECK(tt.rank(b) >= std::min<Index>(4, attainable));
  }
  // the represented vector is unchanged
  auto dense = tt_to_dense(tt);
  Index hits = 0;
  for (size_t i = 0; i < dense.size(); ++i)
    if (std::abs(dense[i] - 1.0) < 1e-10) ++hits;
  CHECK(hits == 1);
}

TEST_CASE("truncate error is monotone in eps") {
  auto tt = tt_random<double>(rng, 8, 8);
  auto want = tt_to_dense(tt);
  auto loose = tt, tight = tt;
  truncate(loose, 1e-4);
  truncate(tight, 1e-8);
  CHECK(rel_err(tt_to_dense(loose), want) >= rel_err(tt_to_dense(tight), want) - 1e-14);
  CHECK(rel_err(tt_to_dense(tight), want) <= 1e-8 * std::sqrt(7.0) + 1e-12);
}

TEST_CASE("cur-based truncation stays interpolative") {
  auto low = tt_random<double>(rng, 6, 3);
  auto padded = add(low, scale(tt_random<double>(rng, 6, 2), 0.0));
  auto want = tt_to_dense(low);
  truncate(padded, 1e-10, rank_unbounded, 1, true);
  CHECK(padded.form == Form::Interpolative);
  CHECK(padded.max_rank() == 3);
  CHECK(rel_err(tt_to_dense(padded), want) <= 1e-8);
}

TEST_CASE("apply identity operator") {
  auto x = tt_random<double>(rng, 5, 3);
  auto y = apply_op(identity_op<double>(5), x);
  CHECK(rel_err(tt_to_dense(y), tt_to_dense(x)) <= 1e-12);
}

TEST_CASE("apply matches dense matvec") {
  auto x = tt_random<double>(rng, 6, 3);
  // random rank-2 operator built from a dense matrix of a low-rank TT
  auto a = op_from_dense(op_to_dense(diag_op(tt_random<double>(rng, 6, 2))), 6, 1e-13);
  Mat<double> ad = op_to_dense(a);
  Vec<double> xd = Eigen::Map<const Vec<double>>(tt_to_dense(x).data(), 64);
  Vec<double> want = ad * xd;
  for (ApplyMethod m : {ApplyMethod::Exact, ApplyMethod::ZipUp}) {
    auto y = apply_op(a, x, 1e-12, rank_unbounded, m);
    auto yd = tt_to_dense(y);
    double err = 0;
    for (Index i = 0; i < 64; ++i) err += (yd[size_t(i)] - want(i)) * (yd[size_t(i)] - want(i));
    CHECK(std::sqrt(err) <= 1e-10 * want.norm());
  }
}

TEST_CASE("shift operator moves a delta") {
  auto x = tt_delta<double>(std::vector<std::uint8_t>{1, 1, 1});  // grid point 7
  auto y = apply_op(shift_op<double>(3, +1), x);
  auto yd = tt_to_dense(y);
  for (Index i = 0; i < 8; ++i) CHECK(yd[size_t(i)] == doctest::Approx(i == 0 ? 1.0 : 0.0));
  // and 0 -> 1
  auto e0 = tt_delta<double>(std::vector<std::uint8_t>{0, 0, 0});
  auto y1 = tt_to_dense(apply_op(shift_op<double>(3, +1), e0));
  CHECK(y1[1] == doctest::Approx(1.0));
}

TEST_CASE("operator compose and add") {
  auto sp = shift_op<double>(5, +1);
  auto sm = shift_op<double>(5, -1);
  auto id = op_compose(sp, sm, 1e-13);
  auto x = tt_random<double>(rng, 5, 3);
  CHECK(rel_err(tt_to_dense(apply_op(id, x)), tt_to_dense(x)) <= 1e-10);

  auto sum = op_add(sp, sm);
  Mat<double> want = op_to_dense(sp) + op_to_dense(sm);
  CHECK((op_to_dense(sum) - want).norm() <= 1e-12);
}

TEST_CASE("dump and parse round trip") {
  auto tt = tt_random<C>(rng, 4, 3);
  std::stringstream ss;
  dump(tt, ss);
  auto back = parse_tt<C>(ss);
  REQUIRE(back.length() == 4);
  for (int p = 0; p < 4; ++p) {
    const auto& a = tt.cores[size_t(p)];
    const auto& b = back.cores[size_t(p)];
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.v.size(); ++i) CHECK(std::abs(a.v[i] - b.v[i]) == 0.0);
  }
}

TEST_CASE("complex trains work end to end") {
  auto x = tt_random<C>(rng, 5, 3);
  auto before = tt_to_dense(x);
  canonicalize(x, 2, Form::Interpolative);
  auto rep = verify_canonical(x);
  CHECK(rep.interp_residual <= 1e-8);
  truncate(x, 1e-12);
  auto after = tt_to_dense(x);
  double err = 0, den = 0;
  for (size_t i = 0; i < after.size(); ++i) {
    err += std::norm(after[i] - before[i]);
    den += std::norm(before[i]);
  }
  CHECK(std::sqrt(err / den) <= 1e-10);
}
