#include <doctest.h>

#include <complex>
#include <random>

#include "qtt/matalg.hpp"

using namespace qtt;
using Md = Mat<double>;
using Vd = Vec<double>;

namespace {

std::mt19937_64 rng(42);

Md random_mat(Index m, Index n) {
  std::normal_distribution<double> g;
  Md a(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = g(rng);
  return a;
}

double cond_of(const Md& a) {
  Eigen::JacobiSVD<Md> svd(a);
  return svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
}

}  // namespace

TEST_CASE("svd_truncate identity keeps full rank") {
  auto f = svd_truncate<double>(Md::Identity(4, 4), 0.0);
  CHECK(f.rank == 4);
  for (Index i = 0; i < 4; ++i) CHECK(f.S(i) == doctest::Approx(1.0));
}

TEST_CASE("svd_truncate rank one outer product") {
  Vd u = random_mat(6, 1), v = random_mat(5, 1);
  auto f = svd_truncate<double>(u * v.transpose(), 1e-12);
  CHECK(f.rank == 1);
}

TEST_CASE("svd_truncate recovers constructed rank") {
  Md m = random_mat(8, 3) * random_mat(3, 8);
  auto f = svd_truncate(m, 1e-10);
  CHECK(f.rank == 3);
  Md rec = f.U * f.S.asDiagonal() * f.V.adjoint();
  CHECK((m - rec).norm() <= 1e-9 * m.norm());
}

TEST_CASE("svd_truncate clamps to the floor and the cap") {
  Md m = random_mat(8, 3) * random_mat(3, 8);
  CHECK(svd_truncate(m, 1e-10, rank_unbounded, 5).rank == 5);
  CHECK(svd_truncate(m, 0.0, 2).rank == 2);
  CHECK_THROWS_AS(svd_truncate(Md(Md::Constant(2, 2, std::nan(""))), 0.0), numeric_error);
}

TEST_CASE("qdeim unit basis") {
  Md u = Md::Identity(4, 2);
  auto idx = qdeim(u, 2);
  std::sort(idx.begin(), idx.end());
  CHECK(idx == std::vector<Index>{0, 1});
}

TEST_CASE("qdeim single column picks the largest entry") {
  Md u(4, 1);
  u << 0.1, -0.9, 0.3, 0.2;
  CHECK(qdeim(u, 1) == std::vector<Index>{1});
}

TEST_CASE("qdeim beats most random selections") {
  // oracle: brute-force comparison of submatrix conditioning
  auto svd = svd_truncate(random_mat(6, 3), 0.0, 3);
  auto idx = qdeim(svd.U, 3);
  Md sel(3, 3);
  for (Index i = 0; i < 3; ++i) sel.row(i) = svd.U.row(idx[size_t(i)]);
  const double cond_deim = cond_of(sel);
  int better = 0, total = 0;
  std::uniform_int_distribution<Index> pick(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    Index a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    Md s(3, 3);
    s.row(0) = svd.U.row(a);
    s.row(1) = svd.U.row(b);
    s.row(2) = svd.U.row(c);
    ++total;
    if (cond_deim <= cond_of(s) * (1 + 1e-12)) ++better;
  }
  CHECK(better >= int(0.9 * total));
}

TEST_CASE("qdeim degenerate basis") {
  Md u = Md::Zero(4, 2);
  u.col(0).setOnes();
  u.col(1).setOnes();
  CHECK_THROWS_AS(qdeim(u, 2), degenerate_selection);
}

TEST_CASE("maxvol identity") {
  auto r = maxvol<double>(Md::Identity(3, 3));
  std::sort(r.rows.begin(), r.rows.end());
  CHECK(r.rows == std::vector<Index>{0, 1, 2});
  CHECK(r.converged);
}

TEST_CASE("maxvol dominant row") {
  Md a(3, 1);
  a << 1, 2, 10;
  CHECK(maxvol(a).rows == std::vector<Index>{2});
}

TEST_CASE("maxvol postcondition") {
  const double delta = 0.01;
  Md a = random_mat(16, 3);
  auto r = maxvol(a, delta);
  REQUIRE(r.converged);
  Md sub(3, 3);
  for (Index i = 0; i < 3; ++i) sub.row(i) = a.row(r.rows[size_t(i)]);
  Md b = a * sub.inverse();
  CHECK(b.cwiseAbs().maxCoeff() <= 1.0 + delta + 1e-12);
}

TEST_CASE("cur identity") {
  auto f = cur<double>(Md::Identity(4, 4), 1e-12);
  CHECK(f.rank == 4);
  CHECK(!f.oversampled);
  std::vector<Index> ri = f.row_idx, ci = f.col_idx;
  std::sort(ri.begin(), ri.end());
  std::sort(ci.begin(), ci.end());
  CHECK(ri == std::vector<Index>{0, 1, 2, 3});
  CHECK(ci == std::vector<Index>{0, 1, 2, 3});
}

TEST_CASE("cur reconstructs a low-rank matrix") {
  Md m = random_mat(8, 2) * random_mat(2, 8);
  auto f = cur(m, 1e-10);
  CHECK(Index(f.row_idx.size()) == 2);
  CHECK((f.interp * f.rows - m).norm() <= 1e-8 * m.norm());
  // canonical condition: interp restricted to the selected rows is identity
  Md sel(2, 2);
  for (Index i = 0; i < 2; ++i) sel.row(i) = f.interp.row(f.row_idx[size_t(i)]);
  CHECK((sel - Md::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("cur zero matrix clamps to the floor") {
  auto f = cur<double>(Md::Zero(6, 6), 1e-10, rank_unbounded, 3);
  CHECK(f.rank == 3);
  CHECK(Index(f.row_idx.size()) == 3);
  CHECK((f.interp * f.rows).norm() == 0.0);
}

TEST_CASE("cur rank floor pads with extra rows") {
  Md m = random_mat(10, 2) * random_mat(2, 10);
  auto f = cur(m, 1e-10, rank_unbounded, 5);
  CHECK(Index(f.row_idx.size()) == 5);
  CHECK((f.interp * f.rows - m).norm() <= 1e-8 * m.norm());
}

TEST_CASE("cur oversampled rows keep the relaxed condition") {
  Md m = random_mat(12, 3) * random_mat(3, 12);
  std::vector<Index> extra{0, 1, 2};
  auto f = cur(m, 1e-10, rank_unbounded, 1, &extra);
  CHECK(f.oversampled);
  CHECK(Index(f.row_idx.size()) > 3);
  Md sel(Index(f.row_idx.size()), f.interp.cols());
  for (Index i = 0; i < sel.rows(); ++i) sel.row(i) = f.interp.row(f.row_idx[size_t(i)]);
  CHECK((sel * f.rows - f.rows).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("cgs identity converges immediately") {
  Vd b = random_mat(5, 1);
  auto r = cgs_solve<double>([](const Vd& x) { return x; }, b, 1e-12, 10);
  CHECK(r.converged);
  CHECK(r.iterations <= 1);
  CHECK((r.x - b).norm() <= 1e-12 * b.norm());
}

TEST_CASE("cgs diagonal system") {
  Vd b = random_mat(8, 1);
  auto apply = [](const Vd& x) {
    Vd y = x;
    for (Index i = 0; i < 8; ++i) y(i) *= double(i + 1);
    return y;
  };
  auto r = cgs_solve<double>(apply, b, 1e-10, 100);
  REQUIRE(r.converged);
  for (Index i = 0; i < 8; ++i) CHECK(r.x(i) == doctest::Approx(b(i) / double(i + 1)).epsilon(1e-9));
}

TEST_CASE("cgs zero right-hand side") {
  auto r = cgs_solve<double>([](const Vd& x) { return x; }, Vd::Zero(4), 1e-10, 10);
  CHECK(r.converged);
  CHECK(r.x.norm() == 0.0);
}

TEST_CASE("cgs solves random spd systems") {
  for (int trial = 0; trial < 5; ++trial) {
    Md a = random_mat(32, 32);
    Md spd = a * a.transpose() + 32.0 * Md::Identity(32, 32);
    Vd b = random_mat(32, 1);
    auto r = cgs_solve<double>([&](const Vd& x) { return Vd(spd * x); }, b, 1e-10, 200);
    REQUIRE(r.converged);
    CHECK(r.iterations <= 200);
    CHECK((spd * r.x - b).norm() <= 1e-9 * b.norm());
  }
}

TEST_CASE("cgs complex system") {
  using C = std::complex<double>;
  Mat<C> a = Mat<C>::Identity(6, 6);
  for (Index i = 0; i < 6; ++i) a(i, i) = C(1.0, 0.2 * double(i));
  Vec<C> b = Vec<C>::Ones(6);
  auto r = cgs_solve<C>([&](const Vec<C>& x) { return Vec<C>(a * x); }, b, 1e-12, 100);
  REQUIRE(r.converged);
  CHECK((a * r.x - b).norm() <= 1e-10);
}
