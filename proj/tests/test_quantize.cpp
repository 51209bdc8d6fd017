#include <doctest.h>

#include <random>

#include "qtt/quantize.hpp"

using namespace qtt;

TEST_CASE("flat_to_bits real space") {
  GridSpec spec;
  spec.L = 3;
  CHECK(flat_to_bits(0, spec) == std::vector<std::uint8_t>{0, 0, 0});
  // n = 4 -> x = 0.5 -> leading bit set
  CHECK(flat_to_bits(4, spec) == std::vector<std::uint8_t>{1, 0, 0});
  CHECK_THROWS_AS(flat_to_bits(8, spec), std::out_of_range);
  CHECK_THROWS_AS(flat_to_bits(-1, spec), std::out_of_range);
}

TEST_CASE("flat_to_bits fourier is little endian") {
  GridSpec spec;
  spec.L = 3;
  spec.basis = Basis::FourierModes;
  CHECK(flat_to_bits(4, spec) == std::vector<std::uint8_t>{0, 0, 1});
  CHECK(flat_to_bits(1, spec) == std::vector<std::uint8_t>{1, 0, 0});
}

TEST_CASE("bits_to_flat inverts flat_to_bits") {
  for (Basis b : {Basis::RealSpaceDelta, Basis::FourierModes}) {
    GridSpec spec;
    spec.L = 5;
    spec.basis = b;
    for (Index n = 0; n < spec.points_per_dim(); ++n)
      CHECK(bits_to_flat(flat_to_bits(n, spec), spec) == n);
  }
  GridSpec spec;
  spec.L = 2;
  CHECK(bits_to_flat({0, 0}, spec) == 0);
  CHECK(bits_to_flat({0, 1}, spec) == 1);  // x = 0.25
}

TEST_CASE("grid coordinates match the binary expansion") {
  GridSpec spec;
  spec.L = 6;
  spec.lo = {-1.0, 0.0};
  spec.hi = {3.0, 0.0};
  for (Index n = 0; n < spec.points_per_dim(); ++n) {
    const auto bits = flat_to_bits(n, spec);
    double x = 0.0;
    for (int k = 0; k < spec.L; ++k) x += std::ldexp(double(bits[size_t(k)]), -(k + 1));
    CHECK(spec.coord(0, n) == doctest::Approx(-1.0 + 4.0 * x).epsilon(1e-14));
  }
}

TEST_CASE("tensorize round trip") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int L : {1, 3, 7, 12}) {
    GridSpec spec;
    spec.L = L;
    std::vector<double> v(size_t(1) << L);
    for (auto& x : v) x = u(rng);
    CHECK(detensorize(tensorize(v, spec), spec) == v);
  }
}

TEST_CASE("tensorize basics") {
  GridSpec spec;
  spec.L = 1;
  std::vector<double> v{3.0, 7.0};
  CHECK(tensorize(v, spec) == v);

  spec.L = 2;
  std::vector<double> e0{1, 0, 0, 0};
  CHECK(tensorize(e0, spec) == e0);
  CHECK_THROWS_AS(tensorize(std::vector<double>{1, 2, 3}, spec), shape_error);
}

TEST_CASE("two dimensions, serial and interleaved orders") {
  GridSpec spec;
  spec.L = 2;
  spec.n_dims = 2;
  std::vector<double> v(16);
  for (size_t i = 0; i < 16; ++i) v[i] = double(i);

  spec.bit_order = BitOrder::Serial;
  auto ts = tensorize(v, spec);
  // serial: all x bits before all y bits, so the tensor index equals the flat
  // index (x slowest)
  CHECK(ts == v);
  CHECK(detensorize(ts, spec) == v);

  spec.bit_order = BitOrder::Interleaved;
  auto ti = tensorize(v, spec);
  CHECK(ti != v);
  CHECK(detensorize(ti, spec) == v);
  // spot check: n_x = 2 (bits 10), n_y = 1 (bits 01) -> interleaved 1001
  const Index flat = 2 * 4 + 1;
  CHECK(ti[size_t(0b1001)] == v[size_t(flat)]);
}

TEST_CASE("fourier mode frequencies") {
  GridSpec spec;
  spec.L = 3;
  spec.basis = Basis::FourierModes;
  spec.lo = {0.0, 0.0};
  spec.hi = {2.0, 0.0};
  CHECK(spec.signed_mode(0) == 0);
  CHECK(spec.signed_mode(3) == 3);
  CHECK(spec.signed_mode(4) == -4);
  CHECK(spec.signed_mode(7) == -1);
  CHECK(spec.mode_freq(0, 1) == doctest::Approx(pi));
}
