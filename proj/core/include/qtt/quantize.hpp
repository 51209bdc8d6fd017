#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "qtt/common.hpp"

namespace qtt {

enum class Basis { RealSpaceDelta, FourierModes };
enum class BitOrder { Serial, Interleaved };

// Uniform 2^L grid per physical dimension, quantized into L bits per dimension.
//
// Bit conventions: in real space sigma_1 is the most significant bit of the
// grid index (x = sum_k 2^{-k} sigma_k), in Fourier space sigma_1 is the least
// significant bit (n = sum_k 2^{k-1} sigma_k).  Fourier modes are stored in
// FFT-standard order (0, 1, ..., N/2-1, -N/2, ..., -1) before bit mapping.
struct GridSpec {
  int L = 1;
  int n_dims = 1;
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};
  Basis basis = Basis::RealSpaceDelta;
  BitOrder bit_order = BitOrder::Serial;

  Index points_per_dim() const { return Index(1) << L; }
  int sites() const { return L * n_dims; }
  Index total_points() const {
    Index n = 1;
    for (int k = 0; k < n_dims; ++k) n *= points_per_dim();
    return n;
  }
  double spacing(int dim = 0) const {
    return (hi[static_cast<size_t>(dim)] - lo[static_cast<size_t>(dim)]) / double(points_per_dim());
  }
  double coord(int dim, Index n) const {
    return lo[static_cast<size_t>(dim)] + double(n) * spacing(dim);
  }
  // signed mode number in FFT-standard order
  Index signed_mode(Index n) const {
    const Index N = points_per_dim();
    return n < N / 2 ? n : n - N;
  }
  // angular frequency of mode n: k = 2 pi m / (hi - lo)
  double mode_freq(int dim, Index n) const {
    return 2.0 * pi * double(signed_mode(n)) / (hi[static_cast<size_t>(dim)] - lo[static_cast<size_t>(dim)]);
  }
  // site index of bit k (0-based, k < L) of dimension `dim`
  int site_of(int dim, int k) const {
    return bit_order == BitOrder::Serial ? dim * L + k : k * n_dims + dim;
  }
};

// bits (sigma_1..sigma_L) of a single-dimension flat index
std::vector<std::uint8_t> flat_to_bits(Index n, const GridSpec& spec);
Index bits_to_flat(const std::vector<std::uint8_t>& bits, const GridSpec& spec);

// site-ordered multi-index (length spec.sites()) of a multi-dimension flat
// index; flat = n_1 * 2^L + n_2 for two dimensions (dimension 1 slowest)
std::vector<std::uint8_t> flat_to_sites(Index flat, const GridSpec& spec);
Index sites_to_flat(const std::vector<std::uint8_t>& sites, const GridSpec& spec);

// Reorder a flat vector of length 2^(L*n_dims) into the site-ordered quantized
// tensor (site 0 slowest), and back.
template <class T>
std::vector<T> tensorize(const std::vector<T>& v, const GridSpec& spec) {
  if (Index(v.size()) != spec.total_points())
    throw shape_error("tensorize: input length does not match grid");
  std::vector<T> out(v.size());
  const Index n = spec.total_points();
  for (Index flat = 0; flat < n; ++flat) {
    const auto sites = flat_to_sites(flat, spec);
    Index ti = 0;
    for (int p = 0; p < spec.sites(); ++p) ti = 2 * ti + sites[static_cast<size_t>(p)];
    out[static_cast<size_t>(ti)] = v[static_cast<size_t>(flat)];
  }
  return out;
}

template <class T>
std::vector<T> detensorize(const std::vector<T>& t, const GridSpec& spec) {
  if (Index(t.size()) != spec.total_points())
    throw shape_error("detensorize: input length does not match grid");
  std::vector<T> out(t.size());
  const Index n = spec.total_points();
  for (Index flat = 0; flat < n; ++flat) {
    const auto sites = flat_to_sites(flat, spec);
    Index ti = 0;
    for (int p = 0; p < spec.sites(); ++p) ti = 2 * ti + sites[static_cast<size_t>(p)];
    out[static_cast<size_t>(flat)] = t[static_cast<size_t>(ti)];
  }
  return out;
}

}  // namespace qtt
