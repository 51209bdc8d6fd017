#include "qtt/quantize.hpp"

namespace qtt {

std::vector<std::uint8_t> flat_to_bits(Index n, const GridSpec& spec) {
  const Index N = spec.points_per_dim();
  if (n < 0 || n >= N) throw std::out_of_range("flat_to_bits: index outside [0, 2^L)");
  std::vector<std::uint8_t> bits(static_cast<size_t>(spec.L), 0);
  for (int k = 0; k < spec.L; ++k) {
    const int shift = spec.basis == Basis::RealSpaceDelta ? spec.L - 1 - k : k;
    bits[static_cast<size_t>(k)] = static_cast<std::uint8_t>((n >> shift) & 1);
  }
  return bits;
}

Index bits_to_flat(const std::vector<std::uint8_t>& bits, const GridSpec& spec) {
  if (Index(bits.size()) != spec.L) throw shape_error("bits_to_flat: wrong bit count");
  Index n = 0;
  for (int k = 0; k < spec.L; ++k) {
    const std::uint8_t b = bits[static_cast<size_t>(k)];
    if (b > 1) throw std::out_of_range("bits_to_flat: bit outside {0,1}");
    const int shift = spec.basis == Basis::RealSpaceDelta ? spec.L - 1 - k : k;
    n |= Index(b) << shift;
  }
  return n;
}

std::vector<std::uint8_t> flat_to_sites(Index flat, const GridSpec& spec) {
  if (flat < 0 || flat >= spec.total_points())
    throw std::out_of_range("flat_to_sites: index outside grid");
  std::vector<std::uint8_t> sites(static_cast<size_t>(spec.sites()), 0);
  const Index N = spec.points_per_dim();
  for (int dim = spec.n_dims - 1; dim >= 0; --dim) {
    const Index n = flat % N;
    flat /= N;
    const auto bits = flat_to_bits(n, spec);
    for (int k = 0; k < spec.L; ++k)
      sites[static_cast<size_t>(spec.site_of(dim, k))] = bits[static_cast<size_t>(k)];
  }
  return sites;
}

Index sites_to_flat(const std::vector<std::uint8_t>& sites, const GridSpec& spec) {
  if (Index(sites.size()) != spec.sites()) throw shape_error("sites_to_flat: wrong site count");
  Index flat = 0;
  const Index N = spec.points_per_dim();
  for (int dim = 0; dim < spec.n_dims; ++dim) {
    std::vector<std::uint8_t> bits(static_cast<size_t>(spec.L));
    for (int k = 0; k < spec.L; ++k)
      bits[static_cast<size_t>(k)] = sites[static_cast<size_t>(spec.site_of(dim, k))];
    flat = flat * N + bits_to_flat(bits, spec);
  }
  return flat;
}

}  // namespace qtt
