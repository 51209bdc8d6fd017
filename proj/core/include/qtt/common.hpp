#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace qtt {

using Index = std::ptrdiff_t;

inline constexpr double pi = 3.14159265358979323846;

// shape or dimension mismatch between operands
struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// non-finite data or a numerically impossible request
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// index selection failed on a rank-deficient basis
struct degenerate_selection : numeric_error {
  using numeric_error::numeric_error;
};

// object is not in the canonical form an operation requires
struct state_error : std::logic_error {
  using std::logic_error::logic_error;
};

// a time step or linear solve produced non-finite values / did not converge
struct solver_divergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// bad run configuration (harness)
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
struct scalar_traits {
  using real_type = T;
  static constexpr bool is_complex = false;
  static T conj(T x) { return x; }
  static real_type abs2(T x) { return x * x; }
};

template <class R>
struct scalar_traits<std::complex<R>> {
  using real_type = R;
  static constexpr bool is_complex = true;
  static std::complex<R> conj(std::complex<R> x) { return std::conj(x); }
  static R abs2(std::complex<R> x) { return std::norm(x); }
};

template <class T>
using real_t = typename scalar_traits<T>::real_type;

}  // namespace qtt
