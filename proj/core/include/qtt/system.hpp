#pragma once

#include <functional>
#include <vector>

#include "qtt/tt_operator.hpp"
#include "qtt/tt_vector.hpp"

namespace qtt {

// One linear term c(t) * A acting from in_field into the equation of motion
// of out_field.
template <class T>
struct LinearTerm {
  int out_field = 0;
  int in_field = 0;
  TtOperator<T> op;
  std::function<T(double)> coeff;  // empty -> constant 1

  T coeff_at(double t) const { return coeff ? coeff(t) : T(1); }
};

// Auxiliary grid function evaluated in the reduced coordinates of a field's
// manifold: elementwise samples for the interpolative flavors, a projected
// diagonal operator for the orthonormal one.
template <class T>
struct SampledAux {
  int at_field = 0;
  TtVector<T> tt;
};

// Constant source term b(t) = coeff(t) * b entering a field's equation.
template <class T>
struct SourceTerm {
  int field = 0;
  TtVector<T> tt;
  std::function<T(double)> coeff;
  T coeff_at(double t) const { return coeff ? coeff(t) : T(1); }
};

template <class T>
struct SiteBlock;  // defined with the sweep engine

// Reduced right-hand side: given the active cores of every field (flattened),
// fill their time derivatives.  An empty assembler means the plain linear
// combination of the terms.
template <class T>
using RhsAssembler = std::function<void(const SiteBlock<T>&, double,
                                        const std::vector<Vec<T>>&, std::vector<Vec<T>>&)>;

// A coupled system of TT fields sharing one sweep.
template <class T>
struct DlrSystem {
  int n_fields = 1;
  std::vector<LinearTerm<T>> terms;
  std::vector<SampledAux<T>> aux;
  std::vector<SourceTerm<T>> sources;
  RhsAssembler<T> assemble;
  bool is_linear = true;
  // alternative term set for global step-and-truncate (e.g. with elementwise
  // masks folded into the operators); empty -> use `terms`
  std::vector<LinearTerm<T>> sat_terms;

  const std::vector<LinearTerm<T>>& terms_for_sat() const {
    return sat_terms.empty() ? terms : sat_terms;
  }
};

}  // namespace qtt
