#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "qtt/common.hpp"

namespace qtt {

// Per-step record written to steps.csv.
struct DiagnosticsRecord {
  int step = 0;
  double time = 0.0;
  std::string flavor;   // G | X | P | -
  std::string scheme;   // PS | AP | SAT
  std::string stepper;  // euler | rk4 | cn
  Index r_in = 0;
  Index r = 0;
  long long n_eval = 0;
  double wall_seconds = 0.0;
  std::optional<double> err_l2;
};

std::string diagnostics_csv_header();
std::string to_csv_row(const DiagnosticsRecord& rec);

}  // namespace qtt
