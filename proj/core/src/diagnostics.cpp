#include "qtt/diagnostics.hpp"

#include <cstdio>

namespace qtt {

std::string diagnostics_csv_header() {
  return "step,time,flavor,scheme,stepper,r_in,r,n_eval,wall_seconds,err_l2";
}

std::string to_csv_row(const DiagnosticsRecord& rec) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.12g,%s,%s,%s,%lld,%lld,%lld,%.6g,", rec.step, rec.time,
                rec.flavor.c_str(), rec.scheme.c_str(), rec.stepper.c_str(),
                static_cast<long long>(rec.r_in), static_cast<long long>(rec.r), rec.n_eval,
                rec.wall_seconds);
  std::string row(buf);
  if (rec.err_l2) {
    std::snprintf(buf, sizeof(buf), "%.12g", *rec.err_l2);
    row += buf;
  }
  return row;
}

}  // namespace qtt
