#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "gust/autodiff.hpp"

namespace gust {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares each params[i]->grad (assumed already populated with the analytic
/// gradient) against central differences of `loss`. The relative error per
/// coordinate is |a - n| / max(1e-8, |a| + |n|). Parameter values are restored
/// bit-for-bit afterwards.
inline GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                         std::span<Parameter* const> params, double h) {
  GradCheckReport report;
  for (Parameter* p : params) {
    auto values = p->value.values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double up = loss();
      values[k] = saved - h;
      const double down = loss();
      values[k] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad.values()[k];
      const double err = std::abs(analytic - numeric) /
                         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      ++report.coordinates;
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = std::max(report.max_relative_error, err);
        report.worst_parameter = p->name;
        report.worst_index = k;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace gust
