#pragma once

#include <functional>
#include <span>
#include <string>

#include "capstag/tape.hpp"

namespace capstag {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Compares reverse-mode gradients of a scalar computation against central
// finite differences over every element of every listed parameter.
// rel err = |analytic - numeric| / max(1, |analytic|).
GradCheckReport grad_check_report(const std::function<Var(Tape&)>& f,
                                  std::span<Parameter* const> params, double eps = 1e-5);

double grad_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                  double eps = 1e-5);

}  // namespace capstag
