#pragma once

#include "stf/tensor.hpp"

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace stf {

struct GradCheckReport {
  Real max_rel_error = 0.0;
  std::string worst_name;
  Index worst_flat = -1;
};

/// Compare analytic gradients against central finite differences of f.
///
/// f re-evaluates the scalar loss from the current parameter values; every
/// entry of every listed parameter is perturbed by +/- h in turn. Relative
/// error uses the denominator max(|analytic|, |numeric|, 1e-8). h must lie
/// in [1e-7, 1e-4].
GradCheckReport grad_check(const std::function<Real()>& f,
                           const std::vector<std::pair<std::string, Tensor*>>& params,
                           const std::map<std::string, Tensor>& analytic, Real h = 1e-6);

}  // namespace stf
