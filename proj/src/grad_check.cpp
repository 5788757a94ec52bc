#include "stf/grad_check.hpp"

#include <cmath>

namespace stf {

GradCheckReport grad_check(const std::function<Real()>& f,
                           const std::vector<std::pair<std::string, Tensor*>>& params,
                           const std::map<std::string, Tensor>& analytic, Real h) {
  if (h < 1e-7 || h > 1e-4) {
    throw ConfigError("grad_check: h must lie in [1e-7, 1e-4], got " + std::to_string(h));
  }
  GradCheckReport report;
  for (const auto& [name, tensor] : params) {
    const auto it = analytic.find(name);
    if (it == analytic.end()) {
      throw ConfigError("grad_check: no analytic gradient supplied for '" + name + "'");
    }
    const Tensor& grad = it->second;
    if (!grad.same_shape(*tensor)) {
      throw ConfigError("grad_check: gradient shape " + grad.shape_str() + " != parameter " +
                        tensor->shape_str() + " for '" + name + "'");
    }
    const Index n = tensor->size();
    for (Index i = 0; i < n; ++i) {
      Real* p = tensor->mutable_data();
      const Real old = p[i];
      p[i] = old + h;
      const Real up = f();
      tensor->mutable_data()[i] = old - h;
      const Real down = f();
      tensor->mutable_data()[i] = old;
      const Real numeric = (up - down) / (2.0 * h);
      const Real analytic_v = grad.data()[i];
      const Real denom = std::max({std::abs(analytic_v), std::abs(numeric), 1e-8});
      const Real rel = std::abs(analytic_v - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_name = name;
        report.worst_flat = i;
      }
    }
  }
  return report;
}

}  // namespace stf
