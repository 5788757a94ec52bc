#pragma once

#include "stf/dataset.hpp"
#include "stf/training.hpp"

namespace stf {

/// Historical average: every forecast row is the per-node mean of the
/// input window, held constant across the horizon.
Tensor ha_predict(const Tensor& window, Index t_out);

struct VarModel {
  Index order = 3;                // p
  std::vector<RowMatrix> coeffs;  // A_1..A_p, each N x N
  Eigen::VectorXd intercept;      // c
  Real lambda = 1e-3;
};

/// Ridge least squares for x_t = c + sum_i A_i x_{t-i}, solved through the
/// normal equations with an LDLT factorization. The intercept column is
/// not penalized. A singular design with lambda == 0 is fatal and suggests
/// a positive lambda.
VarModel var_fit(const Tensor& train_signal, Index order, Real lambda);

/// Iterated one-step rollout over the horizon, feeding each forecast back
/// in as the newest lag.
Tensor var_predict(const VarModel& model, const Tensor& window, Index t_out);

enum class BaselineMethod { kHa, kVar };

/// Raw-unit metrics of a baseline over every stride-one window of a split
/// part. VAR is fitted on the training split only, whatever part is being
/// scored.
MetricReport evaluate_baseline(BaselineMethod method, const TrafficDataset& ds,
                               const SplitSpec& split, SplitPart part, Index t_in, Index t_out,
                               Index order = 3, Real lambda = 1e-3, Real mape_threshold = 0.1);

}  // namespace stf
