#include "stf/baselines.hpp"

#include <Eigen/Cholesky>

namespace stf {

Tensor ha_predict(const Tensor& window, Index t_out) {
  if (window.rank() != 2 || window.dim(0) < 1) {
    throw ConfigError("ha_predict: expected a non-empty T x N window, got " + window.shape_str());
  }
  if (t_out < 1) throw ConfigError("ha_predict: horizon must be >= 1");
  const Index n = window.dim(1);
  Tensor out({t_out, n});
  const Eigen::RowVectorXd mean = window.mat().colwise().mean();
  out.mutable_mat().rowwise() = mean;
  return out;
}

VarModel var_fit(const Tensor& train_signal, Index order, Real lambda) {
  if (train_signal.rank() != 2) {
    throw ConfigError("var_fit: expected a T x N signal, got " + train_signal.shape_str());
  }
  if (order < 1) throw ConfigError("var_fit: order must be >= 1");
  if (lambda < 0.0) throw ConfigError("var_fit: lambda must be >= 0");
  const Index t_total = train_signal.dim(0);
  const Index n = train_signal.dim(1);
  if (t_total <= order + n * order) {
    throw DataError("var_fit: " + std::to_string(t_total) + " rows are too few for order " +
                    std::to_string(order) + " on " + std::to_string(n) +
                    " nodes (need more than " + std::to_string(order + n * order) + ")");
  }

  const Index rows = t_total - order;
  const Index k = 1 + n * order;  // intercept + p lags
  const ConstMatrixMap sig = train_signal.mat();

  RowMatrix design(rows, k);
  design.col(0).setOnes();
  for (Index t = 0; t < rows; ++t) {
    for (Index lag = 1; lag <= order; ++lag) {
      design.block(t, 1 + (lag - 1) * n, 1, n) = sig.row(order + t - lag);
    }
  }
  const auto targets = sig.bottomRows(rows);

  Eigen::MatrixXd gram = design.transpose() * design;
  for (Index i = 1; i < k; ++i) gram(i, i) += lambda;  // intercept unpenalized
  const Eigen::MatrixXd moment = design.transpose() * targets;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const auto d = ldlt.vectorD();
  const Real d_max = d.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= d_max * 1e-13) {
    if (lambda == 0.0) {
      throw DataError("var_fit: singular normal matrix with lambda = 0; try lambda > 0");
    }
    throw DataError("var_fit: normal matrix is numerically singular");
  }
  const Eigen::MatrixXd solution = ldlt.solve(moment);  // k x N

  VarModel model;
  model.order = order;
  model.lambda = lambda;
  model.intercept = solution.row(0).transpose();
  model.coeffs.reserve(static_cast<std::size_t>(order));
  for (Index lag = 1; lag <= order; ++lag) {
    // row block of the solution maps lag values to outputs; store as N x N
    // acting on column vectors: x_t += A_lag * x_{t-lag}
    model.coeffs.push_back(solution.block(1 + (lag - 1) * n, 0, n, n).transpose());
  }
  return model;
}

Tensor var_predict(const VarModel& model, const Tensor& window, Index t_out) {
  if (window.rank() != 2) {
    throw ConfigError("var_predict: expected a T x N window, got " + window.shape_str());
  }
  const Index n = window.dim(1);
  const Index p = model.order;
  if (window.dim(0) < p) {
    throw ConfigError("var_predict: window has " + std::to_string(window.dim(0)) +
                      " rows but the model has order " + std::to_string(p));
  }
  if (static_cast<Index>(model.coeffs.size()) != p || model.intercept.size() != n) {
    throw ConfigError("var_predict: model/window dimension mismatch");
  }
  if (t_out < 1) throw ConfigError("var_predict: horizon must be >= 1");

  // lags[0] is x_{t-1}, lags[1] is x_{t-2}, ...
  std::vector<Eigen::VectorXd> lags(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) {
    lags[static_cast<std::size_t>(i)] = window.mat().row(window.dim(0) - 1 - i).transpose();
  }

  Tensor out({t_out, n});
  MatrixMap om = out.mutable_mat();
  for (Index t = 0; t < t_out; ++t) {
    Eigen::VectorXd next = model.intercept;
    for (Index i = 0; i < p; ++i) {
      next.noalias() += model.coeffs[static_cast<std::size_t>(i)] * lags[static_cast<std::size_t>(i)];
    }
    om.row(t) = next.transpose();
    for (Index i = p - 1; i > 0; --i) {
      lags[static_cast<std::size_t>(i)] = std::move(lags[static_cast<std::size_t>(i - 1)]);
    }
    lags[0] = std::move(next);
  }
  return out;
}

MetricReport evaluate_baseline(BaselineMethod method, const TrafficDataset& ds,
                               const SplitSpec& split, SplitPart part, Index t_in, Index t_out,
                               Index order, Real lambda, Real mape_threshold) {
  Index begin = 0, end = 0;
  switch (part) {
    case SplitPart::kTrain: begin = 0; end = split.train_end; break;
    case SplitPart::kVal: begin = split.train_end; end = split.val_end; break;
    case SplitPart::kTest: begin = split.val_end; end = ds.num_steps(); break;
  }
  if (end - begin < t_in + t_out) {
    throw DataError(std::string("evaluate_baseline: ") + split_part_name(part) + " part has " +
                    std::to_string(end - begin) + " steps but requires >= " +
                    std::to_string(t_in + t_out) + " steps");
  }

  VarModel model;
  if (method == BaselineMethod::kVar) {
    Tensor train_rows({split.train_end, ds.num_nodes()});
    train_rows.mutable_mat() = ds.signal.mat().topRows(split.train_end);
    model = var_fit(train_rows, order, lambda);
  }

  const Index n = ds.num_nodes();
  MetricAccumulator acc;
  Tensor window({t_in, n});
  for (Index start = begin; start + t_in + t_out <= end; ++start) {
    window.mutable_mat() = ds.signal.mat().middleRows(start, t_in);
    const Tensor pred = method == BaselineMethod::kHa ? ha_predict(window, t_out)
                                                      : var_predict(model, window, t_out);
    const auto truth = ds.signal.mat().middleRows(start + t_in, t_out);
    const ConstMatrixMap pm = pred.mat();
    for (Index i = 0; i < t_out; ++i) {
      for (Index j = 0; j < n; ++j) acc.add(pm(i, j), truth(i, j), mape_threshold);
    }
  }
  return acc.report();
}

}  // namespace stf
