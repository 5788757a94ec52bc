#include "stf/baselines.hpp"

#include "helpers.hpp"

#include <doctest.h>

using namespace stf;
using stf::test::bitwise_equal;

namespace {

/// Deterministic linear recursion x_t = A x_{t-1} + c from a given start.
Tensor simulate_var1(const RowMatrix& a, const Eigen::VectorXd& c, Eigen::VectorXd x0,
                     Index steps) {
  const Index n = c.size();
  Tensor out({steps, n});
  MatrixMap om = out.mutable_mat();
  Eigen::VectorXd x = std::move(x0);
  for (Index t = 0; t < steps; ++t) {
    om.row(t) = x.transpose();
    x = (a * x + c).eval();
  }
  return out;
}

}  // namespace

TEST_CASE("ha_predict is the window mean per node") {
  Tensor window = Tensor::from_rows({{1, 10}, {2, 20}, {3, 30}});
  Tensor pred = ha_predict(window, 4);
  CHECK(pred.shape() == std::vector<Index>{4, 2});
  for (Index t = 0; t < 4; ++t) {
    CHECK(pred(t, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(pred(t, 1) == doctest::Approx(20.0).epsilon(1e-15));
  }

  Tensor constant = Tensor::full({5, 3}, 7.5);
  Tensor cpred = ha_predict(constant, 2);
  for (Index i = 0; i < cpred.size(); ++i) CHECK(cpred.data()[i] == 7.5);

  Tensor one = ha_predict(window, 1);
  Tensor seven = ha_predict(window, 7);
  for (Index j = 0; j < 2; ++j) CHECK(one(0, j) == seven(0, j));
}

TEST_CASE("var identity and intercept-only dynamics") {
  const Index n = 3;
  VarModel identity;
  identity.order = 1;
  identity.coeffs = {RowMatrix::Identity(n, n)};
  identity.intercept = Eigen::VectorXd::Zero(n);

  Rng rng(3);
  Tensor window = stf::test::random_tensor(rng, {5, n});
  Tensor pred = var_predict(identity, window, 4);
  for (Index t = 0; t < 4; ++t) {
    for (Index j = 0; j < n; ++j) CHECK(pred(t, j) == window(4, j));
  }

  VarModel flat;
  flat.order = 1;
  flat.coeffs = {RowMatrix::Zero(n, n)};
  flat.intercept = Eigen::VectorXd::Zero(n);
  flat.intercept << 1.0, -2.0, 0.5;
  Tensor fpred = var_predict(flat, window, 3);
  for (Index t = 0; t < 3; ++t) {
    CHECK(fpred(t, 0) == 1.0);
    CHECK(fpred(t, 1) == -2.0);
    CHECK(fpred(t, 2) == 0.5);
  }
}

TEST_CASE("var horizon one equals the direct one-step formula") {
  Rng rng(5);
  RowMatrix a(2, 2);
  a << 0.4, 0.1, -0.2, 0.3;
  Eigen::VectorXd c(2);
  c << 1.0, 2.0;
  Tensor series = simulate_var1(a, c, Eigen::VectorXd::Constant(2, 5.0), 120);
  VarModel model = var_fit(series, 2, 1e-8);

  Tensor window = stf::test::random_tensor(rng, {6, 2});
  Tensor pred = var_predict(model, window, 1);
  Eigen::VectorXd direct = model.intercept;
  direct += model.coeffs[0] * window.mat().row(5).transpose();
  direct += model.coeffs[1] * window.mat().row(4).transpose();
  CHECK(pred(0, 0) == doctest::Approx(direct(0)).epsilon(1e-15));
  CHECK(pred(0, 1) == doctest::Approx(direct(1)).epsilon(1e-15));
}

TEST_CASE("var recovers a noiseless scalar AR(1) to 1e-8") {
  RowMatrix a(1, 1);
  a << 0.5;
  Eigen::VectorXd c(1);
  c << 1.0;
  Tensor series = simulate_var1(a, c, Eigen::VectorXd::Zero(1), 200);
  VarModel model = var_fit(series, 1, 0.0);
  CHECK(std::abs(model.coeffs[0](0, 0) - 0.5) < 1e-8);
  CHECK(std::abs(model.intercept(0) - 1.0) < 1e-8);
}

TEST_CASE("var recovers a cross-coupled 2-node system to 1e-6") {
  RowMatrix a(2, 2);
  a << 0.5, 0.2, -0.1, 0.3;
  Eigen::VectorXd c(2);
  c << 1.0, -0.5;
  Eigen::VectorXd x0(2);
  x0 << 10.0, -5.0;
  Tensor series = simulate_var1(a, c, x0, 300);
  VarModel model = var_fit(series, 1, 0.0);
  CHECK((model.coeffs[0] - a).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((model.intercept - c).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("constant signal with ridge converges to the constant") {
  Tensor series = Tensor::full({80, 2}, 9.0);
  VarModel model = var_fit(series, 1, 1e-3);
  Tensor window = Tensor::full({3, 2}, 9.0);
  Tensor pred = var_predict(model, window, 5);
  for (Index i = 0; i < pred.size(); ++i) CHECK(pred.data()[i] == doctest::Approx(9.0).epsilon(1e-9));

  // without ridge the collinear design is rejected
  CHECK_THROWS_WITH_AS(var_fit(series, 1, 0.0), doctest::Contains("lambda"), DataError);
}

TEST_CASE("var_fit pre-conditions") {
  Tensor tiny = Tensor::full({5, 2}, 1.0);
  CHECK_THROWS_AS(var_fit(tiny, 2, 1e-3), DataError);
  Tensor ok = Tensor::full({30, 2}, 1.0);
  CHECK_THROWS_AS(var_fit(ok, 0, 1e-3), ConfigError);
  CHECK_THROWS_AS(var_fit(ok, 1, -1.0), ConfigError);
}

TEST_CASE("ridge shrinkage is monotone and heads to the intercept") {
  TrafficDataset ds = synth_generate(4, 6, 24, 13, /*noise_sigma=*/1.0);
  Tensor train({ds.num_steps() * 6 / 10, 4});
  train.mutable_mat() = ds.signal.mat().topRows(train.dim(0));

  Real previous_norm = std::numeric_limits<Real>::infinity();
  for (Real lambda : {1e-3, 1e2, 1e7}) {
    VarModel model = var_fit(train, 2, lambda);
    Real norm = 0.0;
    for (const RowMatrix& a : model.coeffs) norm += a.squaredNorm();
    CHECK(norm < previous_norm);
    previous_norm = norm;
  }

  // at huge lambda the rollout is intercept-only
  VarModel heavy = var_fit(train, 2, 1e12);
  Tensor window({4, 4});
  window.mutable_mat() = ds.signal.mat().middleRows(100, 4);
  Tensor pred = var_predict(heavy, window, 3);
  for (Index t = 0; t < 3; ++t) {
    for (Index j = 0; j < 4; ++j) {
      CHECK(pred(t, j) == doctest::Approx(heavy.intercept(j)).epsilon(1e-6));
    }
  }
}

TEST_CASE("baselines are deterministic") {
  TrafficDataset ds = synth_generate(4, 4, 24, 21);
  SplitSpec split = split_622(ds);
  MetricReport a = evaluate_baseline(BaselineMethod::kVar, ds, split, SplitPart::kTest, 12, 6);
  MetricReport b = evaluate_baseline(BaselineMethod::kVar, ds, split, SplitPart::kTest, 12, 6);
  CHECK(a.mae == b.mae);
  CHECK(a.rmse == b.rmse);
}

TEST_CASE("var beats ha on the noiseless synthetic set at a one-day horizon") {
  const int spd = 48;
  TrafficDataset ds = synth_generate(6, 10, spd, 42, /*noise_sigma=*/0.0);
  SplitSpec split = split_622(ds);
  MetricReport ha =
      evaluate_baseline(BaselineMethod::kHa, ds, split, SplitPart::kTest, spd, spd);
  MetricReport var =
      evaluate_baseline(BaselineMethod::kVar, ds, split, SplitPart::kTest, spd, spd, 3, 1e-3);
  CHECK(var.mae < ha.mae);
  CHECK(var.rmse < ha.rmse);
}
