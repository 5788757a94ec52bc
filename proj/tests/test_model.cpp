#include "stf/grad_check.hpp"
#include "stf/network.hpp"

#include "helpers.hpp"

#include <doctest.h>

using namespace stf;
using stf::test::bitwise_equal;
using stf::test::random_tensor;

namespace {

BoolMatrix full_adjacency(Index n) { return BoolMatrix::Constant(n, n, true); }

BoolMatrix path_adjacency(Index n) {
  BoolMatrix adj = BoolMatrix::Identity(n, n);
  for (Index i = 0; i + 1 < n; ++i) adj(i, i + 1) = adj(i + 1, i) = true;
  return adj;
}

ModelConfig tiny_config(Index t_in, Index t_out, Index n_nodes) {
  ModelConfig cfg;
  cfg.t_in = t_in;
  cfg.t_out = t_out;
  cfg.n_nodes = n_nodes;
  cfg.steps_per_day = 8;
  cfg.dims = {4, 2, 2, 4, 4};  // D_t = D_s = 8
  cfg.heads = 2;
  cfg.layers = 1;
  return cfg;
}

std::vector<int> iota_mod(Index len, int modulo, int offset = 0) {
  std::vector<int> v(static_cast<std::size_t>(len));
  for (Index i = 0; i < len; ++i) v[static_cast<std::size_t>(i)] = (offset + static_cast<int>(i)) % modulo;
  return v;
}

}  // namespace

TEST_CASE("inject_noise contract") {
  Rng rng(1);
  EmbeddingDims dims{2, 2, 2, 3, 3};
  EmbeddingParams params = EmbeddingParams::init(4, 3, 8, dims, rng);
  Tensor x = random_tensor(rng, {4, 3});

  Tape tape(false);
  CHECK(bitwise_equal(inject_noise(tape, x, params, false), x));

  EmbeddingParams zero = EmbeddingParams::build(4, 3, 8, dims);
  CHECK(bitwise_equal(inject_noise(tape, x, zero, true), x));

  // fresh noise respects the Xavier bound sqrt(6/(T+N))
  const Real bound = std::sqrt(6.0 / (4 + 3));
  for (Index i = 0; i < params.noise.size(); ++i) {
    CHECK(std::abs(params.noise.data()[i]) <= bound);
  }
}

TEST_CASE("embed shapes and table gathering") {
  Rng rng(2);
  EmbeddingDims dims{2, 2, 2, 3, 3};
  EmbeddingParams params = EmbeddingParams::init(4, 3, 8, dims, rng);
  Tape tape(false);

  Tensor x({4, 3});
  const auto tod = iota_mod(4, 8, 5);
  const auto dow = iota_mod(4, 7, 2);
  UnifiedRep rep = embed(tape, x, tod, dow, params);
  CHECK(rep.temporal.shape() == std::vector<Index>{4, 6});
  CHECK(rep.spatial.shape() == std::vector<Index>{3, 6});

  // zero input and zero biases: feature blocks are zero, table blocks are
  // exact copies of the gathered rows
  params.b_tf = Tensor({2});
  params.b_sf = Tensor({3});
  rep = embed(tape, x, tod, dow, params);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 2; ++j) {
      CHECK(rep.temporal(i, j) == 0.0);
      CHECK(rep.temporal(i, 2 + j) == params.tod_table(tod[static_cast<std::size_t>(i)], j));
      CHECK(rep.temporal(i, 4 + j) == params.dow_table(dow[static_cast<std::size_t>(i)], j));
    }
  }
  for (Index n = 0; n < 3; ++n) {
    for (Index j = 0; j < 3; ++j) {
      CHECK(rep.spatial(n, j) == 0.0);
      CHECK(rep.spatial(n, 3 + j) == params.spatial_table(n, j));
    }
  }
}

TEST_CASE("embed validates window length and calendar indices") {
  Rng rng(3);
  EmbeddingParams params = EmbeddingParams::init(4, 3, 8, {2, 2, 2, 3, 3}, rng);
  Tape tape(false);
  Tensor wrong({5, 3});
  CHECK_THROWS_WITH_AS(embed(tape, wrong, iota_mod(5, 8), iota_mod(5, 7), params),
                       doctest::Contains("window length"), ConfigError);
  Tensor x({4, 3});
  auto bad_tod = iota_mod(4, 8);
  bad_tod[2] = 9;
  CHECK_THROWS_AS(embed(tape, x, bad_tod, iota_mod(4, 7), params), DataError);
}

TEST_CASE("unification: one input entry reaches every feature column") {
  Rng rng(4);
  EmbeddingDims dims{3, 2, 2, 3, 3};
  EmbeddingParams params = EmbeddingParams::init(5, 4, 8, dims, rng);
  Tape tape(false);
  Tensor x = random_tensor(rng, {5, 4});
  const auto tod = iota_mod(5, 8);
  const auto dow = iota_mod(5, 7);
  UnifiedRep base = embed(tape, x, tod, dow, params);

  const Index t_star = 2, n_star = 3;
  Tensor x2 = x.clone();
  x2.mutable_data()[t_star * 4 + n_star] += 1.0;
  UnifiedRep bumped = embed(tape, x2, tod, dow, params);

  // every feature column of E_t row t* and of E_s row n* moves
  for (Index j = 0; j < dims.d_tf; ++j) {
    CHECK(bumped.temporal(t_star, j) != base.temporal(t_star, j));
  }
  for (Index j = 0; j < dims.d_sf; ++j) {
    CHECK(bumped.spatial(n_star, j) != base.spatial(n_star, j));
  }
  // rows of other time steps / nodes are untouched
  for (Index i = 0; i < 5; ++i) {
    if (i == t_star) continue;
    for (Index j = 0; j < 7; ++j) CHECK(bumped.temporal(i, j) == base.temporal(i, j));
  }
  for (Index n = 0; n < 4; ++n) {
    if (n == n_star) continue;
    for (Index j = 0; j < 6; ++j) CHECK(bumped.spatial(n, j) == base.spatial(n, j));
  }
}

TEST_CASE("temporal encoder keeps shape and respects row symmetry") {
  Rng rng(5);
  EncoderLayerParams layer = EncoderLayerParams::init(8, 2, rng);
  Tape tape(false);

  Tensor e = random_tensor(rng, {6, 8});
  Tensor out = temporal_encoder(tape, e, layer);
  CHECK(out.shape() == e.shape());

  // identical rows in, identical rows out
  Tensor row = random_tensor(rng, {1, 8});
  Tensor same({4, 8});
  for (Index i = 0; i < 4; ++i) {
    std::copy(row.data(), row.data() + 8, same.mutable_data() + i * 8);
  }
  Tensor out_same = temporal_encoder(tape, same, layer);
  for (Index i = 1; i < 4; ++i) {
    for (Index j = 0; j < 8; ++j) CHECK(out_same(i, j) == out_same(0, j));
  }
}

TEST_CASE("temporal encoder end-to-end gradient check") {
  Rng rng(6);
  EncoderLayerParams layer = EncoderLayerParams::init(8, 2, rng);
  Tensor e = random_tensor(rng, {6, 8});
  const Tensor target = random_tensor(rng, {6, 8});

  std::vector<std::pair<std::string, Tensor*>> params{{"e", &e}};
  for (Index k = 0; k < 2; ++k) {
    params.emplace_back("q" + std::to_string(k), &layer.w_q[static_cast<std::size_t>(k)]);
    params.emplace_back("k" + std::to_string(k), &layer.w_k[static_cast<std::size_t>(k)]);
    params.emplace_back("v" + std::to_string(k), &layer.w_v[static_cast<std::size_t>(k)]);
  }
  params.insert(params.end(), {{"w_o", &layer.w_o},
                               {"ln1_g", &layer.ln1_gamma},
                               {"ln1_b", &layer.ln1_beta},
                               {"ln2_g", &layer.ln2_gamma},
                               {"ln2_b", &layer.ln2_beta},
                               {"ffn_w1", &layer.ffn_w1},
                               {"ffn_b1", &layer.ffn_b1},
                               {"ffn_w2", &layer.ffn_w2},
                               {"ffn_b2", &layer.ffn_b2}});

  auto loss_value = [&]() {
    Tape t;
    return huber_loss(t, temporal_encoder(t, e, layer), target, 1.0).scalar_value();
  };
  Tape tape;
  for (auto& [name, tensor] : params) tape.watch(*tensor);
  GradientMap grads = tape.backward(
      huber_loss(tape, temporal_encoder(tape, e, layer), target, 1.0));
  std::map<std::string, Tensor> analytic;
  for (auto& [name, tensor] : params) analytic.emplace(name, grads.at(*tensor));
  auto report = grad_check(loss_value, params, analytic, 1e-6);
  CHECK_MESSAGE(report.max_rel_error < 1e-5, "worst: ", report.worst_name);
}

TEST_CASE("glst with full adjacency matches the plain encoder bitwise") {
  Rng rng(7);
  EncoderLayerParams layer = EncoderLayerParams::init(8, 2, rng);
  Tape tape(false);
  Tensor e = random_tensor(rng, {5, 8});
  BoolMatrix adj = full_adjacency(5);
  Tensor a = glst(tape, e, adj, layer);
  Tensor b = temporal_encoder(tape, e, layer);
  CHECK(bitwise_equal(a, b));
}

TEST_CASE("glst single node collapses to its value vector") {
  Rng rng(8);
  EncoderLayerParams layer = EncoderLayerParams::init(8, 2, rng);
  Tape tape(false);
  Tensor e = random_tensor(rng, {1, 8});
  AttentionTrace trace;
  Tensor out = glst(tape, e, full_adjacency(1), layer, LocalMaskMode::kNegInf, &trace);
  CHECK(trace.alpha_global(0, 0, 0) == 1.0);
  CHECK(trace.alpha_local(0, 0, 0) == 1.0);
  CHECK(trace.alpha_global(1, 0, 0) == 1.0);
  // with the attention weight pinned at 1, GLSAtt reduces to V exactly, so
  // the whole layer agrees with the unmasked encoder
  CHECK(bitwise_equal(out, temporal_encoder(tape, e, layer)));
}

TEST_CASE("glst path graph: local weights vanish off the support") {
  Rng rng(9);
  EncoderLayerParams layer = EncoderLayerParams::init(8, 2, rng);
  Tape tape(false);
  Tensor e = random_tensor(rng, {3, 8});
  AttentionTrace trace;
  glst(tape, e, path_adjacency(3), layer, LocalMaskMode::kNegInf, &trace);
  for (Index h = 0; h < 2; ++h) {
    CHECK(trace.alpha_local(h, 0, 2) == 0.0);
    CHECK(trace.alpha_local(h, 2, 0) == 0.0);
    CHECK(trace.alpha_global(h, 0, 2) > 0.0);
  }
}

TEST_CASE("glst trace invariants on random instances") {
  Rng rng(10);
  EncoderLayerParams layer = EncoderLayerParams::init(8, 2, rng);
  Tape tape(false);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(6));
    BoolMatrix adj = BoolMatrix::Identity(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        if (rng.uniform() < 0.4) adj(i, j) = adj(j, i) = true;
      }
    }
    EncoderLayerParams lp = EncoderLayerParams::init(8, 2, rng);
    Tensor e = random_tensor(rng, {n, 8});
    AttentionTrace trace;
    glst(tape, e, adj, lp, LocalMaskMode::kNegInf, &trace);
    for (Index h = 0; h < 2; ++h) {
      for (Index i = 0; i < n; ++i) {
        Real gs = 0.0, ls = 0.0;
        for (Index j = 0; j < n; ++j) {
          gs += trace.alpha_global(h, i, j);
          ls += trace.alpha_local(h, i, j);
          if (!adj(i, j)) CHECK(trace.alpha_local(h, i, j) == 0.0);
        }
        CHECK(std::abs(gs - 1.0) <= 1e-12);
        CHECK(std::abs(ls - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("zero-product mask mode keeps non-neighbors at positive weight") {
  Rng rng(11);
  EncoderLayerParams layer = EncoderLayerParams::init(8, 2, rng);
  Tape tape(false);
  Tensor e = random_tensor(rng, {3, 8});
  AttentionTrace trace;
  glst(tape, e, path_adjacency(3), layer, LocalMaskMode::kZeroProduct, &trace);
  // the literal product reading: a zeroed score exponentiates to 1, not 0
  CHECK(trace.alpha_local(0, 0, 2) > 0.0);
  Real row = 0.0;
  for (Index j = 0; j < 3; ++j) row += trace.alpha_local(0, 0, j);
  CHECK(std::abs(row - 1.0) <= 1e-12);
}

TEST_CASE("glst rejects malformed adjacency") {
  Rng rng(12);
  EncoderLayerParams layer = EncoderLayerParams::init(8, 2, rng);
  Tape tape(false);
  Tensor e = random_tensor(rng, {3, 8});

  BoolMatrix no_loop = full_adjacency(3);
  no_loop(1, 1) = false;
  CHECK_THROWS_WITH_AS(glst(tape, e, no_loop, layer), doctest::Contains("self-loop"),
                       ConfigError);

  BoolMatrix asym = BoolMatrix::Identity(3, 3);
  asym(0, 1) = true;
  CHECK_THROWS_WITH_AS(glst(tape, e, asym, layer), doctest::Contains("symmetric"), ConfigError);
}

TEST_CASE("glst end-to-end gradient check") {
  Rng rng(13);
  EncoderLayerParams layer = EncoderLayerParams::init(8, 2, rng);
  Tensor e = random_tensor(rng, {5, 8});
  const Tensor target = random_tensor(rng, {5, 8});
  BoolMatrix adj = path_adjacency(5);

  std::vector<std::pair<std::string, Tensor*>> params{{"e", &e}};
  for (Index k = 0; k < 2; ++k) {
    params.emplace_back("q" + std::to_string(k), &layer.w_q[static_cast<std::size_t>(k)]);
    params.emplace_back("k" + std::to_string(k), &layer.w_k[static_cast<std::size_t>(k)]);
    params.emplace_back("v" + std::to_string(k), &layer.w_v[static_cast<std::size_t>(k)]);
  }
  params.emplace_back("w_o", &layer.w_o);
  params.emplace_back("ffn_w1", &layer.ffn_w1);

  auto loss_value = [&]() {
    Tape t;
    return huber_loss(t, glst(t, e, adj, layer), target, 1.0).scalar_value();
  };
  Tape tape;
  for (auto& [name, tensor] : params) tape.watch(*tensor);
  GradientMap grads = tape.backward(huber_loss(tape, glst(tape, e, adj, layer), target, 1.0));
  std::map<std::string, Tensor> analytic;
  for (auto& [name, tensor] : params) analytic.emplace(name, grads.at(*tensor));
  auto report = grad_check(loss_value, params, analytic, 1e-6);
  CHECK_MESSAGE(report.max_rel_error < 1e-5, "worst: ", report.worst_name);
}

TEST_CASE("forward shape and determinism") {
  Rng rng(14);
  ModelConfig cfg = tiny_config(12, 12, 5);
  ModelParams params = ModelParams::init(cfg, rng);
  NormStats stats{10.0, 4.0};
  Tensor x = random_tensor(rng, {12, 5});
  BoolMatrix adj = path_adjacency(5);
  const auto tod = iota_mod(12, 8);
  const auto dow = iota_mod(12, 7);

  Tape tape(false);
  Forecast a = forward(tape, x, tod, dow, adj, params, stats);
  CHECK(a.y_hat.shape() == std::vector<Index>{12, 5});
  Forecast b = forward(tape, x, tod, dow, adj, params, stats);
  CHECK(bitwise_equal(a.y_hat, b.y_hat));

  Tensor wrong({11, 5});
  CHECK_THROWS_AS(forward(tape, wrong, tod, dow, adj, params, stats), ConfigError);
}

TEST_CASE("route weights (1,0,0) reduce the forecast to the temporal route") {
  Rng rng(15);
  ModelConfig cfg = tiny_config(6, 4, 4);
  cfg.w_t = 1.0;
  cfg.w_s = 0.0;
  cfg.w_m = 0.0;
  ModelParams params = ModelParams::init(cfg, rng);
  NormStats stats{3.0, 2.0};
  Tensor x = random_tensor(rng, {6, 4});
  BoolMatrix adj = path_adjacency(4);

  Tape tape(false);
  ForwardOptions opt;
  opt.want_routes = true;
  Forecast f = forward(tape, x, iota_mod(6, 8), iota_mod(6, 7), adj, params, stats, opt);
  CHECK(bitwise_equal(f.y_hat, (*f.per_route)[0]));
}

TEST_CASE("route decomposition recombines exactly") {
  Rng rng(16);
  ModelConfig cfg = tiny_config(6, 4, 4);
  ModelParams params = ModelParams::init(cfg, rng);
  NormStats stats{50.0, 20.0};
  Tensor x = random_tensor(rng, {6, 4});
  BoolMatrix adj = full_adjacency(4);

  Tape tape(false);
  ForwardOptions opt;
  opt.want_routes = true;
  Forecast f = forward(tape, x, iota_mod(6, 8), iota_mod(6, 7), adj, params, stats, opt);
  const auto& r = *f.per_route;
  for (Index i = 0; i < f.y_hat.size(); ++i) {
    const Real combined = cfg.w_t * r[0].data()[i] + cfg.w_s * r[1].data()[i] +
                          cfg.w_m * r[2].data()[i];
    CHECK(std::abs(combined - f.y_hat.data()[i]) <= 1e-12);
  }
}

TEST_CASE("asymmetric horizon: T=288 in, T'=576 out") {
  Rng rng(17);
  ModelConfig cfg;
  cfg.t_in = 288;
  cfg.t_out = 576;
  cfg.n_nodes = 4;
  cfg.steps_per_day = 288;
  cfg.dims = {2, 2, 2, 3, 3};
  cfg.heads = 2;
  cfg.layers = 1;
  ModelParams params = ModelParams::init(cfg, rng);
  Tensor x = random_tensor(rng, {288, 4});
  Tape tape(false);
  Forecast f = forward(tape, x, iota_mod(288, 288), iota_mod(288, 7), full_adjacency(4), params,
                       NormStats{});
  CHECK(f.y_hat.shape() == std::vector<Index>{576, 4});
}

TEST_CASE("scaling the three projection heads scales the forecast") {
  Rng rng(18);
  ModelConfig cfg = tiny_config(6, 4, 4);
  ModelParams params = ModelParams::init(cfg, rng);
  NormStats unit{};  // mean 0, std 1: the forecast equals its normalized form
  Tensor x = random_tensor(rng, {6, 4});
  BoolMatrix adj = full_adjacency(4);
  const auto tod = iota_mod(6, 8);
  const auto dow = iota_mod(6, 7);

  Tape tape(false);
  Forecast before = forward(tape, x, tod, dow, adj, params, unit);
  for (Tensor* w : {&params.head_t_w_tt, &params.head_s_w_dt, &params.head_m_w_tt}) {
    w->mutable_vec() *= 2.0;
  }
  Forecast after = forward(tape, x, tod, dow, adj, params, unit);
  for (Index i = 0; i < before.y_hat.size(); ++i) {
    CHECK(after.y_hat.data()[i] == 2.0 * before.y_hat.data()[i]);
  }
}

TEST_CASE("huber loss is convex in the prediction") {
  Rng rng(19);
  Tape tape(false);
  for (int trial = 0; trial < 40; ++trial) {
    Tensor y = random_tensor(rng, {3, 3}, -4.0, 4.0);
    Tensor a = random_tensor(rng, {3, 3}, -4.0, 4.0);
    Tensor b = random_tensor(rng, {3, 3}, -4.0, 4.0);
    Tensor mid({3, 3});
    mid.mutable_vec() = 0.5 * (a.vec() + b.vec());
    const Real la = huber_loss(tape, a, y, 1.0).scalar_value();
    const Real lb = huber_loss(tape, b, y, 1.0).scalar_value();
    const Real lm = huber_loss(tape, mid, y, 1.0).scalar_value();
    CHECK(lm <= 0.5 * (la + lb) + 1e-12);
  }
}

TEST_CASE("full model gradient check at a small configuration") {
  Rng rng(20);
  ModelConfig cfg = tiny_config(4, 2, 4);
  cfg.heads = 2;
  ModelParams params = ModelParams::init(cfg, rng);
  NormStats stats{0.0, 1.0};
  Tensor x = random_tensor(rng, {4, 4});
  const Tensor target = random_tensor(rng, {2, 4});
  BoolMatrix adj = path_adjacency(4);
  const auto tod = iota_mod(4, 8);
  const auto dow = iota_mod(4, 7);

  ForwardOptions opt;
  opt.training = true;

  auto loss_value = [&]() {
    Tape t;
    Forecast f = forward(t, x, tod, dow, adj, params, stats, opt);
    return huber_loss(t, f.y_hat, target, 1.0).scalar_value();
  };

  std::vector<std::pair<std::string, Tensor*>> named;
  visit_params(params, [&](const std::string& name, Tensor& t) { named.emplace_back(name, &t); });

  Tape tape;
  watch_params(tape, params);
  Forecast f = forward(tape, x, tod, dow, adj, params, stats, opt);
  GradientMap grads = tape.backward(huber_loss(tape, f.y_hat, target, 1.0));

  std::map<std::string, Tensor> analytic;
  for (auto& [name, tensor] : named) analytic.emplace(name, grads.at(*tensor));
  auto report = grad_check(loss_value, named, analytic, 1e-6);
  CHECK_MESSAGE(report.max_rel_error < 1e-4, "worst: ", report.worst_name, " idx ",
                report.worst_flat);
}
