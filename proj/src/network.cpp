#include "stf/network.hpp"

#include <cmath>

namespace stf {

void ModelConfig::validate() const {
  if (t_in < 1 || t_out < 1) throw ConfigError("model: T and T_out must be >= 1");
  if (n_nodes < 1) throw ConfigError("model: node count must be >= 1");
  if (steps_per_day < 1) throw ConfigError("model: steps_per_day must be >= 1");
  if (layers < 1) throw ConfigError("model: layer count L must be >= 1");
  if (std::abs(w_t + w_s + w_m - 1.0) > 1e-12) {
    throw ConfigError("model: route weights must sum to 1, got " +
                      std::to_string(w_t + w_s + w_m));
  }
  if (dims.temporal_width() % heads != 0 || dims.spatial_width() % heads != 0) {
    throw ConfigError("model: D_t=" + std::to_string(dims.temporal_width()) +
                      " and D_s=" + std::to_string(dims.spatial_width()) +
                      " must be divisible by heads=" + std::to_string(heads));
  }
}

ModelParams ModelParams::build(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  p.embedding =
      EmbeddingParams::build(config.t_in, config.n_nodes, config.steps_per_day, config.dims);
  const Index d_t = config.dims.temporal_width();
  const Index d_s = config.dims.spatial_width();
  for (Index l = 0; l < config.layers; ++l) {
    p.temporal_route.push_back(EncoderLayerParams::build(d_t, config.heads));
    p.spatial_route.push_back(EncoderLayerParams::build(d_s, config.heads));
    p.mixed_temporal.push_back(EncoderLayerParams::build(d_t, config.heads));
    p.mixed_spatial.push_back(EncoderLayerParams::build(d_s, config.heads));
  }
  p.head_t_w_dn = Tensor({d_t, config.n_nodes});
  p.head_t_w_tt = Tensor({config.t_in, config.t_out});
  p.head_s_w_dt = Tensor({d_s, config.t_out});
  p.head_m_w_m = Tensor({d_t, d_s});
  p.head_m_w_tt = Tensor({config.t_in, config.t_out});
  return p;
}

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams p;
  p.config = config;
  p.embedding =
      EmbeddingParams::init(config.t_in, config.n_nodes, config.steps_per_day, config.dims, rng);
  const Index d_t = config.dims.temporal_width();
  const Index d_s = config.dims.spatial_width();
  for (Index l = 0; l < config.layers; ++l) {
    p.temporal_route.push_back(EncoderLayerParams::init(d_t, config.heads, rng));
    p.spatial_route.push_back(EncoderLayerParams::init(d_s, config.heads, rng));
    p.mixed_temporal.push_back(EncoderLayerParams::init(d_t, config.heads, rng));
    p.mixed_spatial.push_back(EncoderLayerParams::init(d_s, config.heads, rng));
  }
  p.head_t_w_dn = Tensor({d_t, config.n_nodes});
  fill_xavier(rng, d_t, config.n_nodes, p.head_t_w_dn.mutable_data(), p.head_t_w_dn.size());
  p.head_t_w_tt = Tensor({config.t_in, config.t_out});
  fill_xavier(rng, config.t_in, config.t_out, p.head_t_w_tt.mutable_data(),
              p.head_t_w_tt.size());
  p.head_s_w_dt = Tensor({d_s, config.t_out});
  fill_xavier(rng, d_s, config.t_out, p.head_s_w_dt.mutable_data(), p.head_s_w_dt.size());
  p.head_m_w_m = Tensor({d_t, d_s});
  fill_xavier(rng, d_t, d_s, p.head_m_w_m.mutable_data(), p.head_m_w_m.size());
  p.head_m_w_tt = Tensor({config.t_in, config.t_out});
  fill_xavier(rng, config.t_in, config.t_out, p.head_m_w_tt.mutable_data(),
              p.head_m_w_tt.size());
  return p;
}

ModelParams ModelParams::clone() const {
  ModelParams out = *this;
  visit_params(out, [](const std::string&, Tensor& t) { t = t.clone(); });
  return out;
}

Index ModelParams::total_entries() const {
  Index total = 0;
  visit_params(*this, [&](const std::string&, const Tensor& t) { total += t.size(); });
  return total;
}

void watch_params(Tape& tape, ModelParams& params) {
  visit_params(params, [&](const std::string&, Tensor& t) { tape.watch(t); });
}

Forecast forward(Tape& tape, const Tensor& x_norm, const std::vector<int>& tod_idx,
                 const std::vector<int>& dow_idx, const BoolMatrix& adjacency,
                 const ModelParams& params, const NormStats& stats,
                 const ForwardOptions& options) {
  const ModelConfig& cfg = params.config;
  if (x_norm.rank() != 2 || x_norm.dim(0) != cfg.t_in || x_norm.dim(1) != cfg.n_nodes) {
    throw ConfigError("forward: window " + x_norm.shape_str() + " does not match configured [" +
                      std::to_string(cfg.t_in) + "x" + std::to_string(cfg.n_nodes) + "]");
  }

  Tensor x = inject_noise(tape, x_norm, params.embedding, options.training);
  UnifiedRep rep = embed(tape, x, tod_idx, dow_idx, params.embedding);

  // Temporal route: T x D_t -> T x N -> T_out x N.
  Tensor et = rep.temporal;
  for (const auto& layer : params.temporal_route) {
    et = temporal_encoder(tape, et, layer, options.counters);
  }
  Tensor route_t = matmul(tape, transpose(tape, params.head_t_w_tt),
                          matmul(tape, et, params.head_t_w_dn));

  // Spatial route: N x D_s -> N x T_out -> T_out x N.
  Tensor es = rep.spatial;
  for (std::size_t l = 0; l < params.spatial_route.size(); ++l) {
    AttentionTrace* trace = l == 0 ? options.spatial_trace : nullptr;
    es = glst(tape, es, adjacency, params.spatial_route[l], cfg.mask_mode, trace,
              options.counters);
  }
  Tensor route_s = transpose(tape, matmul(tape, es, params.head_s_w_dt));

  // Mixed route: a bilinear T x N interaction map from independently encoded
  // representations, then the time projection.
  Tensor mt = rep.temporal;
  for (const auto& layer : params.mixed_temporal) {
    mt = temporal_encoder(tape, mt, layer, options.counters);
  }
  Tensor ms = rep.spatial;
  for (const auto& layer : params.mixed_spatial) {
    ms = glst(tape, ms, adjacency, layer, cfg.mask_mode, nullptr, options.counters);
  }
  Tensor interaction = matmul(tape, matmul(tape, mt, params.head_m_w_m), transpose(tape, ms));
  Tensor route_m = matmul(tape, transpose(tape, params.head_m_w_tt), interaction);

  // De-normalize per route, then combine; y_hat is exactly the weighted sum
  // of the de-normalized routes.
  auto denorm = [&](const Tensor& t) {
    return add_scalar(tape, scale(tape, t, stats.std), stats.mean);
  };
  Tensor rt = denorm(route_t);
  Tensor rs = denorm(route_s);
  Tensor rm = denorm(route_m);
  Tensor y_hat = add(tape, add(tape, scale(tape, rt, cfg.w_t), scale(tape, rs, cfg.w_s)),
                     scale(tape, rm, cfg.w_m));

  Forecast f;
  f.y_hat = std::move(y_hat);
  if (options.want_routes) f.per_route = {std::move(rt), std::move(rs), std::move(rm)};
  return f;
}

}  // namespace stf
