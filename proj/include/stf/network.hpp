#pragma once

#include "stf/attention.hpp"
#include "stf/dataset.hpp"
#include "stf/embedding.hpp"

#include <array>
#include <functional>
#include <optional>

namespace stf {

struct ModelConfig {
  Index t_in = 24;
  Index t_out = 24;
  Index n_nodes = 0;
  int steps_per_day = 288;
  EmbeddingDims dims;
  Index heads = 4;
  Index layers = 1;  // per route
  Real w_t = 0.25, w_s = 0.25, w_m = 0.50;
  LocalMaskMode mask_mode = LocalMaskMode::kNegInf;

  void validate() const;
};

/// Every learnable tensor of the network. The mixed route owns its own
/// encoder weights; nothing is shared across routes.
struct ModelParams {
  ModelConfig config;
  EmbeddingParams embedding;
  std::vector<EncoderLayerParams> temporal_route;
  std::vector<EncoderLayerParams> spatial_route;
  std::vector<EncoderLayerParams> mixed_temporal;
  std::vector<EncoderLayerParams> mixed_spatial;
  Tensor head_t_w_dn;  // D_t x N
  Tensor head_t_w_tt;  // T x T'
  Tensor head_s_w_dt;  // D_s x T'
  Tensor head_m_w_m;   // D_t x D_s
  Tensor head_m_w_tt;  // T x T'

  static ModelParams init(const ModelConfig& config, Rng& rng);
  static ModelParams build(const ModelConfig& config);  // zero-filled

  ModelParams clone() const;
  Index total_entries() const;
};

/// Visit every parameter with its stable dotted name, in a fixed order
/// (the checkpoint payload order).
template <typename Params, typename Fn>
void visit_params_impl(Params& p, Fn&& fn) {
  fn("embed.w_tf", p.embedding.w_tf);
  fn("embed.b_tf", p.embedding.b_tf);
  fn("embed.w_sf", p.embedding.w_sf);
  fn("embed.b_sf", p.embedding.b_sf);
  fn("embed.tod", p.embedding.tod_table);
  fn("embed.dow", p.embedding.dow_table);
  fn("embed.spatial", p.embedding.spatial_table);
  fn("embed.noise", p.embedding.noise);

  auto visit_stack = [&](const std::string& prefix, auto& stack) {
    for (std::size_t l = 0; l < stack.size(); ++l) {
      auto& layer = stack[l];
      const std::string base = prefix + ".l" + std::to_string(l) + ".";
      for (std::size_t k = 0; k < layer.w_q.size(); ++k) {
        fn(base + "q" + std::to_string(k), layer.w_q[k]);
        fn(base + "k" + std::to_string(k), layer.w_k[k]);
        fn(base + "v" + std::to_string(k), layer.w_v[k]);
      }
      fn(base + "w_o", layer.w_o);
      fn(base + "ln1_g", layer.ln1_gamma);
      fn(base + "ln1_b", layer.ln1_beta);
      fn(base + "ln2_g", layer.ln2_gamma);
      fn(base + "ln2_b", layer.ln2_beta);
      fn(base + "ffn_w1", layer.ffn_w1);
      fn(base + "ffn_b1", layer.ffn_b1);
      fn(base + "ffn_w2", layer.ffn_w2);
      fn(base + "ffn_b2", layer.ffn_b2);
    }
  };
  visit_stack("route_t", p.temporal_route);
  visit_stack("route_s", p.spatial_route);
  visit_stack("route_m_t", p.mixed_temporal);
  visit_stack("route_m_s", p.mixed_spatial);

  fn("head_t.w_dn", p.head_t_w_dn);
  fn("head_t.w_tt", p.head_t_w_tt);
  fn("head_s.w_dt", p.head_s_w_dt);
  fn("head_m.w_m", p.head_m_w_m);
  fn("head_m.w_tt", p.head_m_w_tt);
}

inline void visit_params(ModelParams& p,
                         const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_params_impl(p, fn);
}
inline void visit_params(const ModelParams& p,
                         const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_params_impl(p, fn);
}

/// Register every parameter as a differentiable leaf on the tape.
void watch_params(Tape& tape, ModelParams& params);

struct Forecast {
  Tensor y_hat;  // T_out x N, raw signal units
  std::optional<std::array<Tensor, 3>> per_route;  // de-normalized t/s/m
};

struct ForwardOptions {
  bool training = false;
  bool want_routes = false;
  AttentionTrace* spatial_trace = nullptr;  // first spatial-route layer
  AttnCounters* counters = nullptr;
};

/// One-shot forecast over the whole horizon: three routes, each projected
/// to T_out x N, de-normalized per route and combined with the fixed route
/// weights (so y_hat is exactly the weighted sum of per_route).
Forecast forward(Tape& tape, const Tensor& x_norm, const std::vector<int>& tod_idx,
                 const std::vector<int>& dow_idx, const BoolMatrix& adjacency,
                 const ModelParams& params, const NormStats& stats,
                 const ForwardOptions& options = {});

}  // namespace stf
