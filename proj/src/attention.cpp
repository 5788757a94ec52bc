#include "stf/attention.hpp"

#include <cmath>
#include <cstring>

namespace stf {

EncoderLayerParams EncoderLayerParams::build(Index d, Index heads) {
  if (heads < 1 || d % heads != 0) {
    throw ConfigError("encoder: D=" + std::to_string(d) + " is not divisible by heads=" +
                      std::to_string(heads));
  }
  const Index d_h = d / heads;
  const Index d_ff = 4 * d;
  EncoderLayerParams p;
  p.w_q.resize(static_cast<std::size_t>(heads));
  p.w_k.resize(static_cast<std::size_t>(heads));
  p.w_v.resize(static_cast<std::size_t>(heads));
  for (Index k = 0; k < heads; ++k) {
    p.w_q[static_cast<std::size_t>(k)] = Tensor({d, d_h});
    p.w_k[static_cast<std::size_t>(k)] = Tensor({d, d_h});
    p.w_v[static_cast<std::size_t>(k)] = Tensor({d, d_h});
  }
  p.w_o = Tensor({d, d});
  p.ln1_gamma = Tensor({d});
  p.ln1_beta = Tensor({d});
  p.ln2_gamma = Tensor({d});
  p.ln2_beta = Tensor({d});
  p.ffn_w1 = Tensor({d, d_ff});
  p.ffn_b1 = Tensor({d_ff});
  p.ffn_w2 = Tensor({d_ff, d});
  p.ffn_b2 = Tensor({d});
  return p;
}

EncoderLayerParams EncoderLayerParams::init(Index d, Index heads, Rng& rng) {
  EncoderLayerParams p = build(d, heads);
  const Index d_h = d / heads;
  const Index d_ff = 4 * d;
  for (Index k = 0; k < heads; ++k) {
    auto& q = p.w_q[static_cast<std::size_t>(k)];
    auto& kk = p.w_k[static_cast<std::size_t>(k)];
    auto& v = p.w_v[static_cast<std::size_t>(k)];
    fill_xavier(rng, d, d_h, q.mutable_data(), q.size());
    fill_xavier(rng, d, d_h, kk.mutable_data(), kk.size());
    fill_xavier(rng, d, d_h, v.mutable_data(), v.size());
  }
  fill_xavier(rng, d, d, p.w_o.mutable_data(), p.w_o.size());
  p.ln1_gamma = Tensor::full({d}, 1.0);
  p.ln2_gamma = Tensor::full({d}, 1.0);
  fill_xavier(rng, d, d_ff, p.ffn_w1.mutable_data(), p.ffn_w1.size());
  fill_xavier(rng, d_ff, d, p.ffn_w2.mutable_data(), p.ffn_w2.size());
  return p;
}

namespace {

void validate_adjacency(const BoolMatrix& adj, Index n) {
  if (adj.rows() != n || adj.cols() != n) {
    throw ConfigError("glst: adjacency is " + std::to_string(adj.rows()) + "x" +
                      std::to_string(adj.cols()) + " but the representation has " +
                      std::to_string(n) + " rows");
  }
  for (Index i = 0; i < n; ++i) {
    if (!adj(i, i)) {
      throw ConfigError("glst: adjacency lacks a self-loop at node " + std::to_string(i));
    }
    for (Index j = i + 1; j < n; ++j) {
      if (adj(i, j) != adj(j, i)) {
        throw ConfigError("glst: adjacency is not symmetric at (" + std::to_string(i) + ", " +
                          std::to_string(j) + ")");
      }
    }
  }
}

void check_layer_input(const Tensor& e, const EncoderLayerParams& p, const char* name) {
  if (e.rank() != 2 || e.dim(1) != p.dim()) {
    throw ConfigError(std::string(name) + ": input " + e.shape_str() +
                      " does not match layer width " + std::to_string(p.dim()));
  }
}

/// Shared encoder layer. With an adjacency, the attention runs the
/// global-local pair off one score matrix per head; without, plain
/// unmasked attention. Identical code path otherwise, so an all-true
/// adjacency reproduces the plain encoder bit for bit.
Tensor encoder_layer(Tape& tape, const Tensor& e, const EncoderLayerParams& p,
                     const BoolMatrix* adjacency, LocalMaskMode mode, AttentionTrace* trace,
                     AttnCounters* counters) {
  const Index r = e.dim(0);
  const Index h = p.heads();
  const Index d_h = p.dim() / h;
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(d_h));

  Tensor adj01;
  if (adjacency && mode == LocalMaskMode::kZeroProduct) {
    adj01 = Tensor({r, r});
    Real* ap = adj01.mutable_data();
    for (Index i = 0; i < r; ++i) {
      for (Index j = 0; j < r; ++j) ap[i * r + j] = (*adjacency)(i, j) ? 1.0 : 0.0;
    }
  }
  if (trace) {
    trace->alpha_global = Tensor({h, r, r});
    trace->alpha_local = Tensor({h, r, r});
  }

  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(h));
  for (Index k = 0; k < h; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    Tensor q = matmul(tape, e, p.w_q[ks]);
    Tensor kx = matmul(tape, e, p.w_k[ks]);
    Tensor v = matmul(tape, e, p.w_v[ks]);
    Tensor scores = scale(tape, matmul(tape, q, transpose(tape, kx)), inv_sqrt);
    if (counters) counters->score_entries += static_cast<std::uint64_t>(r) * r;

    Tensor global_w = softmax_rows(tape, scores);
    Tensor weights;
    if (!adjacency) {
      weights = global_w;
    } else {
      Tensor local_w = mode == LocalMaskMode::kNegInf
                           ? softmax_rows(tape, scores, adjacency)
                           : softmax_rows(tape, mul(tape, scores, adj01));
      if (trace) {
        const auto bytes = static_cast<std::size_t>(r) * r * sizeof(Real);
        std::memcpy(trace->alpha_global.mutable_data() + k * r * r, global_w.data(), bytes);
        std::memcpy(trace->alpha_local.mutable_data() + k * r * r, local_w.data(), bytes);
      }
      weights = scale(tape, add(tape, local_w, global_w), 0.5);
    }
    head_outs.push_back(matmul(tape, weights, v));
  }

  Tensor att = matmul(tape, concat_cols(tape, head_outs), p.w_o);
  Tensor z = add(tape, layer_norm(tape, att, p.ln1_gamma, p.ln1_beta), e);
  Tensor f = relu(tape, add_row_bias(tape, matmul(tape, z, p.ffn_w1), p.ffn_b1));
  Tensor f2 = add_row_bias(tape, matmul(tape, f, p.ffn_w2), p.ffn_b2);
  return add(tape, layer_norm(tape, f2, p.ln2_gamma, p.ln2_beta), z);
}

}  // namespace

Tensor temporal_encoder(Tape& tape, const Tensor& e, const EncoderLayerParams& params,
                        AttnCounters* counters) {
  check_layer_input(e, params, "temporal_encoder");
  return encoder_layer(tape, e, params, nullptr, LocalMaskMode::kNegInf, nullptr, counters);
}

Tensor glst(Tape& tape, const Tensor& e, const BoolMatrix& adjacency,
            const EncoderLayerParams& params, LocalMaskMode mode, AttentionTrace* trace,
            AttnCounters* counters) {
  check_layer_input(e, params, "glst");
  validate_adjacency(adjacency, e.dim(0));
  return encoder_layer(tape, e, params, &adjacency, mode, trace, counters);
}

}  // namespace stf
