#pragma once

#include "stf/ops.hpp"
#include "stf/rng.hpp"

namespace stf {

/// How the adjacency enters the local attention branch. kNegInf masks
/// non-adjacent score entries with additive -inf before the softmax (their
/// weight is exactly 0). kZeroProduct multiplies scores by the 0/1
/// adjacency before the softmax instead, kept for comparison.
enum class LocalMaskMode { kNegInf, kZeroProduct };

/// One encoder layer: per-head Q/K/V projections, output projection, two
/// layer norms and a 4x feed-forward.
struct EncoderLayerParams {
  std::vector<Tensor> w_q, w_k, w_v;  // per head, D x D/h
  Tensor w_o;                         // D x D
  Tensor ln1_gamma, ln1_beta;
  Tensor ln2_gamma, ln2_beta;
  Tensor ffn_w1, ffn_b1;  // D x 4D, 4D
  Tensor ffn_w2, ffn_b2;  // 4D x D, D

  Index heads() const { return static_cast<Index>(w_q.size()); }
  Index dim() const { return w_o.dim(0); }

  static EncoderLayerParams init(Index d, Index heads, Rng& rng);
  static EncoderLayerParams build(Index d, Index heads);  // zero-filled
};

/// Post-softmax weights of both branches, per head. Row-stochastic; the
/// local matrix is 0 wherever the adjacency is false (kNegInf mode).
struct AttentionTrace {
  Tensor alpha_global;  // h x r x r
  Tensor alpha_local;   // h x r x r
};

/// Exact count of materialized attention-score scalars (one r x r buffer
/// per head per attention), for the complexity accounting.
struct AttnCounters {
  std::uint64_t score_entries = 0;
};

/// Standard Transformer encoder layer over the rows of e (unmasked
/// self-attention, scores QK^T/sqrt(D_h)), arranged as
/// Z = LN(Att(E)) + E; out = LN(FFN(Z)) + Z.
Tensor temporal_encoder(Tape& tape, const Tensor& e, const EncoderLayerParams& params,
                        AttnCounters* counters = nullptr);

/// Global-local spatial encoder layer: one score matrix per head feeds two
/// softmaxes, unmasked and adjacency-masked, and the head output is their
/// average times V. Residual/LN/FFN arrangement as in temporal_encoder.
Tensor glst(Tape& tape, const Tensor& e, const BoolMatrix& adjacency,
            const EncoderLayerParams& params, LocalMaskMode mode = LocalMaskMode::kNegInf,
            AttentionTrace* trace = nullptr, AttnCounters* counters = nullptr);

}  // namespace stf
