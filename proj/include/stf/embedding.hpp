#pragma once

#include "stf/ops.hpp"
#include "stf/rng.hpp"

namespace stf {

/// Column widths of the two unified representations.
/// E_t rows are d_tf + d_tod + d_dow wide, E_s rows d_sf + d_spatial.
struct EmbeddingDims {
  Index d_tf = 64;
  Index d_tod = 32;
  Index d_dow = 32;
  Index d_sf = 96;
  Index d_spatial = 32;
  Index temporal_width() const { return d_tf + d_tod + d_dow; }
  Index spatial_width() const { return d_sf + d_spatial; }
};

struct EmbeddingParams {
  Tensor w_tf, b_tf;       // N x d_tf, d_tf
  Tensor w_sf, b_sf;       // T x d_sf, d_sf
  Tensor tod_table;        // steps_per_day x d_tod
  Tensor dow_table;        // 7 x d_dow
  Tensor spatial_table;    // N x d_spatial
  Tensor noise;            // T x N, bound by sqrt(6/(T+N)) at init

  static EmbeddingParams init(Index t_in, Index n_nodes, int steps_per_day,
                              const EmbeddingDims& dims, Rng& rng);
  static EmbeddingParams build(Index t_in, Index n_nodes, int steps_per_day,
                               const EmbeddingDims& dims);  // zero-filled
};

/// The unified representation: every temporal row mixes all nodes, every
/// spatial row mixes all time steps.
struct UnifiedRep {
  Tensor temporal;  // T x D_t
  Tensor spatial;   // N x D_s
};

/// Learnable additive noise on the input window; active only in training.
Tensor inject_noise(Tape& tape, const Tensor& x, const EmbeddingParams& params, bool training);

/// Project a normalized T x N window into (E_t, E_s): feature projections
/// plus gathered calendar tables and the spatial identity table, columns
/// concatenated in fixed order (feature | tod | dow and feature | spatial).
UnifiedRep embed(Tape& tape, const Tensor& x, const std::vector<int>& tod_idx,
                 const std::vector<int>& dow_idx, const EmbeddingParams& params);

}  // namespace stf
