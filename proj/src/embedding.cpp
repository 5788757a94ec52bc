#include "stf/embedding.hpp"

namespace stf {

EmbeddingParams EmbeddingParams::build(Index t_in, Index n_nodes, int steps_per_day,
                                       const EmbeddingDims& dims) {
  if (t_in < 1 || n_nodes < 1) {
    throw ConfigError("embedding: T and N must be >= 1");
  }
  for (Index d : {dims.d_tf, dims.d_tod, dims.d_dow, dims.d_sf, dims.d_spatial}) {
    if (d < 1) throw ConfigError("embedding: all dimension widths must be >= 1");
  }
  EmbeddingParams p;
  p.w_tf = Tensor({n_nodes, dims.d_tf});
  p.b_tf = Tensor({dims.d_tf});
  p.w_sf = Tensor({t_in, dims.d_sf});
  p.b_sf = Tensor({dims.d_sf});
  p.tod_table = Tensor({static_cast<Index>(steps_per_day), dims.d_tod});
  p.dow_table = Tensor({7, dims.d_dow});
  p.spatial_table = Tensor({n_nodes, dims.d_spatial});
  p.noise = Tensor({t_in, n_nodes});
  return p;
}

EmbeddingParams EmbeddingParams::init(Index t_in, Index n_nodes, int steps_per_day,
                                      const EmbeddingDims& dims, Rng& rng) {
  EmbeddingParams p = build(t_in, n_nodes, steps_per_day, dims);
  fill_xavier(rng, n_nodes, dims.d_tf, p.w_tf.mutable_data(), p.w_tf.size());
  fill_xavier(rng, t_in, dims.d_sf, p.w_sf.mutable_data(), p.w_sf.size());
  fill_xavier(rng, steps_per_day, dims.d_tod, p.tod_table.mutable_data(), p.tod_table.size());
  fill_xavier(rng, 7, dims.d_dow, p.dow_table.mutable_data(), p.dow_table.size());
  fill_xavier(rng, n_nodes, dims.d_spatial, p.spatial_table.mutable_data(),
              p.spatial_table.size());
  fill_xavier(rng, t_in, n_nodes, p.noise.mutable_data(), p.noise.size());
  return p;
}

Tensor inject_noise(Tape& tape, const Tensor& x, const EmbeddingParams& params, bool training) {
  if (!training) return x;
  return add(tape, x, params.noise);
}

UnifiedRep embed(Tape& tape, const Tensor& x, const std::vector<int>& tod_idx,
                 const std::vector<int>& dow_idx, const EmbeddingParams& params) {
  if (x.rank() != 2) {
    throw ConfigError("embed: expected a rank-2 window, got " + x.shape_str());
  }
  const Index t = x.dim(0);
  const Index n = x.dim(1);
  if (t != params.w_sf.dim(0)) {
    throw ConfigError("embed: window length " + std::to_string(t) + " != configured T " +
                      std::to_string(params.w_sf.dim(0)) +
                      " (the spatial feature projection is T-specific)");
  }
  if (n != params.w_tf.dim(0)) {
    throw ConfigError("embed: window has " + std::to_string(n) + " nodes but parameters expect " +
                      std::to_string(params.w_tf.dim(0)));
  }
  if (static_cast<Index>(tod_idx.size()) != t || static_cast<Index>(dow_idx.size()) != t) {
    throw ConfigError("embed: calendar index arrays must have one entry per time step");
  }
  std::vector<Index> tod(tod_idx.begin(), tod_idx.end());
  std::vector<Index> dow(dow_idx.begin(), dow_idx.end());

  Tensor e_tf = add_row_bias(tape, matmul(tape, x, params.w_tf), params.b_tf);
  Tensor e_sf = add_row_bias(tape, matmul(tape, transpose(tape, x), params.w_sf), params.b_sf);
  Tensor e_tod = gather_rows(tape, params.tod_table, tod);
  Tensor e_dow = gather_rows(tape, params.dow_table, dow);

  UnifiedRep rep;
  rep.temporal = concat_cols(tape, {e_tf, e_tod, e_dow});
  rep.spatial = concat_cols(tape, {e_sf, params.spatial_table});
  return rep;
}

}  // namespace stf
