#pragma once

#include "stf/tape.hpp"

#include <vector>

namespace stf {

// Differentiable tensor operations. Each takes the active tape first; when
// the tape is not recording (or no operand participates), only the value is
// computed. Shape violations throw ConfigError with both shapes spelled out.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, Real c);
Tensor add_scalar(Tape& tape, const Tensor& a, Real c);
Tensor relu(Tape& tape, const Tensor& a);

/// Row-wise softmax. Masked positions (mask false) get weight exactly 0 via
/// an additive -inf before exponentiation; rows are stabilized by max
/// subtraction. A fully masked row is fatal and names the row.
Tensor softmax_rows(Tape& tape, const Tensor& a, const BoolMatrix* mask = nullptr);

/// Row-wise layer normalization with affine (gamma, beta), eps > 0.
Tensor layer_norm(Tape& tape, const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  Real eps = 1e-5);

/// Concatenate rank-2 parts along columns; gradient splits back per part.
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

/// out[i, :] = table[idx[i], :]; gradient scatter-adds into the table.
Tensor gather_rows(Tape& tape, const Tensor& table, const std::vector<Index>& idx);

/// Add a length-c bias vector to every row of an r x c matrix.
Tensor add_row_bias(Tape& tape, const Tensor& a, const Tensor& bias);

/// Sum of all entries, as a scalar tensor.
Tensor sum(Tape& tape, const Tensor& a);

/// Mean Huber loss over all entries; piecewise quadratic within |r| <= delta,
/// linear outside, continuous first derivative at the junction.
Tensor huber_loss(Tape& tape, const Tensor& pred, const Tensor& target, Real delta);

}  // namespace stf
