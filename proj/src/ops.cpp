#include "stf/ops.hpp"

#include <cmath>
#include <limits>

namespace stf {

namespace {

constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();

bool participates(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.recording()) return false;
  for (const Tensor* t : inputs) {
    if (tape.node_of(*t) >= 0) return true;
  }
  return false;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ConfigError(std::string(op) + ": expected a rank-2 tensor, got " + t.shape_str());
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                      b.shape_str());
  }
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ConfigError("matmul: inner extents differ: " + a.shape_str() + " * " + b.shape_str());
  }
  Tensor out({a.dim(0), b.dim(1)});
  out.mutable_mat().noalias() = a.mat() * b.mat();
  if (participates(tape, {&a, &b})) {
    OpRecord op;
    op.kind = OpKind::kMatMul;
    op.ins = {tape.node_of(a), tape.node_of(b)};
    op.saved = {a, b};
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out({a.dim(1), a.dim(0)});
  out.mutable_mat().noalias() = a.mat().transpose();
  if (participates(tape, {&a})) {
    OpRecord op;
    op.kind = OpKind::kTranspose;
    op.ins = {tape.node_of(a)};
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

namespace {

Tensor binary_pointwise(Tape& tape, const Tensor& a, const Tensor& b, OpKind kind,
                        const char* name) {
  require_same_shape(a, b, name);
  Tensor out(a.shape());
  switch (kind) {
    case OpKind::kAdd:
      out.mutable_vec() = a.vec() + b.vec();
      break;
    case OpKind::kSub:
      out.mutable_vec() = a.vec() - b.vec();
      break;
    case OpKind::kMul:
      out.mutable_vec() = a.vec().cwiseProduct(b.vec());
      break;
    default:
      break;
  }
  if (participates(tape, {&a, &b})) {
    OpRecord op;
    op.kind = kind;
    op.ins = {tape.node_of(a), tape.node_of(b)};
    if (kind == OpKind::kMul) op.saved = {a, b};
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_pointwise(tape, a, b, OpKind::kAdd, "add");
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_pointwise(tape, a, b, OpKind::kSub, "sub");
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_pointwise(tape, a, b, OpKind::kMul, "mul");
}

Tensor scale(Tape& tape, const Tensor& a, Real c) {
  Tensor out(a.shape());
  out.mutable_vec() = a.vec() * c;
  if (participates(tape, {&a})) {
    OpRecord op;
    op.kind = OpKind::kScale;
    op.ins = {tape.node_of(a)};
    op.s0 = c;
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

Tensor add_scalar(Tape& tape, const Tensor& a, Real c) {
  Tensor out(a.shape());
  out.mutable_vec() = a.vec().array() + c;
  if (participates(tape, {&a})) {
    OpRecord op;
    op.kind = OpKind::kAddScalar;
    op.ins = {tape.node_of(a)};
    op.s0 = c;
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
  Tensor out(a.shape());
  out.mutable_vec() = a.vec().cwiseMax(0.0);
  if (participates(tape, {&a})) {
    OpRecord op;
    op.kind = OpKind::kRelu;
    op.ins = {tape.node_of(a)};
    op.saved = {a};
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& a, const BoolMatrix* mask) {
  require_rank2(a, "softmax_rows");
  const Index r = a.dim(0);
  const Index c = a.dim(1);
  if (mask && (mask->rows() != r || mask->cols() != c)) {
    throw ConfigError("softmax_rows: mask shape [" + std::to_string(mask->rows()) + "x" +
                      std::to_string(mask->cols()) + "] does not match " + a.shape_str());
  }
  Tensor out({r, c});
  const Real* ap = a.data();
  Real* op_ = out.mutable_data();
  for (Index i = 0; i < r; ++i) {
    const Real* row = ap + i * c;
    Real* orow = op_ + i * c;
    // Masked positions contribute an additive -inf before exponentiation,
    // so they land at exactly 0 after exp.
    Real mx = kNegInf;
    for (Index j = 0; j < c; ++j) {
      const Real v = (mask && !(*mask)(i, j)) ? kNegInf : row[j];
      if (v > mx) mx = v;
    }
    if (mx == kNegInf) {
      throw DataError("softmax_rows: row " + std::to_string(i) +
                      " is fully masked (node with no neighbors and no self-loop)");
    }
    Real s = 0.0;
    for (Index j = 0; j < c; ++j) {
      const Real v = (mask && !(*mask)(i, j)) ? kNegInf : row[j];
      const Real e = std::exp(v - mx);
      orow[j] = e;
      s += e;
    }
    const Real inv = 1.0 / s;
    for (Index j = 0; j < c; ++j) orow[j] *= inv;
  }
  if (participates(tape, {&a})) {
    OpRecord op;
    op.kind = OpKind::kSoftmaxRows;
    op.ins = {tape.node_of(a)};
    op.saved = {out};
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  Real eps) {
  require_rank2(a, "layer_norm");
  const Index r = a.dim(0);
  const Index c = a.dim(1);
  if (eps <= 0.0) {
    throw ConfigError("layer_norm: eps must be > 0, got " + std::to_string(eps));
  }
  if (gamma.size() != c || beta.size() != c) {
    throw ConfigError("layer_norm: affine sizes " + gamma.shape_str() + ", " + beta.shape_str() +
                      " do not match row width " + std::to_string(c));
  }
  Tensor out({r, c});
  Tensor xhat({r, c});
  Tensor inv_std({r});
  const Real* ap = a.data();
  const Real* gp = gamma.data();
  const Real* bp = beta.data();
  Real* op_ = out.mutable_data();
  Real* xp = xhat.mutable_data();
  Real* ip = inv_std.mutable_data();
  for (Index i = 0; i < r; ++i) {
    const Real* row = ap + i * c;
    Real mu = 0.0;
    for (Index j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<Real>(c);
    Real var = 0.0;
    for (Index j = 0; j < c; ++j) {
      const Real d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<Real>(c);
    const Real inv = 1.0 / std::sqrt(var + eps);
    ip[i] = inv;
    for (Index j = 0; j < c; ++j) {
      const Real xh = (row[j] - mu) * inv;
      xp[i * c + j] = xh;
      op_[i * c + j] = gp[j] * xh + bp[j];
    }
  }
  if (participates(tape, {&a, &gamma, &beta})) {
    OpRecord op;
    op.kind = OpKind::kLayerNorm;
    op.ins = {tape.node_of(a), tape.node_of(gamma), tape.node_of(beta)};
    op.saved = {xhat, inv_std, gamma};
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no parts");
  if (parts.size() == 1) return parts[0];
  const Index r = parts[0].dim(0);
  Index total = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != r) {
      throw ConfigError("concat_cols: row mismatch " + parts[0].shape_str() + " vs " +
                        p.shape_str());
    }
    total += p.dim(1);
  }
  Tensor out({r, total});
  Real* op_ = out.mutable_data();
  Index col = 0;
  for (const Tensor& p : parts) {
    const Index pc = p.dim(1);
    const Real* pp = p.data();
    for (Index i = 0; i < r; ++i) {
      std::copy(pp + i * pc, pp + (i + 1) * pc, op_ + i * total + col);
    }
    col += pc;
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || tape.node_of(p) >= 0;
  if (tape.recording() && any) {
    OpRecord op;
    op.kind = OpKind::kConcatCols;
    for (const Tensor& p : parts) {
      op.ins.push_back(tape.node_of(p));
      op.idx.push_back(p.dim(1));
    }
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

Tensor gather_rows(Tape& tape, const Tensor& table, const std::vector<Index>& idx) {
  require_rank2(table, "gather_rows");
  const Index rows = table.dim(0);
  const Index c = table.dim(1);
  Tensor out({static_cast<Index>(idx.size()), c});
  Real* op_ = out.mutable_data();
  const Real* tp = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= rows) {
      throw DataError("gather_rows: index " + std::to_string(idx[i]) + " out of range [0, " +
                      std::to_string(rows) + ")");
    }
    std::copy(tp + idx[i] * c, tp + (idx[i] + 1) * c, op_ + static_cast<Index>(i) * c);
  }
  if (participates(tape, {&table})) {
    OpRecord op;
    op.kind = OpKind::kGatherRows;
    op.ins = {tape.node_of(table)};
    op.idx = idx;
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

Tensor add_row_bias(Tape& tape, const Tensor& a, const Tensor& bias) {
  require_rank2(a, "add_row_bias");
  if (bias.rank() != 1 || bias.size() != a.dim(1)) {
    throw ConfigError("add_row_bias: bias " + bias.shape_str() + " does not match row width of " +
                      a.shape_str());
  }
  Tensor out(a.shape());
  out.mutable_mat() = a.mat().rowwise() + bias.mat().row(0);
  if (participates(tape, {&a, &bias})) {
    OpRecord op;
    op.kind = OpKind::kAddRowBias;
    op.ins = {tape.node_of(a), tape.node_of(bias)};
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::scalar(a.vec().sum());
  if (participates(tape, {&a})) {
    OpRecord op;
    op.kind = OpKind::kSum;
    op.ins = {tape.node_of(a)};
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

Tensor huber_loss(Tape& tape, const Tensor& pred, const Tensor& target, Real delta) {
  if (delta <= 0.0) {
    throw ConfigError("huber_loss: delta must be > 0, got " + std::to_string(delta));
  }
  require_same_shape(pred, target, "huber_loss");
  const Index n = pred.size();
  Tensor residual(pred.shape());
  residual.mutable_vec() = pred.vec() - target.vec();
  const Real* rp = residual.data();
  Real acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Real ar = std::abs(rp[i]);
    acc += ar <= delta ? 0.5 * rp[i] * rp[i] : delta * (ar - 0.5 * delta);
  }
  Tensor out = Tensor::scalar(acc / static_cast<Real>(n));
  if (participates(tape, {&pred, &target})) {
    OpRecord op;
    op.kind = OpKind::kHuber;
    op.ins = {tape.node_of(pred), tape.node_of(target)};
    op.saved = {residual};
    op.s0 = delta;
    op.out = tape.make_node(out);
    tape.push(std::move(op));
  }
  return out;
}

// ----------------------------------------------------------------------------
// Reverse pass. Lives here so the forward and backward halves of every op
// stay in one file.

GradientMap Tape::backward(const Tensor& loss) const {
  if (loss.size() != 1) {
    throw NumericError("backward: loss must be a scalar, got " + loss.shape_str());
  }
  if (node_of(loss) < 0) {
    throw NumericError("backward: loss was not produced within this computation record");
  }
  GradientMap gm;
  gm.tape_id_ = id_;
  gm.grads_.resize(node_shapes_.size());
  gm.slot(node_of(loss)) = Tensor::scalar(1.0);

  auto grad_for = [&](int node) -> Tensor& {
    Tensor& g = gm.slot(node);
    if (g.empty()) g = zeros_like_node(node);
    return g;
  };

  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const OpRecord& op = *it;
    const Tensor& gout = gm.slot(op.out);
    if (gout.empty()) continue;
    switch (op.kind) {
      case OpKind::kMatMul: {
        const Tensor& a = op.saved[0];
        const Tensor& b = op.saved[1];
        if (op.ins[0] >= 0) {
          grad_for(op.ins[0]).mutable_mat().noalias() += gout.mat() * b.mat().transpose();
        }
        if (op.ins[1] >= 0) {
          grad_for(op.ins[1]).mutable_mat().noalias() += a.mat().transpose() * gout.mat();
        }
        break;
      }
      case OpKind::kTranspose: {
        if (op.ins[0] >= 0) {
          grad_for(op.ins[0]).mutable_mat().noalias() += gout.mat().transpose();
        }
        break;
      }
      case OpKind::kAdd: {
        if (op.ins[0] >= 0) grad_for(op.ins[0]).mutable_vec() += gout.vec();
        if (op.ins[1] >= 0) grad_for(op.ins[1]).mutable_vec() += gout.vec();
        break;
      }
      case OpKind::kSub: {
        if (op.ins[0] >= 0) grad_for(op.ins[0]).mutable_vec() += gout.vec();
        if (op.ins[1] >= 0) grad_for(op.ins[1]).mutable_vec() -= gout.vec();
        break;
      }
      case OpKind::kMul: {
        const Tensor& a = op.saved[0];
        const Tensor& b = op.saved[1];
        if (op.ins[0] >= 0) {
          grad_for(op.ins[0]).mutable_vec() += gout.vec().cwiseProduct(b.vec());
        }
        if (op.ins[1] >= 0) {
          grad_for(op.ins[1]).mutable_vec() += gout.vec().cwiseProduct(a.vec());
        }
        break;
      }
      case OpKind::kScale: {
        if (op.ins[0] >= 0) grad_for(op.ins[0]).mutable_vec() += op.s0 * gout.vec();
        break;
      }
      case OpKind::kAddScalar:
      case OpKind::kSum: {
        if (op.ins[0] >= 0) {
          Tensor& g = grad_for(op.ins[0]);
          if (op.kind == OpKind::kAddScalar) {
            g.mutable_vec() += gout.vec();
          } else {
            g.mutable_vec().array() += gout.scalar_value();
          }
        }
        break;
      }
      case OpKind::kRelu: {
        if (op.ins[0] >= 0) {
          const Tensor& a = op.saved[0];
          grad_for(op.ins[0]).mutable_vec().array() +=
              gout.vec().array() * (a.vec().array() > 0.0).cast<Real>();
        }
        break;
      }
      case OpKind::kSoftmaxRows: {
        if (op.ins[0] >= 0) {
          const Tensor& y = op.saved[0];
          const Index r = y.dim(0);
          const Index c = y.dim(1);
          Tensor& g = grad_for(op.ins[0]);
          Real* gp = g.mutable_data();
          const Real* yp = y.data();
          const Real* go = gout.data();
          for (Index i = 0; i < r; ++i) {
            Real dot = 0.0;
            for (Index j = 0; j < c; ++j) dot += go[i * c + j] * yp[i * c + j];
            for (Index j = 0; j < c; ++j) {
              gp[i * c + j] += yp[i * c + j] * (go[i * c + j] - dot);
            }
          }
        }
        break;
      }
      case OpKind::kLayerNorm: {
        const Tensor& xhat = op.saved[0];
        const Tensor& inv_std = op.saved[1];
        const Tensor& gamma = op.saved[2];
        const Index r = xhat.dim(0);
        const Index c = xhat.dim(1);
        const Real* xp = xhat.data();
        const Real* ip = inv_std.data();
        const Real* gp = gamma.data();
        const Real* go = gout.data();
        if (op.ins[1] >= 0) {
          Real* dg = grad_for(op.ins[1]).mutable_data();
          for (Index i = 0; i < r; ++i) {
            for (Index j = 0; j < c; ++j) dg[j] += go[i * c + j] * xp[i * c + j];
          }
        }
        if (op.ins[2] >= 0) {
          Real* db = grad_for(op.ins[2]).mutable_data();
          for (Index i = 0; i < r; ++i) {
            for (Index j = 0; j < c; ++j) db[j] += go[i * c + j];
          }
        }
        if (op.ins[0] >= 0) {
          Real* da = grad_for(op.ins[0]).mutable_data();
          const Real invc = 1.0 / static_cast<Real>(c);
          for (Index i = 0; i < r; ++i) {
            Real m1 = 0.0, m2 = 0.0;
            for (Index j = 0; j < c; ++j) {
              const Real dxh = go[i * c + j] * gp[j];
              m1 += dxh;
              m2 += dxh * xp[i * c + j];
            }
            m1 *= invc;
            m2 *= invc;
            for (Index j = 0; j < c; ++j) {
              const Real dxh = go[i * c + j] * gp[j];
              da[i * c + j] += ip[i] * (dxh - m1 - xp[i * c + j] * m2);
            }
          }
        }
        break;
      }
      case OpKind::kConcatCols: {
        const Index r = gout.dim(0);
        const Index total = gout.dim(1);
        const Real* go = gout.data();
        Index col = 0;
        for (std::size_t k = 0; k < op.ins.size(); ++k) {
          const Index pc = op.idx[k];
          if (op.ins[k] >= 0) {
            Real* gp = grad_for(op.ins[k]).mutable_data();
            for (Index i = 0; i < r; ++i) {
              for (Index j = 0; j < pc; ++j) gp[i * pc + j] += go[i * total + col + j];
            }
          }
          col += pc;
        }
        break;
      }
      case OpKind::kGatherRows: {
        if (op.ins[0] >= 0) {
          Tensor& g = grad_for(op.ins[0]);
          const Index c = g.dim(1);
          Real* gp = g.mutable_data();
          const Real* go = gout.data();
          for (std::size_t i = 0; i < op.idx.size(); ++i) {
            Real* dst = gp + op.idx[i] * c;
            const Real* src = go + static_cast<Index>(i) * c;
            for (Index j = 0; j < c; ++j) dst[j] += src[j];
          }
        }
        break;
      }
      case OpKind::kAddRowBias: {
        if (op.ins[0] >= 0) grad_for(op.ins[0]).mutable_vec() += gout.vec();
        if (op.ins[1] >= 0) {
          grad_for(op.ins[1]).mutable_mat() += gout.mat().colwise().sum();
        }
        break;
      }
      case OpKind::kHuber: {
        const Tensor& residual = op.saved[0];
        const Real delta = op.s0;
        const Real coeff = gout.scalar_value() / static_cast<Real>(residual.size());
        auto clipped = residual.vec().array().max(-delta).min(delta);
        if (op.ins[0] >= 0) {
          grad_for(op.ins[0]).mutable_vec().array() += coeff * clipped;
        }
        if (op.ins[1] >= 0) {
          grad_for(op.ins[1]).mutable_vec().array() -= coeff * clipped;
        }
        break;
      }
    }
  }
  return gm;
}

}  // namespace stf
