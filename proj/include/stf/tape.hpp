#pragma once

#include "stf/tensor.hpp"

#include <cstddef>
#include <vector>

namespace stf {

enum class OpKind : std::uint8_t {
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kRelu,
  kSoftmaxRows,
  kLayerNorm,
  kConcatCols,
  kGatherRows,
  kAddRowBias,
  kSum,
  kHuber,
};

/// One recorded operation: kind, input node ids (-1 for constant operands),
/// output node id, and whatever values the reverse pass needs.
struct OpRecord {
  OpKind kind;
  std::vector<int> ins;
  int out = -1;
  std::vector<Tensor> saved;
  Real s0 = 0.0;
  std::vector<Index> idx;  // gather indices / concat widths
};

/// Gradients keyed by node id of one tape; same shape as the parameter.
class GradientMap {
 public:
  bool contains(const Tensor& t) const;
  const Tensor& at(const Tensor& t) const;

  Tensor& slot(int node) { return grads_[static_cast<std::size_t>(node)]; }
  const Tensor& slot(int node) const { return grads_[static_cast<std::size_t>(node)]; }

 private:
  friend class Tape;
  std::uint64_t tape_id_ = 0;
  std::vector<Tensor> grads_;
};

/// The computation record for one forward pass. Operations are appended in
/// execution order, so every input node precedes its consumer; the reverse
/// pass visits them once, back to front. Confined to one thread.
class Tape {
 public:
  explicit Tape(bool recording = true);

  std::uint64_t id() const { return id_; }
  bool recording() const { return recording_; }

  /// Register a leaf (parameter or input) for differentiation; binds the
  /// tensor's node handle in place. No-op when not recording.
  void watch(Tensor& t);

  /// Node id of t on this tape, or -1.
  int node_of(const Tensor& t) const {
    return t.tape_id() == id_ ? t.node() : -1;
  }

  /// Reverse pass from a scalar loss recorded on this tape. Deterministic:
  /// identical inputs give bitwise-identical gradients.
  GradientMap backward(const Tensor& loss) const;

  Index num_nodes() const { return static_cast<Index>(node_shapes_.size()); }
  Index num_ops() const { return static_cast<Index>(ops_.size()); }

  /// Exact bytes held by saved values and recorded node metadata, for
  /// memory accounting.
  std::size_t bytes() const;

  // Used by the op implementations.
  int make_node(Tensor& out);
  void push(OpRecord op) { ops_.push_back(std::move(op)); }

 private:
  struct NodeShape {
    std::array<Index, 3> dims;
    int rank;
  };
  Tensor zeros_like_node(int node) const;

  std::uint64_t id_;
  bool recording_;
  std::vector<NodeShape> node_shapes_;
  std::vector<OpRecord> ops_;
};

}  // namespace stf
