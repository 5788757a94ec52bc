#include "stf/tape.hpp"

#include <atomic>

namespace stf {

namespace {
std::atomic<std::uint64_t> g_next_tape_id{1};
}

Tape::Tape(bool recording)
    : id_(g_next_tape_id.fetch_add(1, std::memory_order_relaxed)), recording_(recording) {}

void Tape::watch(Tensor& t) {
  if (!recording_) return;
  make_node(t);
}

int Tape::make_node(Tensor& out) {
  NodeShape ns;
  ns.rank = out.rank();
  ns.dims = {0, 0, 0};
  for (int i = 0; i < out.rank(); ++i) ns.dims[static_cast<std::size_t>(i)] = out.dim(i);
  node_shapes_.push_back(ns);
  const int node = static_cast<int>(node_shapes_.size()) - 1;
  out.bind(id_, node);
  return node;
}

Tensor Tape::zeros_like_node(int node) const {
  const NodeShape& ns = node_shapes_[static_cast<std::size_t>(node)];
  std::vector<Index> shape(ns.dims.begin(), ns.dims.begin() + ns.rank);
  return Tensor::zeros(std::move(shape));
}

std::size_t Tape::bytes() const {
  std::size_t total = node_shapes_.size() * sizeof(NodeShape);
  for (const OpRecord& op : ops_) {
    total += sizeof(OpRecord);
    total += op.ins.capacity() * sizeof(int);
    total += op.idx.capacity() * sizeof(Index);
    for (const Tensor& t : op.saved) {
      total += static_cast<std::size_t>(t.size()) * sizeof(Real);
    }
  }
  return total;
}

bool GradientMap::contains(const Tensor& t) const {
  return t.tape_id() == tape_id_ && t.node() >= 0 &&
         t.node() < static_cast<int>(grads_.size()) &&
         !grads_[static_cast<std::size_t>(t.node())].empty();
}

const Tensor& GradientMap::at(const Tensor& t) const {
  if (t.tape_id() != tape_id_) {
    throw ConfigError("gradient lookup for a tensor not bound to this tape");
  }
  if (!contains(t)) {
    throw ConfigError("no gradient recorded for node " + std::to_string(t.node()));
  }
  return grads_[static_cast<std::size_t>(t.node())];
}

}  // namespace stf
