#pragma once

#include "stf/common.hpp"

#include <array>
#include <initializer_list>
#include <memory>
#include <vector>

namespace stf {

/// Tensor storage is always Eigen-aligned. Alignment-dependent SIMD
/// head/tail splits would otherwise make summation order depend on heap
/// addresses and break bitwise reproducibility.
using AlignedBuffer = std::vector<Real, Eigen::aligned_allocator<Real>>;

/// Dense row-major tensor of 64-bit reals, rank 1 to 3.
///
/// Copies share the underlying buffer; a mutable access clones the buffer
/// when it is aliased, so values already consumed by a recorded operation
/// can never change behind the tape's back.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Index> shape);  // zero-filled

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<Index> shape, Real value);
  static Tensor scalar(Real value);
  static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows);
  static Tensor from_vector(std::vector<Real> values);
  static Tensor from_matrix(const RowMatrix& m);

  bool empty() const { return buf_ == nullptr; }
  int rank() const { return rank_; }
  Index dim(int axis) const;
  Index size() const;
  std::vector<Index> shape() const;
  std::string shape_str() const;  // "[4x3]", for error messages
  bool same_shape(const Tensor& other) const;

  const Real* data() const;
  Real* mutable_data();  // clones first when the buffer is aliased

  Real operator()(Index i) const;
  Real operator()(Index i, Index j) const;
  Real operator()(Index i, Index j, Index k) const;
  Real scalar_value() const;  // size() == 1

  /// Rank-2 (or rank-1, read as a single row) Eigen view.
  ConstMatrixMap mat() const;
  MatrixMap mutable_mat();
  ConstVectorMap vec() const;  // flat view
  VectorMap mutable_vec();

  /// Deep copy of slice i along the leading extent of a rank-3 tensor.
  Tensor slice0(Index i) const;

  Tensor clone() const;

  // Autodiff handle: (tape id, node id). Managed by Tape::watch and the
  // recorded operations; 0/-1 when the tensor does not participate.
  std::uint64_t tape_id() const { return tape_id_; }
  int node() const { return node_; }
  void bind(std::uint64_t tape_id, int node) {
    tape_id_ = tape_id;
    node_ = node;
  }

 private:
  std::array<Index, 3> dims_{0, 0, 0};
  int rank_ = 0;
  std::shared_ptr<AlignedBuffer> buf_;
  std::uint64_t tape_id_ = 0;
  int node_ = -1;
};

std::string shape_to_string(const std::vector<Index>& shape);

}  // namespace stf
