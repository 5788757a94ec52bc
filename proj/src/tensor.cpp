#include "stf/tensor.hpp"

#include <cassert>
#include <sstream>

namespace stf {

std::string shape_to_string(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<Index> shape) {
  if (shape.empty() || shape.size() > 3) {
    throw ConfigError("tensor rank must be 1, 2, or 3; got shape " + shape_to_string(shape));
  }
  Index total = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] < 1) {
      throw ConfigError("tensor extents must be >= 1; got shape " + shape_to_string(shape));
    }
    dims_[i] = shape[i];
    total *= shape[i];
  }
  rank_ = static_cast<int>(shape.size());
  buf_ = std::make_shared<AlignedBuffer>(static_cast<std::size_t>(total), 0.0);
}

Tensor Tensor::full(std::vector<Index> shape, Real value) {
  Tensor t(std::move(shape));
  for (auto& x : *t.buf_) x = value;
  return t;
}

Tensor Tensor::scalar(Real value) {
  Tensor t({1});
  (*t.buf_)[0] = value;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = static_cast<Index>(rows.begin()->size());
  Tensor t({r, c});
  Real* p = t.buf_->data();
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != c) {
      throw ConfigError("from_rows: ragged row lengths");
    }
    for (Real v : row) *p++ = v;
  }
  return t;
}

Tensor Tensor::from_vector(std::vector<Real> values) {
  Tensor t({static_cast<Index>(values.size())});
  std::copy(values.begin(), values.end(), t.buf_->begin());
  return t;
}

Tensor Tensor::from_matrix(const RowMatrix& m) {
  Tensor t({m.rows(), m.cols()});
  t.mutable_mat() = m;
  return t;
}

Index Tensor::dim(int axis) const {
  assert(axis >= 0 && axis < rank_);
  return dims_[axis];
}

Index Tensor::size() const {
  if (!buf_) return 0;
  return static_cast<Index>(buf_->size());
}

std::vector<Index> Tensor::shape() const {
  return std::vector<Index>(dims_.begin(), dims_.begin() + rank_);
}

std::string Tensor::shape_str() const { return shape_to_string(shape()); }

bool Tensor::same_shape(const Tensor& other) const {
  return rank_ == other.rank_ && dims_ == other.dims_;
}

const Real* Tensor::data() const { return buf_->data(); }

Real* Tensor::mutable_data() {
  if (buf_.use_count() > 1) {
    buf_ = std::make_shared<AlignedBuffer>(*buf_);
  }
  return buf_->data();
}

Real Tensor::operator()(Index i) const { return (*buf_)[static_cast<std::size_t>(i)]; }

Real Tensor::operator()(Index i, Index j) const {
  assert(rank_ == 2);
  return (*buf_)[static_cast<std::size_t>(i * dims_[1] + j)];
}

Real Tensor::operator()(Index i, Index j, Index k) const {
  assert(rank_ == 3);
  return (*buf_)[static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k)];
}

Real Tensor::scalar_value() const {
  if (size() != 1) {
    throw ConfigError("scalar_value() on tensor of shape " + shape_str());
  }
  return (*buf_)[0];
}

ConstMatrixMap Tensor::mat() const {
  if (rank_ == 1) return ConstMatrixMap(buf_->data(), 1, dims_[0]);
  assert(rank_ == 2);
  return ConstMatrixMap(buf_->data(), dims_[0], dims_[1]);
}

MatrixMap Tensor::mutable_mat() {
  Real* p = mutable_data();
  if (rank_ == 1) return MatrixMap(p, 1, dims_[0]);
  assert(rank_ == 2);
  return MatrixMap(p, dims_[0], dims_[1]);
}

ConstVectorMap Tensor::vec() const { return ConstVectorMap(buf_->data(), size()); }

VectorMap Tensor::mutable_vec() { return VectorMap(mutable_data(), size()); }

Tensor Tensor::slice0(Index i) const {
  assert(rank_ == 3);
  assert(i >= 0 && i < dims_[0]);
  Tensor out({dims_[1], dims_[2]});
  const Real* src = buf_->data() + i * dims_[1] * dims_[2];
  std::copy(src, src + dims_[1] * dims_[2], out.mutable_data());
  return out;
}

Tensor Tensor::clone() const {
  Tensor out;
  out.dims_ = dims_;
  out.rank_ = rank_;
  if (buf_) out.buf_ = std::make_shared<AlignedBuffer>(*buf_);
  return out;
}

}  // namespace stf
