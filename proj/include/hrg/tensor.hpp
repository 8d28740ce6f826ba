#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrg {

using Index = Eigen::Index;

/// Shape of a dense NCHW tensor.
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  Index numel() const { return n * c * h * w; }
  Index plane() const { return h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

/// Dense 4-D tensor in row-major NCHW order, templated on the scalar type.
///
/// Tensors are plain values. Gradient bookkeeping lives in the autograd graph,
/// which owns one value and one gradient tensor per node.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(check(shape)), data_(Vector::Zero(shape.numel())) {}
  Tensor(Shape shape, Scalar value) : shape_(check(shape)), data_(Vector::Constant(shape.numel(), value)) {}
  Tensor(Shape shape, const std::vector<Scalar>& values) : shape_(check(shape)) {
    if (static_cast<Index>(values.size()) != shape.numel()) {
      throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                  " values do not fill shape " + shape.str());
    }
    data_ = Eigen::Map<const Vector>(values.data(), shape.numel());
  }

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor constant(Shape shape, Scalar value) { return Tensor(shape, value); }
  /// Per-channel vector stored as a (1, C, 1, 1) tensor.
  static Tensor channel_vector(Index channels, Scalar value = Scalar(0)) {
    return Tensor(Shape{1, channels, 1, 1}, value);
  }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Vector& values() { return data_; }
  const Vector& values() const { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Index offset(Index n, Index c, Index h, Index w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  Scalar& operator()(Index n, Index c, Index h, Index w) { return data_[offset(n, c, h, w)]; }
  Scalar operator()(Index n, Index c, Index h, Index w) const { return data_[offset(n, c, h, w)]; }

  /// Batch item `n` viewed as a (C, H*W) row-major matrix.
  MatrixMap matrix(Index n) { return MatrixMap(data() + n * shape_.c * shape_.plane(), shape_.c, shape_.plane()); }
  ConstMatrixMap matrix(Index n) const {
    return ConstMatrixMap(data() + n * shape_.c * shape_.plane(), shape_.c, shape_.plane());
  }
  /// One (H, W) image plane.
  MatrixMap channel(Index n, Index c) { return MatrixMap(data() + offset(n, c, 0, 0), shape_.h, shape_.w); }
  ConstMatrixMap channel(Index n, Index c) const {
    return ConstMatrixMap(data() + offset(n, c, 0, 0), shape_.h, shape_.w);
  }

  void set_zero() { data_.setZero(); }

  bool all_finite() const { return data_.allFinite(); }

  template <typename To>
  Tensor<To> cast() const {
    Tensor<To> out(shape_);
    out.values() = data_.template cast<To>();
    return out;
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  static Shape check(Shape s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw std::invalid_argument("tensor: negative dimension in shape " + s.str());
    }
    return s;
  }

  Shape shape_{};
  Vector data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace hrg
