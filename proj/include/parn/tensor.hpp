#pragma once

#include <Eigen/Core>

#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "parn/errors.hpp"

namespace parn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrixXd>;
using ConstMatrixMap = Eigen::Map<const RowMatrixXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

std::string shape_string(const Shape& shape);
Index shape_size(const Shape& shape);

/// Dense N-dimensional array of doubles in row-major order.
///
/// The flat storage is an Eigen array, so elementwise work stays in Eigen
/// expressions; rank-2 data is exposed as an Eigen matrix map for products.
class DenseTensor {
public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape)
      : shape_(std::move(shape)),
        data_(Eigen::ArrayXd::Zero(shape_size(shape_))) {}
  DenseTensor(Shape shape, Eigen::ArrayXd data);

  static DenseTensor zeros(Shape shape) { return DenseTensor(std::move(shape)); }
  static DenseTensor constant(Shape shape, double value);
  static DenseTensor scalar(double value);
  static DenseTensor from_matrix(const Eigen::Ref<const RowMatrixXd>& m);
  static DenseTensor from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);
  /// Rank-2 tensor from nested braces, e.g. {{1,2},{3,4}}.
  static DenseTensor from_rows(
      std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  Index dim(Index i) const { return shape_[static_cast<std::size_t>(i)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  Eigen::ArrayXd& array() { return data_; }
  const Eigen::ArrayXd& array() const { return data_; }

  double operator[](Index flat) const { return data_[flat]; }
  double& operator[](Index flat) { return data_[flat]; }
  double operator()(Index i, Index j) const;
  double& operator()(Index i, Index j);

  /// Rank-2 view; throws DimensionError on other ranks.
  MatrixMap matrix();
  ConstMatrixMap matrix() const;
  /// Flat data viewed as a rows x cols matrix (row-major), any rank.
  MatrixMap matrix(Index rows, Index cols);
  ConstMatrixMap matrix(Index rows, Index cols) const;
  VectorMap vector() { return VectorMap(data_.data(), data_.size()); }
  ConstVectorMap vector() const {
    return ConstVectorMap(data_.data(), data_.size());
  }

  /// Same flat data under a new shape of equal total size.
  DenseTensor reshaped(Shape shape) const;

  bool same_shape(const DenseTensor& other) const {
    return shape_ == other.shape_;
  }
  bool all_finite() const { return data_.isFinite().all(); }

private:
  Shape shape_;
  Eigen::ArrayXd data_;
};

/// Throws DimensionError naming both shapes when they differ.
void require_same_shape(const DenseTensor& a, const DenseTensor& b,
                        const char* where);

}  // namespace parn
