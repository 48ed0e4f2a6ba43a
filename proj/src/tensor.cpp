#include "parn/tensor.hpp"

#include <sstream>

namespace parn {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw DimensionError("negative extent in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

DenseTensor::DenseTensor(Shape shape, Eigen::ArrayXd data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

DenseTensor DenseTensor::constant(Shape shape, double value) {
  const Index n = shape_size(shape);
  return DenseTensor(std::move(shape), Eigen::ArrayXd::Constant(n, value));
}

DenseTensor DenseTensor::scalar(double value) {
  return DenseTensor(Shape{}, Eigen::ArrayXd::Constant(1, value));
}

DenseTensor DenseTensor::from_matrix(const Eigen::Ref<const RowMatrixXd>& m) {
  DenseTensor t(Shape{m.rows(), m.cols()});
  t.matrix() = m;
  return t;
}

DenseTensor DenseTensor::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  DenseTensor t(Shape{v.size()});
  t.vector() = v;
  return t;
}

DenseTensor DenseTensor::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = r > 0 ? static_cast<Index>(rows.begin()->size()) : 0;
  DenseTensor t(Shape{r, c});
  Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != c) {
      throw DimensionError("ragged initializer rows");
    }
    Index j = 0;
    for (double v : row) t(i, j++) = v;
    ++i;
  }
  return t;
}

double DenseTensor::operator()(Index i, Index j) const {
  return data_[i * shape_[1] + j];
}

double& DenseTensor::operator()(Index i, Index j) {
  return data_[i * shape_[1] + j];
}

MatrixMap DenseTensor::matrix() {
  if (rank() != 2) {
    throw DimensionError("rank-2 view of tensor with shape " +
                         shape_string(shape_));
  }
  return MatrixMap(data_.data(), shape_[0], shape_[1]);
}

ConstMatrixMap DenseTensor::matrix() const {
  if (rank() != 2) {
    throw DimensionError("rank-2 view of tensor with shape " +
                         shape_string(shape_));
  }
  return ConstMatrixMap(data_.data(), shape_[0], shape_[1]);
}

MatrixMap DenseTensor::matrix(Index rows, Index cols) {
  if (rows * cols != size()) {
    throw DimensionError("cannot view " + shape_string(shape_) + " as " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  return MatrixMap(data_.data(), rows, cols);
}

ConstMatrixMap DenseTensor::matrix(Index rows, Index cols) const {
  if (rows * cols != size()) {
    throw DimensionError("cannot view " + shape_string(shape_) + " as " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  return ConstMatrixMap(data_.data(), rows, cols);
}

DenseTensor DenseTensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw DimensionError("reshape " + shape_string(shape_) + " -> " +
                         shape_string(shape) + " changes element count");
  }
  return DenseTensor(std::move(shape), data_);
}

void require_same_shape(const DenseTensor& a, const DenseTensor& b,
                        const char* where) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(where) + ": shape " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace parn
