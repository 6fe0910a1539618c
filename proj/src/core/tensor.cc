#include "core/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#include "core/error.h"

namespace rssl {

  namespace {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using ConstMap = Eigen::Map<const RowMajor>;
    using MutMap = Eigen::Map<RowMajor>;
  }

  Tensor::Tensor(Index rows, Index cols, double fill)
    : _rows(rows)
    , _cols(cols)
    , _data(static_cast<std::size_t>(rows * cols), fill) {
    if (rows < 0 || cols < 0)
      fail(ErrorKind::Internal, "BadShape", "negative tensor dimension");
  }

  Tensor::Tensor(Index rows, Index cols, std::vector<double> data)
    : _rows(rows)
    , _cols(cols)
    , _data(std::move(data)) {
    if (static_cast<Index>(_data.size()) != rows * cols)
      fail(ErrorKind::Internal, "BadShape", "data size does not match " + shape_string());
  }

  Tensor Tensor::column(std::span<const double> values) {
    return Tensor(static_cast<Index>(values.size()), 1,
                  std::vector<double>(values.begin(), values.end()));
  }

  Tensor Tensor::scalar(double value) {
    return Tensor(1, 1, value);
  }

  double Tensor::item() const {
    if (size() != 1)
      fail(ErrorKind::Internal, "BadShape", "item() on tensor of shape " + shape_string());
    return _data[0];
  }

  void Tensor::fill(double value) {
    std::fill(_data.begin(), _data.end(), value);
  }

  bool Tensor::all_finite() const {
    for (double v : _data)
      if (!std::isfinite(v))
        return false;
    return true;
  }

  std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << "[" << _rows << "x" << _cols << "]";
    return os.str();
  }

  Tensor& Tensor::operator+=(const Tensor& other) {
    if (!same_shape(other))
      fail(ErrorKind::Internal, "BadShape", shape_string() + " += " + other.shape_string());
    for (std::size_t i = 0; i < _data.size(); ++i)
      _data[i] += other._data[i];
    return *this;
  }

  void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b,
            Tensor& c, double alpha, double beta) {
    const Index m = trans_a ? a.cols() : a.rows();
    const Index k = trans_a ? a.rows() : a.cols();
    const Index kb = trans_b ? b.cols() : b.rows();
    const Index n = trans_b ? b.rows() : b.cols();
    if (k != kb || c.rows() != m || c.cols() != n)
      fail(ErrorKind::Internal, "BadShape",
           "gemm " + a.shape_string() + (trans_a ? "^T" : "") + " * "
           + b.shape_string() + (trans_b ? "^T" : "") + " -> " + c.shape_string());
    if (m == 0 || n == 0)
      return;

    ConstMap ma(a.data(), a.rows(), a.cols());
    ConstMap mb(b.data(), b.rows(), b.cols());
    MutMap mc(c.data(), m, n);
    if (beta == 0.0)
      mc.setZero();
    else if (beta != 1.0)
      mc *= beta;
    if (k == 0)
      return;

    if (!trans_a && !trans_b)
      mc.noalias() += alpha * ma * mb;
    else if (trans_a && !trans_b)
      mc.noalias() += alpha * ma.transpose() * mb;
    else if (!trans_a && trans_b)
      mc.noalias() += alpha * ma * mb.transpose();
    else
      mc.noalias() += alpha * ma.transpose() * mb.transpose();
  }

  Tensor matmul(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b) {
    Tensor c(trans_a ? a.cols() : a.rows(), trans_b ? b.rows() : b.cols());
    gemm(a, trans_a, b, trans_b, c);
    return c;
  }

}
