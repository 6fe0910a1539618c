#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rssl {

  using Index = std::ptrdiff_t;

  // Dense row-major 2-D array of doubles. Sequences are laid out time-major:
  // one row per frame (or sample), one column per channel.
  class Tensor {
  public:
    Tensor() = default;
    Tensor(Index rows, Index cols, double fill = 0.0);
    Tensor(Index rows, Index cols, std::vector<double> data);

    static Tensor column(std::span<const double> values);
    static Tensor scalar(double value);

    Index rows() const { return _rows; }
    Index cols() const { return _cols; }
    Index size() const { return _rows * _cols; }
    bool empty() const { return size() == 0; }

    double& operator()(Index r, Index c) { return _data[static_cast<std::size_t>(r * _cols + c)]; }
    double operator()(Index r, Index c) const { return _data[static_cast<std::size_t>(r * _cols + c)]; }
    double& operator[](Index i) { return _data[static_cast<std::size_t>(i)]; }
    double operator[](Index i) const { return _data[static_cast<std::size_t>(i)]; }

    double* data() { return _data.data(); }
    const double* data() const { return _data.data(); }
    double* row(Index r) { return _data.data() + r * _cols; }
    const double* row(Index r) const { return _data.data() + r * _cols; }

    std::vector<double>& storage() { return _data; }
    const std::vector<double>& storage() const { return _data; }

    double item() const;
    void fill(double value);
    bool same_shape(const Tensor& other) const {
      return _rows == other._rows && _cols == other._cols;
    }
    bool all_finite() const;
    std::string shape_string() const;

    Tensor& operator+=(const Tensor& other);

  private:
    Index _rows = 0;
    Index _cols = 0;
    std::vector<double> _data;
  };

  // C = alpha * op(A) * op(B) + beta * C, shapes checked.
  void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b,
            Tensor& c, double alpha = 1.0, double beta = 0.0);

  Tensor matmul(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b);

}
