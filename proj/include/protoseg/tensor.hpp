#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "protoseg/error.hpp"

namespace protoseg {

// Dense 4-D array (batch, channels, height, width) of doubles, row-major with
// width fastest. All network math runs on this type.
class Tensor {
 public:
  Tensor() = default;

  Tensor(int n, int c, int h, int w, double fill = 0.0)
      : n_(n), c_(c), h_(h), w_(w),
        data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1, 1, 1);
    t.data_[0] = v;
    return t;
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }
  double at(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  std::array<int, 4> shape() const { return {n_, c_, h_, w_}; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  double item() const {
    if (data_.size() != 1)
      throw Error(ErrorKind::ShapeMismatch, "item() on non-scalar tensor");
    return data_[0];
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

}  // namespace protoseg
