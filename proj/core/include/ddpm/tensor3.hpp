#pragma once

#include <Eigen/Dense>
#include <vector>

namespace ddpm {

/// Dense symmetric order-3 tensor for small dimensions (d <= 4).
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int dim) : dim_(dim), data_(dim * dim * dim, 0.0) {}

  int dim() const { return dim_; }

  double& operator()(int i, int j, int k) { return data_[(i * dim_ + j) * dim_ + k]; }
  double operator()(int i, int j, int k) const { return data_[(i * dim_ + j) * dim_ + k]; }

  Tensor3& operator+=(const Tensor3& o) {
    for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += o.data_[n];
    return *this;
  }
  Tensor3& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Largest deviation from full index-permutation symmetry.
  double symmetry_defect() const {
    double m = 0.0;
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j)
        for (int k = 0; k < dim_; ++k) {
          const double v = (*this)(i, j, k);
          m = std::max(m, std::abs(v - (*this)(j, i, k)));
          m = std::max(m, std::abs(v - (*this)(i, k, j)));
          m = std::max(m, std::abs(v - (*this)(k, j, i)));
        }
    return m;
  }

 private:
  int dim_ = 0;
  std::vector<double> data_;
};

/// Dense symmetric order-4 tensor, same storage scheme.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(int dim) : dim_(dim), data_(dim * dim * dim * dim, 0.0) {}

  int dim() const { return dim_; }
  double& operator()(int i, int j, int k, int l) {
    return data_[((i * dim_ + j) * dim_ + k) * dim_ + l];
  }
  double operator()(int i, int j, int k, int l) const {
    return data_[((i * dim_ + j) * dim_ + k) * dim_ + l];
  }

 private:
  int dim_ = 0;
  std::vector<double> data_;
};

}  // namespace ddpm
