#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace kovae {

/// Dense [N sequences x T steps x F features] array, row-major.
/// Step slices come out as [N x F] matrices, which is the shape every
/// recurrent layer consumes.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int n, int t, int f, double fill = 0.0)
      : n_(n), t_(t), f_(f), data_(static_cast<size_t>(n) * t * f, fill) {
    if (n < 0 || t < 0 || f < 0)
      throw std::invalid_argument("Tensor3: negative dimension");
  }

  int n() const { return n_; }
  int t() const { return t_; }
  int f() const { return f_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int i, int s, int j) {
    return data_[idx(i, s, j)];
  }
  double operator()(int i, int s, int j) const {
    return data_[idx(i, s, j)];
  }

  const std::vector<double>& raw() const { return data_; }
  std::vector<double>& raw() { return data_; }

  Eigen::MatrixXd step(int s) const {
    Eigen::MatrixXd m(n_, f_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < f_; ++j) m(i, j) = (*this)(i, s, j);
    return m;
  }

  void set_step(int s, const Eigen::MatrixXd& m) {
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < f_; ++j) (*this)(i, s, j) = m(i, j);
  }

  /// Sequence i flattened to [T x F].
  Eigen::MatrixXd sequence(int i) const {
    Eigen::MatrixXd m(t_, f_);
    for (int s = 0; s < t_; ++s)
      for (int j = 0; j < f_; ++j) m(s, j) = (*this)(i, s, j);
    return m;
  }

  Tensor3 select(const std::vector<int>& rows) const {
    Tensor3 out(static_cast<int>(rows.size()), t_, f_);
    for (size_t r = 0; r < rows.size(); ++r)
      for (int s = 0; s < t_; ++s)
        for (int j = 0; j < f_; ++j)
          out(static_cast<int>(r), s, j) = (*this)(rows[r], s, j);
    return out;
  }

 private:
  size_t idx(int i, int s, int j) const {
    return (static_cast<size_t>(i) * t_ + s) * f_ + j;
  }
  int n_ = 0, t_ = 0, f_ = 0;
  std::vector<double> data_;
};

}  // namespace kovae
