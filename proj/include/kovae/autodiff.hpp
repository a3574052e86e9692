#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace kovae::ag {

using Mat = Eigen::MatrixXd;

class Tape;

/// Handle into a Tape. Cheap to copy; valid until Tape::reset().
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Reverse-mode tape over dense matrices. One tape per optimization step:
/// build the graph forward, call backward() on a 1x1 scalar node, read
/// gradients off the leaves, then reset().
class Tape {
 public:
  Var leaf(Mat value, bool requires_grad);
  Var constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& val(Var v) const { return nodes_[v.idx].value; }
  /// Gradient of the last backward() root w.r.t. v (zero matrix when the
  /// root did not reach v).
  Mat grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.idx].needs_grad; }

  void backward(Var root);
  void reset();
  size_t size() const { return nodes_.size(); }

  // --- graph construction (implementation detail of the free functions) ---
  Var emit(Mat value, std::vector<int> parents,
           std::function<void(Tape&, const Mat&)> back);
  void accumulate(int idx, const Mat& g);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&, const Mat&)> back;
  };
  std::vector<Node> nodes_;
};

// Elementwise and broadcast arithmetic.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);  // Hadamard
Var neg(Tape& t, Var a);
Var scale(Tape& t, Var a, double c);
Var add_scalar(Tape& t, Var a, double c);
Var mul_const(Tape& t, Var a, const Mat& c);  // Hadamard by constant
Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);

// Row-vector broadcasts: b is [1 x F], a is [N x F].
Var add_rowvec(Tape& t, Var a, Var b);
Var sub_rowvec(Tape& t, Var a, Var b);
Var mul_rowvec(Tape& t, Var a, Var b);

// Nonlinearities.
Var sigmoid(Tape& t, Var a);
Var tanh_(Tape& t, Var a);
Var exp_(Tape& t, Var a);
Var log_(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var abs_(Tape& t, Var a);
Var clamp(Tape& t, Var a, double lo, double hi);
Var cwise_pow(Tape& t, Var a, double p);  // entries must stay positive

// Reductions and shape ops.
Var sum(Tape& t, Var a);           // -> [1x1]
Var mean(Tape& t, Var a);          // -> [1x1]
Var colwise_mean(Tape& t, Var a);  // -> [1xF]
Var vcat(Tape& t, const std::vector<Var>& parts);
Var rows(Tape& t, Var a, int r0, int nrows);
Var cols(Tape& t, Var a, int c0, int ncols);

/// Least-squares transition fit in row convention: given snapshots stacked
/// as rows (Z0, Z1 of shape [M x k], row m of Z1 follows row m of Z0), returns
/// the k x k map A minimizing ||Z0 A^T - Z1||_F^2 + ridge ||A||_F^2, i.e.
/// A = (Z1^T Z0)(Z0^T Z0 + ridge I)^-1. Differentiable w.r.t. both inputs.
Var lstsq_transition(Tape& t, Var z0_rows, Var z1_rows, double ridge);

/// Sum over the r largest-modulus eigenvalues of (||lambda_j| - c_j|)^2.
/// Backward uses left/right eigenvectors of the (real, square) input; when
/// two eigenvalues are closer than degeneracy_tol the gradient for the whole
/// node is dropped for that step.
Var eig_modulus_penalty(Tape& t, Var a, const Eigen::VectorXd& targets,
                        double degeneracy_tol = 1e-6);

}  // namespace kovae::ag
