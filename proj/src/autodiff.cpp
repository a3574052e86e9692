#include "kovae/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace kovae::ag {

Var Tape::leaf(Mat value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[v.idx];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(int idx, const Mat& g) {
  Node& n = nodes_[idx];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

Var Tape::emit(Mat value, std::vector<int> parents,
               std::function<void(Tape&, const Mat&)> back) {
  Node n;
  n.value = std::move(value);
  for (int p : parents)
    if (nodes_[p].needs_grad) n.needs_grad = true;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var root) {
  Node& r = nodes_[root.idx];
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::invalid_argument("backward: root must be a 1x1 scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  r.grad = Mat::Ones(1, 1);
  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.back) continue;
    n.back(*this, n.grad);
  }
}

void Tape::reset() { nodes_.clear(); }

// ---------------------------------------------------------------------------

Var add(Tape& t, Var a, Var b) {
  return t.emit(t.val(a) + t.val(b), {a.idx, b.idx},
                [a, b](Tape& tp, const Mat& g) {
                  tp.accumulate(a.idx, g);
                  tp.accumulate(b.idx, g);
                });
}

Var sub(Tape& t, Var a, Var b) {
  return t.emit(t.val(a) - t.val(b), {a.idx, b.idx},
                [a, b](Tape& tp, const Mat& g) {
                  tp.accumulate(a.idx, g);
                  tp.accumulate(b.idx, -g);
                });
}

Var mul(Tape& t, Var a, Var b) {
  return t.emit(t.val(a).cwiseProduct(t.val(b)), {a.idx, b.idx},
                [a, b](Tape& tp, const Mat& g) {
                  tp.accumulate(a.idx, g.cwiseProduct(tp.val(b)));
                  tp.accumulate(b.idx, g.cwiseProduct(tp.val(a)));
                });
}

Var neg(Tape& t, Var a) { return scale(t, a, -1.0); }

Var scale(Tape& t, Var a, double c) {
  return t.emit(c * t.val(a), {a.idx}, [a, c](Tape& tp, const Mat& g) {
    tp.accumulate(a.idx, c * g);
  });
}

Var add_scalar(Tape& t, Var a, double c) {
  return t.emit(t.val(a).array() + c, {a.idx},
                [a](Tape& tp, const Mat& g) { tp.accumulate(a.idx, g); });
}

Var mul_const(Tape& t, Var a, const Mat& c) {
  return t.emit(t.val(a).cwiseProduct(c), {a.idx},
                [a, c](Tape& tp, const Mat& g) {
                  tp.accumulate(a.idx, g.cwiseProduct(c));
                });
}

Var matmul(Tape& t, Var a, Var b) {
  return t.emit(t.val(a) * t.val(b), {a.idx, b.idx},
                [a, b](Tape& tp, const Mat& g) {
                  tp.accumulate(a.idx, g * tp.val(b).transpose());
                  tp.accumulate(b.idx, tp.val(a).transpose() * g);
                });
}

Var transpose(Tape& t, Var a) {
  return t.emit(t.val(a).transpose(), {a.idx},
                [a](Tape& tp, const Mat& g) {
                  tp.accumulate(a.idx, g.transpose());
                });
}

Var add_rowvec(Tape& t, Var a, Var b) {
  Mat v = t.val(a).rowwise() + t.val(b).row(0);
  return t.emit(std::move(v), {a.idx, b.idx}, [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a.idx, g);
    tp.accumulate(b.idx, g.colwise().sum());
  });
}

Var sub_rowvec(Tape& t, Var a, Var b) {
  Mat v = t.val(a).rowwise() - t.val(b).row(0);
  return t.emit(std::move(v), {a.idx, b.idx}, [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a.idx, g);
    tp.accumulate(b.idx, -g.colwise().sum());
  });
}

Var mul_rowvec(Tape& t, Var a, Var b) {
  Mat v = t.val(a).array().rowwise() * t.val(b).row(0).array();
  return t.emit(std::move(v), {a.idx, b.idx}, [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a.idx, g.array().rowwise() * tp.val(b).row(0).array());
    tp.accumulate(b.idx, g.cwiseProduct(tp.val(a)).colwise().sum());
  });
}

Var sigmoid(Tape& t, Var a) {
  Mat s = (1.0 + (-t.val(a).array()).exp()).inverse();
  return t.emit(s, {a.idx}, [a, s](Tape& tp, const Mat& g) {
    tp.accumulate(a.idx,
                  g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Var tanh_(Tape& t, Var a) {
  Mat y = t.val(a).array().tanh();
  return t.emit(y, {a.idx}, [a, y](Tape& tp, const Mat& g) {
    tp.accumulate(a.idx, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var exp_(Tape& t, Var a) {
  Mat y = t.val(a).array().exp();
  return t.emit(y, {a.idx}, [a, y](Tape& tp, const Mat& g) {
    tp.accumulate(a.idx, g.cwiseProduct(y));
  });
}

Var log_(Tape& t, Var a) {
  Mat y = t.val(a).array().log();
  return t.emit(std::move(y), {a.idx}, [a](Tape& tp, const Mat& g) {
    tp.accumulate(a.idx, g.cwiseQuotient(tp.val(a)));
  });
}

Var softplus(Tape& t, Var a) {
  // log(1 + e^x) computed stably as max(x,0) + log1p(exp(-|x|)).
  Mat y = t.val(a).array().max(0.0) +
          (-t.val(a).array().abs()).exp().log1p();
  return t.emit(std::move(y), {a.idx}, [a](Tape& tp, const Mat& g) {
    Mat s = (1.0 + (-tp.val(a).array()).exp()).inverse();
    tp.accumulate(a.idx, g.cwiseProduct(s));
  });
}

Var abs_(Tape& t, Var a) {
  Mat y = t.val(a).array().abs();
  return t.emit(std::move(y), {a.idx}, [a](Tape& tp, const Mat& g) {
    Mat s = tp.val(a).array().sign();
    tp.accumulate(a.idx, g.cwiseProduct(s));
  });
}

Var clamp(Tape& t, Var a, double lo, double hi) {
  Mat y = t.val(a).array().max(lo).min(hi);
  return t.emit(std::move(y), {a.idx}, [a, lo, hi](Tape& tp, const Mat& g) {
    Mat inside = ((tp.val(a).array() > lo) && (tp.val(a).array() < hi))
                     .cast<double>();
    tp.accumulate(a.idx, g.cwiseProduct(inside));
  });
}

Var cwise_pow(Tape& t, Var a, double p) {
  Mat y = t.val(a).array().pow(p);
  return t.emit(std::move(y), {a.idx}, [a, p](Tape& tp, const Mat& g) {
    Mat d = p * tp.val(a).array().pow(p - 1.0);
    tp.accumulate(a.idx, g.cwiseProduct(d));
  });
}

Var sum(Tape& t, Var a) {
  Mat y(1, 1);
  y(0, 0) = t.val(a).sum();
  int r = static_cast<int>(t.val(a).rows());
  int c = static_cast<int>(t.val(a).cols());
  return t.emit(std::move(y), {a.idx}, [a, r, c](Tape& tp, const Mat& g) {
    tp.accumulate(a.idx, Mat::Constant(r, c, g(0, 0)));
  });
}

Var mean(Tape& t, Var a) {
  double n = static_cast<double>(t.val(a).size());
  return scale(t, sum(t, a), 1.0 / n);
}

Var colwise_mean(Tape& t, Var a) {
  Mat y = t.val(a).colwise().mean();
  int r = static_cast<int>(t.val(a).rows());
  return t.emit(std::move(y), {a.idx}, [a, r](Tape& tp, const Mat& g) {
    tp.accumulate(a.idx, (1.0 / r) * g.replicate(r, 1));
  });
}

Var vcat(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vcat: empty");
  int total = 0;
  int c = static_cast<int>(t.val(parts[0]).cols());
  for (Var p : parts) total += static_cast<int>(t.val(p).rows());
  Mat y(total, c);
  std::vector<int> offsets;
  std::vector<int> sizes;
  std::vector<int> parents;
  int off = 0;
  for (Var p : parts) {
    int r = static_cast<int>(t.val(p).rows());
    y.middleRows(off, r) = t.val(p);
    offsets.push_back(off);
    sizes.push_back(r);
    parents.push_back(p.idx);
    off += r;
  }
  auto ps = parts;
  return t.emit(std::move(y), parents,
                [ps, offsets, sizes](Tape& tp, const Mat& g) {
                  for (size_t i = 0; i < ps.size(); ++i)
                    tp.accumulate(ps[i].idx, g.middleRows(offsets[i], sizes[i]));
                });
}

Var rows(Tape& t, Var a, int r0, int nrows) {
  Mat y = t.val(a).middleRows(r0, nrows);
  int R = static_cast<int>(t.val(a).rows());
  int C = static_cast<int>(t.val(a).cols());
  return t.emit(std::move(y), {a.idx},
                [a, r0, nrows, R, C](Tape& tp, const Mat& g) {
                  Mat full = Mat::Zero(R, C);
                  full.middleRows(r0, nrows) = g;
                  tp.accumulate(a.idx, full);
                });
}

Var cols(Tape& t, Var a, int c0, int ncols) {
  Mat y = t.val(a).middleCols(c0, ncols);
  int R = static_cast<int>(t.val(a).rows());
  int C = static_cast<int>(t.val(a).cols());
  return t.emit(std::move(y), {a.idx},
                [a, c0, ncols, R, C](Tape& tp, const Mat& g) {
                  Mat full = Mat::Zero(R, C);
                  full.middleCols(c0, ncols) = g;
                  tp.accumulate(a.idx, full);
                });
}

Var lstsq_transition(Tape& t, Var z0_rows, Var z1_rows, double ridge) {
  const Mat& Z0 = t.val(z0_rows);
  const Mat& Z1 = t.val(z1_rows);
  if (Z0.rows() != Z1.rows() || Z0.cols() != Z1.cols())
    throw std::invalid_argument("lstsq_transition: shape mismatch");
  const int k = static_cast<int>(Z0.cols());
  Mat S = Z0.transpose() * Z0 + ridge * Mat::Identity(k, k);
  Mat P = Z1.transpose() * Z0;
  Mat Sinv = S.ldlt().solve(Mat::Identity(k, k));
  Mat A = P * Sinv;
  return t.emit(A, {z0_rows.idx, z1_rows.idx},
                [z0_rows, z1_rows, Sinv, A](Tape& tp, const Mat& g) {
                  // A = P S^-1 with P = Z1^T Z0, S = Z0^T Z0 + ridge I.
                  Mat gP = g * Sinv;                 // S symmetric
                  Mat gS = -A.transpose() * g * Sinv;
                  const Mat& Z0v = tp.val(z0_rows);
                  const Mat& Z1v = tp.val(z1_rows);
                  tp.accumulate(z1_rows.idx, Z0v * gP.transpose());
                  tp.accumulate(z0_rows.idx,
                                Z1v * gP + Z0v * (gS + gS.transpose()));
                });
}

Var eig_modulus_penalty(Tape& t, Var a, const Eigen::VectorXd& targets,
                        double degeneracy_tol) {
  const Mat& A = t.val(a);
  if (A.rows() != A.cols())
    throw std::invalid_argument("eig_modulus_penalty: matrix must be square");
  const int k = static_cast<int>(A.rows());
  const int r = static_cast<int>(targets.size());
  if (r > k)
    throw std::invalid_argument("eig_modulus_penalty: more targets than k");

  Eigen::EigenSolver<Mat> es(A);
  Eigen::VectorXcd lam = es.eigenvalues();
  Eigen::MatrixXcd V = es.eigenvectors();

  std::vector<int> order(k);
  for (int i = 0; i < k; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return std::abs(lam(i)) > std::abs(lam(j)); });

  double penalty = 0.0;
  for (int j = 0; j < r; ++j) {
    double m = std::abs(lam(order[j]));
    penalty += (m - targets(j)) * (m - targets(j));
  }

  bool degenerate = false;
  for (int i = 0; i < k && !degenerate; ++i)
    for (int j = i + 1; j < k; ++j)
      if (std::abs(lam(i) - lam(j)) < degeneracy_tol) {
        degenerate = true;
        break;
      }

  Mat out(1, 1);
  out(0, 0) = penalty;
  if (degenerate) {
    // Eigendecomposition derivatives blow up near repeated eigenvalues;
    // forward value stays, the gradient contribution is skipped.
    return t.emit(std::move(out), {a.idx}, [](Tape&, const Mat&) {});
  }

  // Left eigenvectors scaled so that u_j^H v_j = 1: columns of V^-H.
  Eigen::MatrixXcd U = V.inverse().adjoint();
  return t.emit(std::move(out), {a.idx},
                [a, lam, V, U, order, targets, r, k](Tape& tp, const Mat& g) {
                  Mat dA = Mat::Zero(k, k);
                  for (int j = 0; j < r; ++j) {
                    int e = order[j];
                    double m = std::abs(lam(e));
                    if (m < 1e-12) continue;  // |.| not differentiable at 0
                    // d|lam|/dA = Re(conj(lam/|lam|) * dlam/dA),
                    // dlam/dA_{pq} = conj(u_p) v_q.
                    std::complex<double> w =
                        2.0 * (m - targets(j)) * lam(e) / m;
                    Eigen::MatrixXcd outer =
                        U.col(e).conjugate() * V.col(e).transpose();
                    dA += (std::conj(w) * outer).real();
                  }
                  tp.accumulate(a.idx, g(0, 0) * dA);
                });
}

}  // namespace kovae::ag
