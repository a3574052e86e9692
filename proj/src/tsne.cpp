#include "kovae/tsne.hpp"

#include <cmath>

#include "kovae/rng.hpp"

namespace kovae::tsne {

namespace {
/// Conditional P row via binary search on precision so the entropy matches
/// log(perplexity).
void fill_p_row(const Eigen::VectorXd& dist_sq, int self, double perplexity,
                Eigen::VectorXd& row) {
  const int n = static_cast<int>(dist_sq.size());
  double target = std::log(perplexity);
  double beta = 1.0, beta_lo = 0.0, beta_hi = 1e300;
  for (int it = 0; it < 64; ++it) {
    double sum = 0.0, weighted = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == self) {
        row(j) = 0;
        continue;
      }
      double p = std::exp(-beta * dist_sq(j));
      row(j) = p;
      sum += p;
      weighted += beta * dist_sq(j) * p;
    }
    if (sum <= 0) sum = 1e-300;
    double entropy = std::log(sum) + weighted / sum;
    double diff = entropy - target;
    if (std::abs(diff) < 1e-5) break;
    if (diff > 0) {
      beta_lo = beta;
      beta = (beta_hi >= 1e300) ? beta * 2 : 0.5 * (beta + beta_hi);
    } else {
      beta_hi = beta;
      beta = (beta_lo <= 0.0) ? beta / 2 : 0.5 * (beta + beta_lo);
    }
  }
  double sum = row.sum();
  if (sum <= 0) sum = 1e-300;
  row /= sum;
}
}  // namespace

Eigen::MatrixXd embed_2d(const Eigen::MatrixXd& x, uint64_t seed,
                         const TsneConfig& cfg) {
  const int n = static_cast<int>(x.rows());
  double perplexity = std::min(cfg.perplexity, (n - 1) / 3.0);

  // Pairwise squared distances.
  Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d2 =
      sq.replicate(1, n) + sq.transpose().replicate(n, 1) - 2.0 * x * x.transpose();
  d2 = d2.cwiseMax(0.0);

  Eigen::MatrixXd p(n, n);
  Eigen::VectorXd row(n);
  for (int i = 0; i < n; ++i) {
    fill_p_row(d2.row(i).transpose(), i, perplexity, row);
    p.row(i) = row.transpose();
  }
  p = 0.5 * (p + p.transpose()) / n;
  p = p.cwiseMax(1e-12);

  RngStream rng(seed, "tsne_init");
  Eigen::MatrixXd y = 1e-4 * rng.normal_matrix(n, 2);
  Eigen::MatrixXd y_inc = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);

  for (int it = 0; it < cfg.iterations; ++it) {
    double exaggeration = it < cfg.exaggeration_iters ? cfg.exaggeration : 1.0;
    Eigen::VectorXd ysq = y.rowwise().squaredNorm();
    Eigen::MatrixXd num =
        (1.0 + (ysq.replicate(1, n) + ysq.transpose().replicate(n, 1) -
                2.0 * y * y.transpose()).array())
            .inverse()
            .matrix();
    num.diagonal().setZero();
    double qsum = std::max(num.sum(), 1e-300);

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        double coeff =
            4.0 * (exaggeration * p(i, j) - num(i, j) / qsum) * num(i, j);
        grad.row(i) += coeff * (y.row(i) - y.row(j));
      }
    }

    double momentum = it < 250 ? 0.5 : 0.8;
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 2; ++c) {
        bool same_sign = (grad(i, c) > 0) == (y_inc(i, c) > 0);
        gains(i, c) = same_sign ? std::max(gains(i, c) * 0.8, 0.01)
                                : gains(i, c) + 0.2;
        y_inc(i, c) = momentum * y_inc(i, c) -
                      cfg.learning_rate * gains(i, c) * grad(i, c);
        y(i, c) += y_inc(i, c);
      }
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

}  // namespace kovae::tsne
