#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kovae/tensor.hpp"

namespace kovae::koopman {

/// Fitted k x k latent transition matrix with its eigendecomposition cached;
/// eigenvalues (and matching eigenvector columns) are sorted by modulus,
/// largest first.
struct KoopmanOperator {
  Eigen::MatrixXd A;
  Eigen::VectorXcd eigenvalues;
  Eigen::MatrixXcd eigenvectors;

  int k() const { return static_cast<int>(A.rows()); }
};

KoopmanOperator make_operator(const Eigen::MatrixXd& A);

/// Ridge-regularized least squares A = Z1 Z0^T (Z0 Z0^T + ridge I)^-1 over
/// column snapshots (z_prev/z_next are [k x M], column m of z_next follows
/// column m of z_prev).
KoopmanOperator fit_operator(const Eigen::MatrixXd& z_prev,
                             const Eigen::MatrixXd& z_next,
                             double ridge = 1e-6);

/// One-step advance of every step in the sequence: out[:, t, :] holds
/// A * z_bar[:, t, :]. The caller prepends z_bar_0, so out step t is the
/// prediction for original step t+1.
Tensor3 rollout(const KoopmanOperator& op, const Tensor3& z_bar);

struct EigTargets {
  Eigen::VectorXd c;  // target moduli, paired with eigenvalues by
                      // descending modulus
  int r() const { return static_cast<int>(c.size()); }
};

/// Sum over the r largest-modulus eigenvalues of (|lambda_j| - c_j)^2.
double eig_penalty(const KoopmanOperator& op, const EigTargets& targets);

enum class StabilityClass { Decaying, Marginal, Unstable };

struct SpectralMode {
  double modulus;
  double phase;  // arg(lambda)
  StabilityClass cls;
};

/// Classifies each eigenvalue with tolerance tau around the unit circle.
std::vector<SpectralMode> spectral_report(const KoopmanOperator& op,
                                          double tau = 0.05);

const char* stability_name(StabilityClass c);

/// CSV with columns modulus,phase,class plus a unit-circle scatter image.
void write_spectral_report(const KoopmanOperator& op,
                           const std::string& csv_path,
                           const std::string& png_path, double tau = 0.05);

}  // namespace kovae::koopman
