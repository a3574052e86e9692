#include "kovae/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "kovae/plot.hpp"

namespace kovae::koopman {

KoopmanOperator make_operator(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols())
    throw std::invalid_argument("koopman: operator must be square");
  KoopmanOperator op;
  op.A = A;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  Eigen::VectorXcd lam = es.eigenvalues();
  Eigen::MatrixXcd vec = es.eigenvectors();
  const int k = static_cast<int>(A.rows());
  std::vector<int> order(k);
  for (int i = 0; i < k; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return std::abs(lam(i)) > std::abs(lam(j)); });
  op.eigenvalues.resize(k);
  op.eigenvectors.resize(k, k);
  for (int i = 0; i < k; ++i) {
    op.eigenvalues(i) = lam(order[i]);
    op.eigenvectors.col(i) = vec.col(order[i]);
  }
  return op;
}

KoopmanOperator fit_operator(const Eigen::MatrixXd& z_prev,
                             const Eigen::MatrixXd& z_next, double ridge) {
  if (z_prev.rows() != z_next.rows() || z_prev.cols() != z_next.cols())
    throw std::invalid_argument("fit_operator: snapshot shape mismatch");
  if (z_prev.cols() < 1)
    throw std::invalid_argument("fit_operator: need at least one column");
  const int k = static_cast<int>(z_prev.rows());
  Eigen::MatrixXd S =
      z_prev * z_prev.transpose() + ridge * Eigen::MatrixXd::Identity(k, k);
  Eigen::MatrixXd A = (z_next * z_prev.transpose()) *
                      S.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  return make_operator(A);
}

Tensor3 rollout(const KoopmanOperator& op, const Tensor3& z_bar) {
  if (z_bar.f() != op.k())
    throw std::invalid_argument("rollout: latent width mismatch");
  Tensor3 out(z_bar.n(), z_bar.t(), z_bar.f());
  Eigen::MatrixXd At = op.A.transpose();
  for (int s = 0; s < z_bar.t(); ++s) out.set_step(s, z_bar.step(s) * At);
  return out;
}

double eig_penalty(const KoopmanOperator& op, const EigTargets& targets) {
  if (targets.r() > op.k())
    throw std::invalid_argument("eig_penalty: more targets than eigenvalues");
  double total = 0.0;
  for (int j = 0; j < targets.r(); ++j) {
    double m = std::abs(op.eigenvalues(j));
    total += (m - targets.c(j)) * (m - targets.c(j));
  }
  return total;
}

std::vector<SpectralMode> spectral_report(const KoopmanOperator& op,
                                          double tau) {
  std::vector<SpectralMode> out;
  for (int j = 0; j < op.k(); ++j) {
    SpectralMode m;
    m.modulus = std::abs(op.eigenvalues(j));
    m.phase = std::arg(op.eigenvalues(j));
    if (m.modulus < 1.0 - tau)
      m.cls = StabilityClass::Decaying;
    else if (m.modulus > 1.0 + tau)
      m.cls = StabilityClass::Unstable;
    else
      m.cls = StabilityClass::Marginal;
    out.push_back(m);
  }
  return out;
}

const char* stability_name(StabilityClass c) {
  switch (c) {
    case StabilityClass::Decaying: return "decaying";
    case StabilityClass::Marginal: return "marginal";
    case StabilityClass::Unstable: return "unstable";
  }
  return "?";
}

void write_spectral_report(const KoopmanOperator& op,
                           const std::string& csv_path,
                           const std::string& png_path, double tau) {
  auto modes = spectral_report(op, tau);
  {
    std::vector<std::vector<double>> rows;
    std::ofstream os(csv_path, std::ios::trunc);
    os << "modulus,phase,class\n";
    os.precision(12);
    for (const auto& m : modes)
      os << m.modulus << "," << m.phase << "," << stability_name(m.cls)
         << "\n";
  }
  plot::Canvas canvas(480, 480);
  plot::Axes ax = plot::Axes::square(-1.6, 1.6);
  canvas.frame();
  canvas.unit_circle(ax);
  for (const auto& m : modes) {
    double x = m.modulus * std::cos(m.phase);
    double y = m.modulus * std::sin(m.phase);
    plot::Color c = m.cls == StabilityClass::Marginal
                        ? plot::Color{128, 0, 160}
                        : (m.cls == StabilityClass::Unstable
                               ? plot::Color{200, 30, 30}
                               : plot::Color{230, 180, 20});
    canvas.disc(ax, x, y, 5, c);
  }
  canvas.save_png(png_path);
}

}  // namespace kovae::koopman
