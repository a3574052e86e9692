#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "kovae/koopman.hpp"
#include "kovae/rng.hpp"
#include "test_helpers.hpp"

using namespace kovae;
using Eigen::MatrixXd;

namespace {
MatrixXd rotation(double angle) {
  MatrixXd r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}
}  // namespace

TEST_CASE("fit_operator: identity snapshot basis recovers the map exactly") {
  MatrixXd z0 = MatrixXd::Identity(2, 2);
  MatrixXd z1 = rotation(M_PI / 2.0);
  auto op = koopman::fit_operator(z0, z1);
  CHECK((op.A - z1).norm() < 1e-5);
}

TEST_CASE("fit_operator: recovers a known operator from an exact orbit") {
  // z_{t+1} = A0 z_t with a full-rank snapshot matrix.
  RngStream rng(31, "orbit");
  MatrixXd a0(3, 3);
  a0 << 0.9, 0.1, 0.0,
       -0.2, 0.8, 0.05,
        0.0, 0.1, 0.7;
  const int m = 40;
  MatrixXd z0(3, m), z1(3, m);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(3);
  for (int c = 0; c < m; ++c) {
    if (c % 10 == 0) z = rng.normal_matrix(3, 1);  // refresh excitation
    z0.col(c) = z;
    z = a0 * z;
    z1.col(c) = z;
  }
  auto op = koopman::fit_operator(z0, z1);
  CHECK((op.A - a0).norm() / a0.norm() < 1e-5);
  // Cached eigendecomposition satisfies A phi = lambda phi.
  for (int j = 0; j < 3; ++j) {
    Eigen::VectorXcd lhs = op.A * op.eigenvectors.col(j);
    Eigen::VectorXcd rhs = op.eigenvalues(j) * op.eigenvectors.col(j);
    CHECK((lhs - rhs).norm() < 1e-5 * std::max(1.0, rhs.norm()));
  }
  // Sorted by modulus descending.
  for (int j = 1; j < 3; ++j)
    CHECK(std::abs(op.eigenvalues(j - 1)) >= std::abs(op.eigenvalues(j)) - 1e-12);
}

TEST_CASE("fit_operator: single transition pair gives the min-norm solution") {
  Eigen::VectorXd zp(3), zn(3);
  zp << 1.0, 2.0, -1.0;
  zn << 0.5, 0.0, 1.5;
  auto op = koopman::fit_operator(zp, zn);
  // Closed-form rank-1 ridge solution: A = zn zp^T / (||zp||^2 + ridge).
  MatrixXd expected = zn * zp.transpose() / (zp.squaredNorm() + 1e-6);
  CHECK((op.A - expected).norm() < 1e-9);
  CHECK((op.A * zp - zn).norm() < 1e-5);  // within ridge tolerance
}

TEST_CASE("fit_operator: least-squares optimality under perturbations") {
  RngStream rng(32, "perturb");
  MatrixXd z0 = rng.normal_matrix(4, 30);
  MatrixXd z1 = rng.normal_matrix(4, 30);
  auto op = koopman::fit_operator(z0, z1);
  double base = (op.A * z0 - z1).squaredNorm();
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd da = rng.normal_matrix(4, 4);
    da *= 1e-3 / da.norm();
    double perturbed = ((op.A + da) * z0 - z1).squaredNorm();
    CHECK(perturbed >= base - 1e-6);
  }
}

TEST_CASE("rollout: identity, zero, and rotation orbits") {
  Tensor3 zbar(1, 4, 2);
  zbar(0, 0, 0) = 1.0;  // z_bar_0 = (1, 0); later steps along the orbit
  zbar(0, 1, 1) = 1.0;
  zbar(0, 2, 0) = -1.0;
  zbar(0, 3, 1) = -1.0;

  auto ident = koopman::make_operator(MatrixXd::Identity(2, 2));
  auto shifted = koopman::rollout(ident, zbar);
  CHECK(shifted.step(0) == zbar.step(0));
  CHECK(shifted.step(3) == zbar.step(3));

  auto zero = koopman::make_operator(MatrixXd::Zero(2, 2));
  auto zeros = koopman::rollout(zero, zbar);
  for (double v : zeros.raw()) CHECK(v == 0.0);

  // Matrix-power oracle: out[t] = R^(1) z_bar[t], and the stream itself is
  // the R-orbit so out[t] = R^{t+1} z_bar[0].
  auto rot = koopman::make_operator(rotation(M_PI / 2.0));
  auto out = koopman::rollout(rot, zbar);
  Eigen::VectorXd z0(2);
  z0 << 1.0, 0.0;
  for (int t = 0; t < 4; ++t) {
    MatrixXd power = MatrixXd::Identity(2, 2);
    for (int p = 0; p <= t; ++p) power = rotation(M_PI / 2.0) * power;
    Eigen::VectorXd expect = power * z0;
    CHECK(out(0, t, 0) == doctest::Approx(expect(0)).epsilon(1e-9));
    CHECK(out(0, t, 1) == doctest::Approx(expect(1)).epsilon(1e-9));
  }

  Tensor3 bad(1, 4, 3);
  CHECK_THROWS(koopman::rollout(rot, bad));
}

TEST_CASE("eig_penalty: analytic values and pendulum configuration") {
  auto marginal = koopman::make_operator(rotation(1.0));
  koopman::EigTargets ones2{Eigen::VectorXd::Ones(2)};
  CHECK(koopman::eig_penalty(marginal, ones2) == doctest::Approx(0.0));

  auto half = koopman::make_operator(0.5 * MatrixXd::Identity(1, 1));
  koopman::EigTargets one1{Eigen::VectorXd::Ones(1)};
  CHECK(koopman::eig_penalty(half, one1) == doctest::Approx(0.25));

  // Pendulum instance: r = 2, c_p = c_q = 1 over a k = 4 operator.
  MatrixXd a = MatrixXd::Zero(4, 4);
  a.topLeftCorner(2, 2) = rotation(0.3);
  a(2, 2) = 0.1;
  a(3, 3) = 0.05;
  auto op = koopman::make_operator(a);
  CHECK(koopman::eig_penalty(op, ones2) == doctest::Approx(0.0).epsilon(1e-9));
  koopman::EigTargets too_many{Eigen::VectorXd::Ones(5)};
  CHECK_THROWS(koopman::eig_penalty(op, too_many));
}

TEST_CASE("spectral_report: classes at the tau = 0.05 boundaries") {
  auto decaying = koopman::make_operator(0.5 * MatrixXd::Identity(2, 2));
  auto rep = koopman::spectral_report(decaying);
  CHECK(rep.size() == 2);
  for (const auto& m : rep) CHECK(m.cls == koopman::StabilityClass::Decaying);

  auto marginal = koopman::make_operator(rotation(M_PI / 2.0));
  for (const auto& m : koopman::spectral_report(marginal)) {
    CHECK(m.modulus == doctest::Approx(1.0));
    CHECK(m.cls == koopman::StabilityClass::Marginal);
  }

  MatrixXd mixed = MatrixXd::Zero(2, 2);
  mixed(0, 0) = 1.2;
  mixed(1, 1) = 0.3;
  auto rep2 = koopman::spectral_report(koopman::make_operator(mixed));
  CHECK(rep2[0].cls == koopman::StabilityClass::Unstable);
  CHECK(rep2[1].cls == koopman::StabilityClass::Decaying);
}

TEST_CASE("spectral_report: invariant under similarity transforms") {
  RngStream rng(35, "sim");
  MatrixXd a(3, 3);
  a << 0.9, 0.2, 0.0, -0.2, 0.9, 0.0, 0.0, 0.0, 0.4;
  for (int trial = 0; trial < 5; ++trial) {
    MatrixXd p = rng.normal_matrix(3, 3) + 3.0 * MatrixXd::Identity(3, 3);
    MatrixXd sim = p * a * p.inverse();
    auto ra = koopman::spectral_report(koopman::make_operator(a));
    auto rb = koopman::spectral_report(koopman::make_operator(sim));
    for (size_t j = 0; j < ra.size(); ++j) {
      CHECK(ra[j].modulus == doctest::Approx(rb[j].modulus).epsilon(1e-6));
      CHECK(ra[j].cls == rb[j].cls);
    }
  }
}

TEST_CASE("spectral_report: CSV and image outputs exist") {
  std::string dir = testutil::scratch_dir("spectrum");
  auto op = koopman::make_operator(rotation(0.7));
  koopman::write_spectral_report(op, dir + "/s.csv", dir + "/s.png");
  CHECK(std::filesystem::exists(dir + "/s.csv"));
  CHECK(std::filesystem::file_size(dir + "/s.png") > 100);
}
