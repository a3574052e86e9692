#include "kovae/ncde.hpp"

#include <cmath>
#include <stdexcept>

namespace kovae::ncde {

void NCDEConfig::validate() const {
  if (hidden_dim < 1 || field_width < 1 || field_depth < 1 ||
      solver_steps_per_interval < 1)
    throw std::invalid_argument("ncde: config values must be >= 1");
}

namespace {
/// Natural cubic second derivatives: tridiagonal solve, M_0 = M_{m-1} = 0.
Eigen::MatrixXd natural_second_derivatives(const Eigen::VectorXd& t,
                                           const Eigen::MatrixXd& y) {
  const int m = static_cast<int>(t.size());
  const int c = static_cast<int>(y.cols());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, c);
  if (m < 3) return M;  // two points: linear segment, M = 0
  const int n = m - 2;
  Eigen::VectorXd diag(n), lower(n), upper(n);
  Eigen::MatrixXd rhs(n, c);
  for (int i = 1; i <= n; ++i) {
    double h0 = t(i) - t(i - 1);
    double h1 = t(i + 1) - t(i);
    diag(i - 1) = 2.0 * (h0 + h1);
    lower(i - 1) = h0;
    upper(i - 1) = h1;
    rhs.row(i - 1) = 6.0 * ((y.row(i + 1) - y.row(i)) / h1 -
                            (y.row(i) - y.row(i - 1)) / h0);
  }
  // Thomas algorithm.
  for (int i = 1; i < n; ++i) {
    double w = lower(i) / diag(i - 1);
    diag(i) -= w * upper(i - 1);
    rhs.row(i) -= w * rhs.row(i - 1);
  }
  Eigen::MatrixXd sol(n, c);
  sol.row(n - 1) = rhs.row(n - 1) / diag(n - 1);
  for (int i = n - 2; i >= 0; --i)
    sol.row(i) = (rhs.row(i) - upper(i) * sol.row(i + 1)) / diag(i);
  M.middleRows(1, n) = sol;
  return M;
}
}  // namespace

Eigen::VectorXd SequenceSpline::eval(double t) const {
  const int m = static_cast<int>(knots.size());
  if (t <= knots(0)) {
    Eigen::VectorXd d = derivative(knots(0));
    return y.row(0).transpose() + (t - knots(0)) * d;
  }
  if (t >= knots(m - 1)) {
    Eigen::VectorXd d = derivative(knots(m - 1));
    return y.row(m - 1).transpose() + (t - knots(m - 1)) * d;
  }
  int i = static_cast<int>(std::upper_bound(knots.data(), knots.data() + m, t) -
                           knots.data()) - 1;
  i = std::clamp(i, 0, m - 2);
  double h = knots(i + 1) - knots(i);
  double a = (knots(i + 1) - t) / h;
  double b = (t - knots(i)) / h;
  Eigen::VectorXd out =
      a * y.row(i).transpose() + b * y.row(i + 1).transpose() +
      ((a * a * a - a) * m2.row(i).transpose() +
       (b * b * b - b) * m2.row(i + 1).transpose()) *
          (h * h) / 6.0;
  return out;
}

Eigen::VectorXd SequenceSpline::derivative(double t) const {
  const int m = static_cast<int>(knots.size());
  double tc = std::clamp(t, knots(0), knots(m - 1));
  int i = static_cast<int>(
              std::upper_bound(knots.data(), knots.data() + m, tc) -
              knots.data()) - 1;
  i = std::clamp(i, 0, m - 2);
  double h = knots(i + 1) - knots(i);
  double a = (knots(i + 1) - tc) / h;
  double b = (tc - knots(i)) / h;
  return (y.row(i + 1) - y.row(i)).transpose() / h +
         ((3 * b * b - 1) * m2.row(i + 1).transpose() -
          (3 * a * a - 1) * m2.row(i).transpose()) *
             h / 6.0;
}

Mat ControlPath::values_at(double t) const {
  Mat out(static_cast<int>(splines.size()), channels);
  for (size_t i = 0; i < splines.size(); ++i)
    out.row(static_cast<int>(i)) = splines[i].eval(t).transpose();
  return out;
}

ControlPath build_path(const data::SeriesBatch& batch) {
  ControlPath path;
  path.channels = batch.d() + 1;
  path.t_lo = batch.timestamps(0, 0);
  path.t_hi = batch.timestamps(0, batch.t() - 1);
  for (int i = 0; i < batch.n(); ++i) {
    std::vector<int> obs;
    for (int s = 0; s < batch.t(); ++s)
      if (batch.observed(i, s)) obs.push_back(s);
    if (obs.size() < 2)
      throw std::invalid_argument(
          "build_path: need >= 2 observed points per sequence");
    SequenceSpline sp;
    const int m = static_cast<int>(obs.size());
    sp.knots.resize(m);
    sp.y.resize(m, path.channels);
    for (int r = 0; r < m; ++r) {
      double ts = batch.timestamps(i, obs[r]);
      if (r > 0 && ts <= sp.knots(r - 1))
        throw std::invalid_argument(
            "build_path: duplicate or non-increasing timestamps");
      sp.knots(r) = ts;
      for (int j = 0; j < batch.d(); ++j) sp.y(r, j) = batch.values(i, obs[r], j);
      sp.y(r, batch.d()) = ts;  // time channel
    }
    sp.m2 = natural_second_derivatives(sp.knots, sp.y);
    path.splines.push_back(std::move(sp));
  }
  return path;
}

void init_params(nn::ParamStore& ps, RngStream& rng, const NCDEConfig& cfg,
                 int d, const std::string& prefix) {
  cfg.validate();
  nn::Linear{prefix + ".lift", d + 1, cfg.hidden_dim}.init(ps, rng);
  // Small output layer keeps the initial flow near zero.
  nn::MLP{prefix + ".field", cfg.hidden_dim, cfg.field_width,
          cfg.hidden_dim * (d + 1), cfg.field_depth, 0.01}
      .init(ps, rng);
}

namespace {
/// dh = F . dX where F is [N x (d+1)*hidden] laid out channel-major.
Var contract(Tape& t, Var field_out, const Mat& dx, int hidden) {
  const int channels = static_cast<int>(dx.cols());
  const int n = static_cast<int>(dx.rows());
  Var acc;
  for (int c = 0; c < channels; ++c) {
    Mat bc = dx.col(c).replicate(1, hidden);
    Var term = ag::mul_const(t, ag::cols(t, field_out, c * hidden, hidden), bc);
    acc = (c == 0) ? term : ag::add(t, acc, term);
  }
  (void)n;
  return acc;
}
}  // namespace

std::vector<Var> embed(Tape& tape, nn::TapeBind& bind, const ControlPath& path,
                       const NCDEConfig& cfg, int d, int t_len,
                       const std::string& prefix) {
  cfg.validate();
  if (t_len < 1) throw std::invalid_argument("embed: t_len must be >= 1");
  nn::Linear lift{prefix + ".lift", d + 1, cfg.hidden_dim};
  nn::MLP field{prefix + ".field", cfg.hidden_dim, cfg.field_width,
                cfg.hidden_dim * (d + 1), cfg.field_depth, 0.01};

  double span = (t_len > 1) ? (path.t_hi - path.t_lo) / (t_len - 1) : 0.0;
  auto grid_time = [&](int j) { return path.t_lo + span * j; };

  Var h = lift.forward(tape, bind,
                       tape.constant(path.values_at(grid_time(0))));
  std::vector<Var> readout;
  readout.push_back(h);
  const int spi = cfg.solver_steps_per_interval;
  for (int j = 0; j + 1 < t_len; ++j) {
    double t0 = grid_time(j);
    double dt = (grid_time(j + 1) - t0) / spi;
    Mat x_prev = path.values_at(t0);
    for (int s = 0; s < spi; ++s) {
      Mat x_next = path.values_at(t0 + (s + 1) * dt);
      Mat dx = x_next - x_prev;
      Var k1 = contract(tape, field.forward(tape, bind, h), dx,
                        cfg.hidden_dim);
      Var h_mid = ag::add(tape, h, ag::scale(tape, k1, 0.5));
      Var k2 = contract(tape, field.forward(tape, bind, h_mid), dx,
                        cfg.hidden_dim);
      h = ag::add(tape, h, k2);
      x_prev = std::move(x_next);
    }
    readout.push_back(h);
  }
  return readout;
}

Tensor3 embed_values(nn::ParamStore& ps, const ControlPath& path,
                     const NCDEConfig& cfg, int d, int t_len,
                     const std::string& prefix) {
  Tape tape;
  nn::TapeBind bind(tape, ps);
  auto vars = embed(tape, bind, path, cfg, d, t_len, prefix);
  Tensor3 out(static_cast<int>(path.splines.size()), t_len, cfg.hidden_dim);
  for (int s = 0; s < t_len; ++s) out.set_step(s, tape.val(vars[s]));
  return out;
}

}  // namespace kovae::ncde
