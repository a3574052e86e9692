#pragma once

#include <vector>

#include <Eigen/Dense>

#include "kovae/data.hpp"
#include "kovae/nn.hpp"

namespace kovae::ncde {

using ag::Mat;
using ag::Tape;
using ag::Var;

/// Natural cubic spline through one sequence's observed points, one column
/// per channel (the last channel is time itself). Inside the knot range the
/// spline interpolates exactly; outside it extends linearly with the
/// boundary slope, keeping the path C^1.
struct SequenceSpline {
  Eigen::VectorXd knots;  // observed timestamps, strictly increasing
  Eigen::MatrixXd y;      // [m x channels] observed values
  Eigen::MatrixXd m2;     // [m x channels] second derivatives (natural BC)
  Eigen::VectorXd eval(double t) const;
  Eigen::VectorXd derivative(double t) const;
};

/// Interpolated control paths X(t) for a whole batch, with the common time
/// extent of the batch recorded so the readout grid is identical no matter
/// which observations were dropped.
struct ControlPath {
  std::vector<SequenceSpline> splines;  // one per sequence
  int channels = 0;                     // d + 1 (time appended)
  double t_lo = 0, t_hi = 0;            // full grid extent of the batch
  /// X(t) for every sequence: [N x channels].
  Mat values_at(double t) const;
};

struct NCDEConfig {
  int hidden_dim = 16;
  int field_width = 48;
  int field_depth = 1;
  int solver_steps_per_interval = 4;
  void validate() const;
};

/// Spline construction over observed (timestamp, value) points; time is
/// appended as the last channel. Requires >= 2 observations per sequence and
/// strictly increasing observed timestamps.
ControlPath build_path(const data::SeriesBatch& batch);

/// Parameter shapes for the embedding block under `prefix`; `d` is the raw
/// feature count (the path has d+1 channels).
void init_params(nn::ParamStore& ps, RngStream& rng, const NCDEConfig& cfg,
                 int d, const std::string& prefix = "ncde");

/// Integrates dh = f_theta(h) dX(t) with a fixed-step midpoint scheme from
/// the first grid point, reading out the hidden state at t_len uniform grid
/// points spanning [t_lo, t_hi]. h(t_0) is a learned linear lift of X(t_0).
/// Returns one [N x hidden_dim] Var per grid point.
std::vector<Var> embed(Tape& tape, nn::TapeBind& bind, const ControlPath& path,
                       const NCDEConfig& cfg, int d, int t_len,
                       const std::string& prefix = "ncde");

/// Convenience non-autodiff wrapper returning a tensor.
Tensor3 embed_values(nn::ParamStore& ps, const ControlPath& path,
                     const NCDEConfig& cfg, int d, int t_len,
                     const std::string& prefix = "ncde");

}  // namespace kovae::ncde
