#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kovae/rng.hpp"
#include "kovae/tensor.hpp"

namespace kovae::data {

/// Batch of (possibly irregularly observed) multivariate sequences.
/// Masked-out positions keep the last observed value as a placeholder; code
/// that respects the mask never reads them, code that ignores it fails
/// loudly in tests instead of reading garbage.
struct SeriesBatch {
  Tensor3 values;               // [N x T x d]
  Eigen::MatrixXd timestamps;   // [N x T]
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;  // [N x T]
  Eigen::VectorXd norm_lo, norm_hi;  // per-feature scaling; empty = unset

  int n() const { return values.n(); }
  int t() const { return values.t(); }
  int d() const { return values.f(); }
  bool normalized() const { return norm_lo.size() > 0; }
  bool observed(int i, int s) const { return mask(i, s) != 0; }
  int observed_count(int i) const;

  SeriesBatch select(const std::vector<int>& rows) const;
};

struct PendulumParams {
  double length = 1.0;      // meters
  double gravity = 9.8;     // m/s^2
  double dt = 0.1;          // seconds
  double horizon = 17.0;    // seconds, yields T = 170
  double noise_scale = 0.08;
  double theta0_lo = 0.5;   // radians
  double theta0_hi = 2.7;
  void validate() const;
  int steps() const;  // T
};

/// Multivariate sine benchmark: values[i,t,j] = sin(2*pi*eta*t + theta)
/// with per sequence-channel eta ~ U[0,1), theta ~ U[-pi,pi); t is the
/// 0-based step index. Not normalized.
SeriesBatch generate_sines(int n, int t_len, int d, uint64_t seed);

/// Damped-free nonlinear pendulum trajectories theta'' = -(g/l) sin(theta),
/// theta(0) ~ U(theta0_lo, theta0_hi), theta'(0) = 0, integrated with
/// fixed-step RK4 at dt; state per step is (theta, theta_dot) plus additive
/// N(0, noise_scale^2) sensor noise on every scalar.
SeriesBatch generate_pendulum(int n, const PendulumParams& params,
                              uint64_t seed);

/// Clean single trajectory (no noise), exposed so tests can check energy
/// conservation against a finer reference integration.
Eigen::MatrixXd pendulum_trajectory(double theta0, const PendulumParams& params,
                                    double dt_override = 0.0);

/// Sliding windows of length t_len, stride 1, over a chronologically ordered
/// numeric CSV with d columns; window order is shuffled under `seed`.
SeriesBatch load_csv_dataset(const std::string& path, int d, int t_len,
                             uint64_t seed);

/// Per-feature min/max scaling to [0,1] computed over observed entries.
/// Constant features map to 0.5. Fails if the batch is already normalized.
SeriesBatch normalize(const SeriesBatch& batch);
/// Applies previously computed ranges (train-split statistics) to a batch.
SeriesBatch apply_normalization(const SeriesBatch& batch,
                                const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi);
SeriesBatch denormalize(const SeriesBatch& batch);

/// Masks out exactly round(rate*T) interior positions per sequence, chosen
/// uniformly at random; position 0 is always kept. Placeholders at masked
/// positions hold the last observed value. Timestamps are unchanged.
SeriesBatch drop_observations(const SeriesBatch& batch, double rate,
                              uint64_t seed);

void save_batch(const SeriesBatch& batch, const std::string& path);
SeriesBatch load_batch(const std::string& path);

/// Deterministic train/test split (shuffle under seed, `train_fraction`
/// head goes to train).
std::pair<SeriesBatch, SeriesBatch> split_batch(const SeriesBatch& batch,
                                                double train_fraction,
                                                uint64_t seed);

}  // namespace kovae::data
