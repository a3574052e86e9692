#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kovae/data.hpp"
#include "kovae/koopman.hpp"
#include "kovae/ncde.hpp"
#include "kovae/nn.hpp"

namespace kovae::model {

using ag::Mat;
using ag::Tape;
using ag::Var;

struct ModelConfig {
  int d = 5;
  int t_len = 24;
  int k = 8;
  int enc_hidden = 32;
  int dec_hidden = 32;
  int prior_hidden = 32;
  bool irregular = false;
  ncde::NCDEConfig ncde;
  double alpha = 0.009;
  double beta = 0.0009;
  double gamma_eig = 1.0;
  std::vector<double> eig_targets;  // empty = unconstrained
  double ridge = 1e-6;
  double logvar_limit = 8.0;  // heads clamped to [-limit, limit]
  double time_step = 1.0;     // timestamp spacing of generated batches
  void validate() const;
};

enum class Sampling { Stochastic, Mean };

/// Per-step latent codes with their Gaussian parameters. `noise` records the
/// reparameterization draws so a loss can be replayed with frozen noise.
struct LatentSequence {
  Tensor3 z, mu, logvar;  // [N x T x k]
  Tensor3 noise;          // empty in mean mode
};

struct LossBreakdown {
  double recon = 0, pred = 0, kl = 0, eig = 0, total = 0;
  double alpha = 0, beta = 0, gamma_eig = 0;
};

struct PriorRollout {
  LatentSequence z_bar;         // T+1 steps (0..T)
  Tensor3 z;                    // T steps (1..T), z_t = A z_bar_{t-1}
  koopman::KoopmanOperator op;  // fitted on the batch's pooled snapshots
};

/// Records or replays the Gaussian draws of one forward pass.
class NoiseBank {
 public:
  static NoiseBank recording(RngStream rng);
  static NoiseBank replaying(std::vector<Mat> draws);
  Mat draw(int rows, int cols);
  const std::vector<Mat>& draws() const { return draws_; }

 private:
  bool replay_ = false;
  size_t cursor_ = 0;
  RngStream rng_;
  std::vector<Mat> draws_;
};

class KoVAE {
 public:
  KoVAE(ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  nn::ParamStore& bn_state() { return bn_state_; }

  void set_normalization(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
  const Eigen::VectorXd& norm_lo() const { return norm_lo_; }
  const Eigen::VectorXd& norm_hi() const { return norm_hi_; }

  // --- public (value-level) operations -------------------------------------
  LatentSequence posterior_forward(const data::SeriesBatch& batch,
                                   Sampling sampling, uint64_t seed) const;
  PriorRollout prior_rollout(int n, int t_len, uint64_t seed) const;
  Tensor3 decode(const Tensor3& z) const;
  data::SeriesBatch generate(int n, int t_len, uint64_t seed) const;
  /// Loss terms for a normalized batch at the current weights (no gradient).
  LossBreakdown compute_loss(const data::SeriesBatch& batch,
                             uint64_t seed) const;

  // --- training-facing (tape-level) operations ------------------------------
  struct TapeLatent {
    std::vector<Var> z, mu, logvar;
  };
  struct TapePrior {
    TapeLatent z_bar;       // T+1 entries
    Var a;                  // fitted transition [k x k]
    std::vector<Var> z;     // T entries, A * z_bar_{t-1}
  };

  TapeLatent posterior_core(Tape& tape, nn::TapeBind& bind,
                            const data::SeriesBatch& batch, Sampling sampling,
                            bool training, NoiseBank& noise) const;
  std::vector<Var> decode_core(Tape& tape, nn::TapeBind& bind,
                               const std::vector<Var>& zs) const;
  TapePrior prior_core(Tape& tape, nn::TapeBind& bind, int n, int t_len,
                       NoiseBank& noise) const;
  /// Prior conditional parameters evaluated teacher-forced on posterior
  /// samples: returns (mu, logvar) per step 1..T.
  std::pair<std::vector<Var>, std::vector<Var>> prior_teacher_forced(
      Tape& tape, nn::TapeBind& bind, const std::vector<Var>& posterior_z) const;

  /// Builds the full Eq-style objective on the tape. Throws NumericalError
  /// if any term is non-finite.
  Var training_loss(Tape& tape, nn::TapeBind& bind,
                    const data::SeriesBatch& batch, NoiseBank& post_noise,
                    NoiseBank& prior_noise, LossBreakdown& out) const;

  // --- persistence -----------------------------------------------------------
  void save_checkpoint(const std::string& path, int64_t step,
                       const std::string& extra_json = "{}",
                       const std::vector<std::string>& rng_states = {}) const;

  static std::string config_to_json(const ModelConfig& cfg);
  static ModelConfig config_from_json(const std::string& text);

 private:
  ModelConfig cfg_;
  nn::ParamStore params_;
  mutable nn::ParamStore bn_state_;  // running statistics, not optimizer-owned
  Eigen::VectorXd norm_lo_, norm_hi_;
};

struct LoadedCheckpoint {
  KoVAE model;
  int64_t step = 0;
  std::string extra_json;
  std::vector<std::string> rng_states;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Closed-form KL(N(mu_q, exp(lv_q)) || N(mu_p, exp(lv_p))) for diagonal
/// Gaussians, summed over all entries.
double gaussian_kl(const Mat& mu_q, const Mat& lv_q, const Mat& mu_p,
                   const Mat& lv_p);

}  // namespace kovae::model
