#pragma once

#include <string>
#include <vector>

#include "kovae/config.hpp"
#include "kovae/data.hpp"
#include "kovae/model.hpp"

namespace kovae::train {

/// Everything one experiment needs; resolved from a key=value config file
/// plus command-line overrides.
struct ExperimentConfig {
  // [data]
  std::string dataset = "sines";  // sines | pendulum | csv
  int n_sequences = 10000;
  int t_len = 24;
  int d = 5;
  std::string csv_path;
  data::PendulumParams pendulum;
  double drop_rate = 0.0;  // > 0 switches on the irregular pipeline
  double train_fraction = 0.8;

  // [model] + [loss]
  model::ModelConfig model;

  // [optim]
  std::string optimizer = "adam";
  double learning_rate = 1e-3;
  double lr_final = 0.0;  // > 0 enables exponential decay toward this rate
  int batch_size = 64;
  int steps = 10000;
  double grad_clip = 5.0;
  int checkpoint_every = 5000;
  int log_every = 25;

  // [run] — streams are derived from `seed` unless overridden, so the data
  // stream can be repinned without touching weight init.
  uint64_t seed = 1;
  uint64_t data_seed = 0;
  uint64_t init_seed = 0;
  uint64_t sample_seed = 0;

  uint64_t resolved_data_seed() const;
  uint64_t resolved_init_seed() const;
  uint64_t resolved_sample_seed() const;

  void validate() const;
  static ExperimentConfig from_keyvalues(const cfg::KeyValues& kv);
  cfg::KeyValues to_keyvalues() const;
};

/// Raw (unnormalized, fully observed) dataset for the configured source.
data::SeriesBatch make_dataset(const ExperimentConfig& cfg);

struct TrainResult {
  model::KoVAE model;
  model::LossBreakdown first_loss;
  model::LossBreakdown final_loss;
  std::string checkpoint_path;
  std::string metrics_path;
  int64_t steps_run = 0;
  bool halted_on_divergence = false;
  int divergence_step = -1;
  data::SeriesBatch train_split;  // normalized training data
  data::SeriesBatch test_split;   // raw held-out data
};

/// Full optimization loop: dataset build, split, (drop), normalize, Adam
/// steps with per-step metrics logging, periodic + final checkpoints.
/// On a non-finite loss the step retries once at a 10x smaller rate before
/// halting with the offending step recorded.
TrainResult train(const ExperimentConfig& cfg, const std::string& out_dir);

struct SweepCell {
  double alpha = 0;
  double beta = 0;
  double discriminative = 0;
  bool failed = false;
  std::string error;
};

/// Grid search over (alpha, beta); per-cell failures are recorded, not
/// propagated. Emits sweep.csv and a score scatter image under out_dir.
std::vector<SweepCell> sweep(const ExperimentConfig& base,
                             const std::vector<double>& alpha_grid,
                             const std::vector<double>& beta_grid,
                             const std::string& out_dir);

}  // namespace kovae::train
