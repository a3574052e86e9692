#pragma once

#include <string>
#include <vector>

#include "kovae/data.hpp"
#include "kovae/model.hpp"

namespace kovae::eval {

/// Mean +- std over independent metric runs.
struct Score {
  double mean = 0;
  double stddev = 0;
  std::vector<double> runs;
};

/// Post-hoc classifier/predictor capacities are fixed and versioned here so
/// scores stay comparable across experiments.
struct MetricConfig {
  int runs = 3;
  int train_steps = 2000;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double train_fraction = 0.8;
  int layers = 2;
  int hidden_for(int d, int t) const { return std::max(d, t) / 2; }
};

/// |1/2 - accuracy| of a fresh 2-layer GRU classifier separating real from
/// generated sequences, repeated over `cfg.runs` classifier seeds.
Score discriminative_score(const data::SeriesBatch& real,
                           const data::SeriesBatch& fake, uint64_t seed,
                           const MetricConfig& cfg = {});

/// Train-on-synthetic test-on-real one-step-ahead MAE (full next-step
/// feature vector), repeated over `cfg.runs` predictor seeds.
Score predictive_score(const data::SeriesBatch& real,
                       const data::SeriesBatch& fake, uint64_t seed,
                       const MetricConfig& cfg = {});

/// The "Original" baseline row: predictor trained and evaluated on real data
/// halves under the same protocol.
Score original_predictive_score(const data::SeriesBatch& real, uint64_t seed,
                                const MetricConfig& cfg = {});

struct EvalReport {
  Score discriminative;
  Score predictive;
  double original_predictive = 0;
  double kde_l1 = 0;
  std::vector<std::string> plots;
  std::string to_json() const;
};

/// 1-D Gaussian KDE over pooled feature-averaged values; bandwidth by
/// Scott's rule over the pooled sample.
struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
};
KdeCurve kde_curve(const std::vector<double>& values, double grid_lo,
                   double grid_hi, int grid_points = 512);
/// L1 distance between the two KDE densities on a shared grid
/// (2 = disjoint supports, 0 = identical).
double kde_l1_distance(const std::vector<double>& a,
                       const std::vector<double>& b, int grid_points = 512);

/// Feature-averaged length-T vector per sequence (the t-SNE / KDE
/// flattening convention).
std::vector<std::vector<double>> flatten_sequences(
    const data::SeriesBatch& batch);

/// Joint 2-D t-SNE of up to `max_points` flattened sequences per side plus a
/// real-vs-fake KDE overlay. Returns the KDE L1 distance and writes plot
/// files when `out_prefix` is non-empty.
double qualitative_report(const data::SeriesBatch& real,
                          const data::SeriesBatch& fake,
                          const std::string& out_prefix, uint64_t seed,
                          int max_points = 1000,
                          std::vector<std::string>* plot_paths = nullptr);

struct ReconstructionReport {
  std::vector<double> per_feature_mse;  // over observed positions
  double mse = 0;                       // all positions
  double mse_observed = 0;
  double mse_masked = 0;                // inference error at dropped points
  std::vector<std::string> plots;
};

/// Mean-mode posterior -> decode -> denormalize against the (denormalized)
/// input batch; in irregular mode the masked positions measure inference.
ReconstructionReport reconstruction_report(const model::KoVAE& m,
                                           const data::SeriesBatch& batch,
                                           const std::string& out_prefix);

}  // namespace kovae::eval
