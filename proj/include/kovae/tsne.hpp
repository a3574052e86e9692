#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace kovae::tsne {

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 500;
  double learning_rate = 200.0;
  int exaggeration_iters = 100;
  double exaggeration = 12.0;
};

/// Exact (O(n^2)) 2-D t-SNE; adequate for the <= 2000-point diagnostic
/// clouds this project draws.
Eigen::MatrixXd embed_2d(const Eigen::MatrixXd& points, uint64_t seed,
                         const TsneConfig& cfg = {});

}  // namespace kovae::tsne
