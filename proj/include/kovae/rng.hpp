#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace kovae {

/// Deterministic random stream. Each consumer derives its own stream from a
/// (seed, name) pair so that e.g. the data stream and the weight-init stream
/// never interleave. Gaussian draws use Box-Muller on top of the raw engine,
/// which keeps the serialized state equal to the engine state.
class RngStream {
 public:
  RngStream() : RngStream(0, "default") {}
  RngStream(uint64_t seed, const std::string& name);

  double uniform();                      // U[0, 1)
  double uniform(double lo, double hi);  // U[lo, hi)
  double normal();                       // N(0, 1)
  uint64_t next_u64();
  /// Uniform integer in [0, n), n >= 1.
  uint64_t uniform_index(uint64_t n);

  Eigen::MatrixXd normal_matrix(int rows, int cols);
  Eigen::MatrixXd uniform_matrix(int rows, int cols, double lo, double hi);

  /// Fisher-Yates shuffle of [0, n).
  std::vector<int> permutation(int n);

  std::string serialize() const;
  static RngStream deserialize(const std::string& text);

 private:
  uint64_t state_;  // splitmix64 state

  friend bool operator==(const RngStream& a, const RngStream& b) {
    return a.state_ == b.state_;
  }
};

/// Stable 64-bit hash of a string (FNV-1a); used to derive stream seeds.
uint64_t hash_name(const std::string& name);

}  // namespace kovae
