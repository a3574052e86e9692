#include "kovae/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace kovae {

namespace {
// splitmix64 step; passes BigCrush and keeps the stream state to one word.
inline uint64_t splitmix64(uint64_t& s) {
  uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

uint64_t hash_name(const std::string& name) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(uint64_t seed, const std::string& name) {
  state_ = seed ^ 0x2545f4914f6cdd1dULL;
  uint64_t tag = hash_name(name);
  // Two mixing rounds decorrelate (seed, name) pairs.
  state_ += splitmix64(tag);
  (void)splitmix64(state_);
}

uint64_t RngStream::next_u64() { return splitmix64(state_); }

double RngStream::uniform() {
  return (next_u64() >> 11) * 0x1.0p-53;  // 53-bit mantissa in [0,1)
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
  // Box-Muller, cosine branch only: stateless beyond the engine.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t RngStream::uniform_index(uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be >= 1");
  // Rejection sampling removes modulo bias.
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

Eigen::MatrixXd RngStream::normal_matrix(int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

Eigen::MatrixXd RngStream::uniform_matrix(int rows, int cols, double lo,
                                          double hi) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = uniform(lo, hi);
  return m;
}

std::vector<int> RngStream::permutation(int n) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(uniform_index(static_cast<uint64_t>(i) + 1));
    std::swap(p[i], p[j]);
  }
  return p;
}

std::string RngStream::serialize() const { return std::to_string(state_); }

RngStream RngStream::deserialize(const std::string& text) {
  RngStream s;
  s.state_ = std::stoull(text);
  return s;
}

}  // namespace kovae
