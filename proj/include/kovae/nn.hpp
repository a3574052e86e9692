#pragma once

#include <map>
#include <string>
#include <vector>

#include "kovae/autodiff.hpp"
#include "kovae/rng.hpp"

namespace kovae::nn {

using ag::Mat;
using ag::Tape;
using ag::Var;

/// Named parameter tensors plus Adam moment buffers. Iteration order is the
/// key order, so updates and serialization are deterministic.
class ParamStore {
 public:
  Mat& create(const std::string& name, Mat init);
  Mat& get(const std::string& name);
  const Mat& get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<std::string> names() const;
  size_t parameter_count() const;

  Mat& adam_m(const std::string& name);
  Mat& adam_v(const std::string& name);

  ParamStore clone_values() const;  // values only, fresh moments

 private:
  struct Slot {
    Mat value, m, v;
  };
  std::map<std::string, Slot> slots_;
};

/// Binds store parameters to tape leaves for one forward/backward pass and
/// scatters gradients back out.
class TapeBind {
 public:
  TapeBind(Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}
  Var operator()(const std::string& name);
  /// Copies tape gradients into `grads` (zero for untouched params).
  void collect_grads(std::map<std::string, Mat>& grads) const;

 private:
  Tape& tape_;
  const ParamStore& store_;
  std::map<std::string, Var> bound_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 5.0;  // global norm; <= 0 disables
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  /// One update over all entries in `grads`. `lr_scale` rescales the step
  /// (used by the divergence retry).
  void step(ParamStore& store, const std::map<std::string, Mat>& grads,
            double lr_scale = 1.0);
  int64_t steps_taken() const { return t_; }
  void set_steps_taken(int64_t t) { t_ = t; }
  AdamConfig& config() { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// --- layers ---------------------------------------------------------------
// Layers own no storage; they name parameters inside a ParamStore under a
// prefix and build tape graphs on demand.

struct Linear {
  std::string prefix;
  int in = 0, out = 0;
  void init(ParamStore& ps, RngStream& rng, double weight_scale = 1.0) const;
  Var forward(Tape& t, TapeBind& bind, Var x) const;  // x: [N x in]
};

/// Single GRU cell, gate layout r/z/n with separate input and hidden biases.
struct GRUCell {
  std::string prefix;
  int in = 0, hidden = 0;
  void init(ParamStore& ps, RngStream& rng) const;
  /// x: [N x in], h: [N x hidden] -> new hidden [N x hidden]
  Var forward(Tape& t, TapeBind& bind, Var x, Var h) const;
};

/// Stacked unidirectional GRU over a step sequence.
struct GRU {
  std::string prefix;
  int in = 0, hidden = 0, layers = 1;
  void init(ParamStore& ps, RngStream& rng) const;
  /// xs: T matrices [N x in]. Returns top-layer hidden per step.
  std::vector<Var> forward(Tape& t, TapeBind& bind,
                           const std::vector<Var>& xs) const;
  std::vector<GRUCell> cells() const;
};

/// Batch normalization over the feature axis with statistics pooled across
/// batch and time. Running statistics live in the ParamStore (not updated
/// by Adam; updated in-place during training forward).
struct BatchNorm {
  std::string prefix;
  int features = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  void init(ParamStore& ps, RngStream& rng) const;
  /// Running statistics live in a separate state store (serialized with the
  /// model, never touched by the optimizer).
  void init_state(ParamStore& state) const;
  /// xs: step matrices [N x F]. `training` selects pooled-batch statistics
  /// (and updates running stats) vs. running statistics.
  std::vector<Var> forward(Tape& t, TapeBind& bind, ParamStore& ps,
                           const std::vector<Var>& xs, bool training) const;
};

/// MLP with tanh hidden activations; the output layer is linear and can be
/// down-scaled at init (NCDE vector fields start near the zero flow).
struct MLP {
  std::string prefix;
  int in = 0, width = 0, out = 0, hidden_layers = 1;
  double out_scale = 1.0;
  void init(ParamStore& ps, RngStream& rng) const;
  Var forward(Tape& t, TapeBind& bind, Var x) const;
};

/// Global gradient norm across a named-grad map.
double grad_global_norm(const std::map<std::string, Mat>& grads);

}  // namespace kovae::nn
