#include "kovae/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace kovae::nn {

Mat& ParamStore::create(const std::string& name, Mat init) {
  auto [it, inserted] = slots_.insert({name, Slot{}});
  if (!inserted)
    throw std::invalid_argument("param '" + name + "' already exists");
  it->second.value = std::move(init);
  it->second.m = Mat::Zero(it->second.value.rows(), it->second.value.cols());
  it->second.v = Mat::Zero(it->second.value.rows(), it->second.value.cols());
  return it->second.value;
}

Mat& ParamStore::get(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end())
    throw std::out_of_range("param '" + name + "' not found");
  return it->second.value;
}

const Mat& ParamStore::get(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end())
    throw std::out_of_range("param '" + name + "' not found");
  return it->second.value;
}

bool ParamStore::has(const std::string& name) const {
  return slots_.count(name) > 0;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : slots_) out.push_back(k);
  return out;
}

size_t ParamStore::parameter_count() const {
  size_t n = 0;
  for (const auto& [k, s] : slots_) n += s.value.size();
  return n;
}

Mat& ParamStore::adam_m(const std::string& name) { return slots_.at(name).m; }
Mat& ParamStore::adam_v(const std::string& name) { return slots_.at(name).v; }

ParamStore ParamStore::clone_values() const {
  ParamStore out;
  for (const auto& [k, s] : slots_) out.create(k, s.value);
  return out;
}

Var TapeBind::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_.leaf(store_.get(name), true);
  bound_[name] = v;
  return v;
}

void TapeBind::collect_grads(std::map<std::string, Mat>& grads) const {
  for (const auto& [name, var] : bound_) grads[name] = tape_.grad(var);
}

void Adam::step(ParamStore& store, const std::map<std::string, Mat>& grads,
                double lr_scale) {
  ++t_;
  double clip_scale = 1.0;
  if (cfg_.grad_clip > 0.0) {
    double norm = grad_global_norm(grads);
    if (norm > cfg_.grad_clip) clip_scale = cfg_.grad_clip / norm;
  }
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, g_raw] : grads) {
    if (g_raw.size() == 0) continue;
    Mat g = clip_scale * g_raw;
    Mat& m = store.adam_m(name);
    Mat& v = store.adam_v(name);
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v.array().matrix() +
        (1.0 - cfg_.beta2) * g.array().square().matrix();
    Mat mhat = m / bc1;
    Mat vhat = v / bc2;
    store.get(name).array() -=
        lr_scale * cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
  }
}

double grad_global_norm(const std::map<std::string, Mat>& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

// --- Linear ----------------------------------------------------------------

void Linear::init(ParamStore& ps, RngStream& rng, double weight_scale) const {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  ps.create(prefix + ".W",
            weight_scale * rng.uniform_matrix(in, out, -bound, bound));
  ps.create(prefix + ".b", Mat::Zero(1, out));
}

Var Linear::forward(Tape& t, TapeBind& bind, Var x) const {
  return ag::add_rowvec(t, ag::matmul(t, x, bind(prefix + ".W")),
                        bind(prefix + ".b"));
}

// --- GRU --------------------------------------------------------------------

void GRUCell::init(ParamStore& ps, RngStream& rng) const {
  double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto u = [&](int r, int c) { return rng.uniform_matrix(r, c, -bound, bound); };
  for (const char* gate : {"r", "z", "n"}) {
    ps.create(prefix + ".Wx" + gate, u(in, hidden));
    ps.create(prefix + ".Wh" + gate, u(hidden, hidden));
    ps.create(prefix + ".bx" + gate, u(1, hidden));
    ps.create(prefix + ".bh" + gate, u(1, hidden));
  }
}

Var GRUCell::forward(Tape& t, TapeBind& bind, Var x, Var h) const {
  auto gate_pre = [&](const char* gate) {
    Var xs = ag::add_rowvec(t, ag::matmul(t, x, bind(prefix + ".Wx" + gate)),
                            bind(prefix + std::string(".bx") + gate));
    Var hs = ag::add_rowvec(t, ag::matmul(t, h, bind(prefix + ".Wh" + gate)),
                            bind(prefix + std::string(".bh") + gate));
    return std::pair{xs, hs};
  };
  auto [rx, rh] = gate_pre("r");
  Var r = ag::sigmoid(t, ag::add(t, rx, rh));
  auto [zx, zh] = gate_pre("z");
  Var z = ag::sigmoid(t, ag::add(t, zx, zh));
  auto [nx, nh] = gate_pre("n");
  Var n = ag::tanh_(t, ag::add(t, nx, ag::mul(t, r, nh)));
  // h' = (1 - z) .* n + z .* h
  Var one_minus_z = ag::add_scalar(t, ag::neg(t, z), 1.0);
  return ag::add(t, ag::mul(t, one_minus_z, n), ag::mul(t, z, h));
}

std::vector<GRUCell> GRU::cells() const {
  std::vector<GRUCell> cs;
  for (int l = 0; l < layers; ++l) {
    GRUCell c;
    c.prefix = prefix + ".l" + std::to_string(l);
    c.in = (l == 0) ? in : hidden;
    c.hidden = hidden;
    cs.push_back(c);
  }
  return cs;
}

void GRU::init(ParamStore& ps, RngStream& rng) const {
  for (const auto& c : cells()) c.init(ps, rng);
}

std::vector<Var> GRU::forward(Tape& t, TapeBind& bind,
                              const std::vector<Var>& xs) const {
  auto cs = cells();
  int n = static_cast<int>(t.val(xs[0]).rows());
  std::vector<Var> seq = xs;
  for (const auto& c : cs) {
    Var h = t.constant(Mat::Zero(n, hidden));
    std::vector<Var> out;
    out.reserve(seq.size());
    for (Var x : seq) {
      h = c.forward(t, bind, x, h);
      out.push_back(h);
    }
    seq = std::move(out);
  }
  return seq;
}

// --- BatchNorm ---------------------------------------------------------------

void BatchNorm::init(ParamStore& ps, RngStream&) const {
  ps.create(prefix + ".gamma", Mat::Ones(1, features));
  ps.create(prefix + ".beta", Mat::Zero(1, features));
}

void BatchNorm::init_state(ParamStore& state) const {
  state.create(prefix + ".running_mean", Mat::Zero(1, features));
  state.create(prefix + ".running_var", Mat::Ones(1, features));
}

std::vector<Var> BatchNorm::forward(Tape& t, TapeBind& bind, ParamStore& state,
                                    const std::vector<Var>& xs,
                                    bool training) const {
  Var gamma = bind(prefix + ".gamma");
  Var beta = bind(prefix + ".beta");
  Mat& run_mean = state.get(prefix + ".running_mean");
  Mat& run_var = state.get(prefix + ".running_var");

  std::vector<Var> out;
  out.reserve(xs.size());
  if (training) {
    Var stacked = ag::vcat(t, xs);
    Var mu = ag::colwise_mean(t, stacked);
    Var centered = ag::sub_rowvec(t, stacked, mu);
    Var var = ag::colwise_mean(t, ag::mul(t, centered, centered));
    Var inv_std = ag::cwise_pow(t, ag::add_scalar(t, var, eps), -0.5);
    Var norm = ag::mul_rowvec(t, centered, inv_std);
    Var y = ag::add_rowvec(t, ag::mul_rowvec(t, norm, gamma), beta);

    run_mean = (1.0 - momentum) * run_mean + momentum * t.val(mu);
    run_var = (1.0 - momentum) * run_var + momentum * t.val(var);

    int n = static_cast<int>(t.val(xs[0]).rows());
    for (size_t s = 0; s < xs.size(); ++s)
      out.push_back(ag::rows(t, y, static_cast<int>(s) * n, n));
  } else {
    Mat inv_std_c = (run_var.array() + eps).sqrt().inverse().matrix();
    Var mean_c = t.constant(run_mean);
    for (Var x : xs) {
      int n = static_cast<int>(t.val(x).rows());
      Var centered = ag::sub_rowvec(t, x, mean_c);
      Var norm = ag::mul_const(t, centered, inv_std_c.replicate(n, 1));
      out.push_back(ag::add_rowvec(t, ag::mul_rowvec(t, norm, gamma), beta));
    }
  }
  return out;
}

// --- MLP ---------------------------------------------------------------------

void MLP::init(ParamStore& ps, RngStream& rng) const {
  int d_in = in;
  for (int l = 0; l < hidden_layers; ++l) {
    Linear{prefix + ".h" + std::to_string(l), d_in, width}.init(ps, rng);
    d_in = width;
  }
  Linear{prefix + ".out", d_in, out}.init(ps, rng, out_scale);
}

Var MLP::forward(Tape& t, TapeBind& bind, Var x) const {
  Var h = x;
  int d_in = in;
  for (int l = 0; l < hidden_layers; ++l) {
    h = ag::tanh_(
        t, Linear{prefix + ".h" + std::to_string(l), d_in, width}.forward(
               t, bind, h));
    d_in = width;
  }
  return Linear{prefix + ".out", d_in, out}.forward(t, bind, h);
}

}  // namespace kovae::nn
