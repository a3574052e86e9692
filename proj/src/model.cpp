#include "kovae/model.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kovae/archive.hpp"

namespace kovae::model {

using nlohmann::json;

double gaussian_kl(const Mat& mu_q, const Mat& lv_q, const Mat& mu_p,
                   const Mat& lv_p) {
  Mat d = mu_q - mu_p;
  Mat term = lv_p - lv_q +
             (lv_q.array().exp() + d.array().square()).matrix().cwiseProduct(
                 (-lv_p.array()).exp().matrix()) -
             Mat::Ones(mu_q.rows(), mu_q.cols());
  return 0.5 * term.sum();
}

void ModelConfig::validate() const {
  if (d < 1 || t_len < 2 || k < 1)
    throw std::invalid_argument("model: d >= 1, t_len >= 2, k >= 1 required");
  if (enc_hidden < 1 || dec_hidden < 1 || prior_hidden < 1)
    throw std::invalid_argument("model: hidden widths must be >= 1");
  if (alpha < 0 || beta < 0 || gamma_eig < 0)
    throw std::invalid_argument("model: loss weights must be >= 0");
  if (static_cast<int>(eig_targets.size()) > k)
    throw std::invalid_argument("model: more eigenvalue targets than k");
  if (irregular) ncde.validate();
}

NoiseBank NoiseBank::recording(RngStream rng) {
  NoiseBank b;
  b.replay_ = false;
  b.rng_ = std::move(rng);
  return b;
}

NoiseBank NoiseBank::replaying(std::vector<Mat> draws) {
  NoiseBank b;
  b.replay_ = true;
  b.draws_ = std::move(draws);
  return b;
}

Mat NoiseBank::draw(int rows, int cols) {
  if (replay_) {
    if (cursor_ >= draws_.size())
      throw std::logic_error("NoiseBank: replay exhausted");
    return draws_[cursor_++];
  }
  draws_.push_back(rng_.normal_matrix(rows, cols));
  return draws_.back();
}

KoVAE::KoVAE(ModelConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  RngStream rng(init_seed, "model_init");
  int enc_in = cfg_.irregular ? cfg_.ncde.hidden_dim : cfg_.d;
  if (cfg_.irregular) ncde::init_params(params_, rng, cfg_.ncde, cfg_.d);
  nn::GRU{"enc.gru", enc_in, cfg_.enc_hidden, 1}.init(params_, rng);
  nn::BatchNorm bn{"enc.bn", cfg_.enc_hidden};
  bn.init(params_, rng);
  bn.init_state(bn_state_);
  nn::Linear{"enc.mu", cfg_.enc_hidden, cfg_.k}.init(params_, rng);
  nn::Linear{"enc.logvar", cfg_.enc_hidden, cfg_.k}.init(params_, rng);
  nn::GRU{"dec.gru", cfg_.k, cfg_.dec_hidden, 1}.init(params_, rng);
  nn::Linear{"dec.out", cfg_.dec_hidden, cfg_.d}.init(params_, rng);
  nn::GRU{"prior.gru", cfg_.k, cfg_.prior_hidden, 1}.init(params_, rng);
  nn::Linear{"prior.mu", cfg_.prior_hidden, cfg_.k}.init(params_, rng);
  nn::Linear{"prior.logvar", cfg_.prior_hidden, cfg_.k}.init(params_, rng);
}

void KoVAE::set_normalization(const Eigen::VectorXd& lo,
                              const Eigen::VectorXd& hi) {
  norm_lo_ = lo;
  norm_hi_ = hi;
}

namespace {
std::vector<Var> batch_steps(Tape& tape, const data::SeriesBatch& batch) {
  std::vector<Var> xs;
  xs.reserve(batch.t());
  for (int s = 0; s < batch.t(); ++s) xs.push_back(tape.constant(batch.values.step(s)));
  return xs;
}

Tensor3 steps_to_tensor(const Tape& tape, const std::vector<Var>& vars) {
  int t = static_cast<int>(vars.size());
  int n = static_cast<int>(tape.val(vars[0]).rows());
  int f = static_cast<int>(tape.val(vars[0]).cols());
  Tensor3 out(n, t, f);
  for (int s = 0; s < t; ++s) out.set_step(s, tape.val(vars[s]));
  return out;
}
}  // namespace

KoVAE::TapeLatent KoVAE::posterior_core(Tape& tape, nn::TapeBind& bind,
                                        const data::SeriesBatch& batch,
                                        Sampling sampling, bool training,
                                        NoiseBank& noise) const {
  for (double v : batch.values.raw())
    if (!std::isfinite(v)) throw NumericalError("posterior: NaN in inputs");

  std::vector<Var> xs;
  if (cfg_.irregular) {
    ncde::ControlPath path = ncde::build_path(batch);
    xs = ncde::embed(tape, bind, path, cfg_.ncde, cfg_.d, cfg_.t_len);
  } else {
    xs = batch_steps(tape, batch);
  }

  nn::GRU enc{"enc.gru", cfg_.irregular ? cfg_.ncde.hidden_dim : cfg_.d,
              cfg_.enc_hidden, 1};
  std::vector<Var> hs = enc.forward(tape, bind, xs);
  nn::BatchNorm bn{"enc.bn", cfg_.enc_hidden};
  hs = bn.forward(tape, bind, bn_state_, hs, training);

  nn::Linear mu_head{"enc.mu", cfg_.enc_hidden, cfg_.k};
  nn::Linear lv_head{"enc.logvar", cfg_.enc_hidden, cfg_.k};
  TapeLatent out;
  int n = batch.n();
  for (Var h : hs) {
    Var mu = mu_head.forward(tape, bind, h);
    Var lv = ag::clamp(tape, lv_head.forward(tape, bind, h),
                       -cfg_.logvar_limit, cfg_.logvar_limit);
    out.mu.push_back(mu);
    out.logvar.push_back(lv);
    if (sampling == Sampling::Stochastic) {
      Mat eps = noise.draw(n, cfg_.k);
      Var sigma = ag::exp_(tape, ag::scale(tape, lv, 0.5));
      out.z.push_back(ag::add(tape, mu, ag::mul_const(tape, sigma, eps)));
    } else {
      out.z.push_back(mu);
    }
  }
  return out;
}

std::vector<Var> KoVAE::decode_core(Tape& tape, nn::TapeBind& bind,
                                    const std::vector<Var>& zs) const {
  nn::GRU dec{"dec.gru", cfg_.k, cfg_.dec_hidden, 1};
  std::vector<Var> hs = dec.forward(tape, bind, zs);
  nn::Linear out_head{"dec.out", cfg_.dec_hidden, cfg_.d};
  std::vector<Var> xs;
  xs.reserve(hs.size());
  for (Var h : hs)
    xs.push_back(ag::sigmoid(tape, out_head.forward(tape, bind, h)));
  return xs;
}

KoVAE::TapePrior KoVAE::prior_core(Tape& tape, nn::TapeBind& bind, int n,
                                   int t_len, NoiseBank& noise) const {
  if (t_len < 2) throw std::invalid_argument("prior_rollout: t_len >= 2");
  nn::GRUCell cell{"prior.gru.l0", cfg_.k, cfg_.prior_hidden};
  nn::Linear mu_head{"prior.mu", cfg_.prior_hidden, cfg_.k};
  nn::Linear lv_head{"prior.logvar", cfg_.prior_hidden, cfg_.k};

  TapePrior out;
  Var h = tape.constant(Mat::Zero(n, cfg_.prior_hidden));
  Var input = tape.constant(Mat::Zero(n, cfg_.k));  // z_tilde_0 := 0
  // T+1 autoregressive steps produce z_bar_{0..T}.
  for (int s = 0; s <= t_len; ++s) {
    h = cell.forward(tape, bind, input, h);
    Var mu = mu_head.forward(tape, bind, h);
    Var lv = ag::clamp(tape, lv_head.forward(tape, bind, h),
                       -cfg_.logvar_limit, cfg_.logvar_limit);
    Mat eps = noise.draw(n, cfg_.k);
    Var sigma = ag::exp_(tape, ag::scale(tape, lv, 0.5));
    Var z = ag::add(tape, mu, ag::mul_const(tape, sigma, eps));
    out.z_bar.mu.push_back(mu);
    out.z_bar.logvar.push_back(lv);
    out.z_bar.z.push_back(z);
    input = z;
  }

  // Pooled snapshots across the batch: rows of Z0 are z_bar_{0..T-1} for
  // every sequence, rows of Z1 the shifted counterparts.
  std::vector<Var> z0_parts(out.z_bar.z.begin(), out.z_bar.z.end() - 1);
  std::vector<Var> z1_parts(out.z_bar.z.begin() + 1, out.z_bar.z.end());
  Var z0 = ag::vcat(tape, z0_parts);
  Var z1 = ag::vcat(tape, z1_parts);
  out.a = ag::lstsq_transition(tape, z0, z1, cfg_.ridge);

  Var a_t = ag::transpose(tape, out.a);
  for (int s = 0; s < t_len; ++s)
    out.z.push_back(ag::matmul(tape, out.z_bar.z[s], a_t));
  return out;
}

std::pair<std::vector<Var>, std::vector<Var>> KoVAE::prior_teacher_forced(
    Tape& tape, nn::TapeBind& bind, const std::vector<Var>& posterior_z) const {
  nn::GRUCell cell{"prior.gru.l0", cfg_.k, cfg_.prior_hidden};
  nn::Linear mu_head{"prior.mu", cfg_.prior_hidden, cfg_.k};
  nn::Linear lv_head{"prior.logvar", cfg_.prior_hidden, cfg_.k};
  int n = static_cast<int>(tape.val(posterior_z[0]).rows());
  Var h = tape.constant(Mat::Zero(n, cfg_.prior_hidden));
  Var input = tape.constant(Mat::Zero(n, cfg_.k));
  std::vector<Var> mus, lvs;
  for (size_t s = 0; s < posterior_z.size(); ++s) {
    h = cell.forward(tape, bind, input, h);
    mus.push_back(mu_head.forward(tape, bind, h));
    lvs.push_back(ag::clamp(tape, lv_head.forward(tape, bind, h),
                            -cfg_.logvar_limit, cfg_.logvar_limit));
    input = posterior_z[s];
  }
  return {mus, lvs};
}

Var KoVAE::training_loss(Tape& tape, nn::TapeBind& bind,
                         const data::SeriesBatch& batch, NoiseBank& post_noise,
                         NoiseBank& prior_noise, LossBreakdown& out) const {
  const int n = batch.n();
  const int t_len = batch.t();

  TapeLatent post = posterior_core(tape, bind, batch, Sampling::Stochastic,
                                   /*training=*/true, post_noise);
  std::vector<Var> recon_steps = decode_core(tape, bind, post.z);

  // Reconstruction: squared error over observed entries only, summed per
  // sequence (the Gaussian sequence log-likelihood up to constants) and
  // averaged over the batch. The alpha/beta defaults are calibrated to this
  // reduction.
  Var recon_sum;
  for (int s = 0; s < t_len; ++s) {
    Mat m(n, cfg_.d);
    for (int i = 0; i < n; ++i)
      m.row(i).setConstant(batch.observed(i, s) ? 1.0 : 0.0);
    Var diff = ag::sub(tape, recon_steps[s], tape.constant(batch.values.step(s)));
    Var sq = ag::mul_const(tape, ag::mul(tape, diff, diff), m);
    Var ssum = ag::sum(tape, sq);
    recon_sum = (s == 0) ? ssum : ag::add(tape, recon_sum, ssum);
  }
  Var recon = ag::scale(tape, recon_sum, 1.0 / n);

  // Prediction: misfit of the fitted linear map on the prior's own samples,
  // same sum-over-sequence reduction.
  TapePrior prior = prior_core(tape, bind, n, t_len, prior_noise);
  Var pred_sum;
  for (int s = 0; s < t_len; ++s) {
    Var diff = ag::sub(tape, prior.z[s], prior.z_bar.z[s + 1]);
    Var ssum = ag::sum(tape, ag::mul(tape, diff, diff));
    pred_sum = (s == 0) ? ssum : ag::add(tape, pred_sum, ssum);
  }
  Var pred = ag::scale(tape, pred_sum, 1.0 / n);

  // KL: closed form between per-step diagonal Gaussians, prior conditionals
  // teacher-forced on the posterior samples. Summed over time and latent
  // dims, averaged over the batch.
  auto [mu_p, lv_p] = prior_teacher_forced(tape, bind, post.z);
  Var kl_sum;
  for (int s = 0; s < t_len; ++s) {
    Var d_mu = ag::sub(tape, post.mu[s], mu_p[s]);
    Var var_q = ag::exp_(tape, post.logvar[s]);
    Var inv_var_p = ag::exp_(tape, ag::neg(tape, lv_p[s]));
    Var num = ag::add(tape, var_q, ag::mul(tape, d_mu, d_mu));
    Var term = ag::add(
        tape, ag::sub(tape, lv_p[s], post.logvar[s]),
        ag::add_scalar(tape, ag::mul(tape, num, inv_var_p), -1.0));
    Var ssum = ag::sum(tape, term);
    kl_sum = (s == 0) ? ssum : ag::add(tape, kl_sum, ssum);
  }
  Var kl = ag::scale(tape, kl_sum, 0.5 / n);

  Var total = ag::add(tape, recon,
                      ag::add(tape, ag::scale(tape, pred, cfg_.alpha),
                              ag::scale(tape, kl, cfg_.beta)));
  Var eig;
  if (!cfg_.eig_targets.empty()) {
    Eigen::VectorXd targets = Eigen::Map<const Eigen::VectorXd>(
        cfg_.eig_targets.data(), static_cast<int>(cfg_.eig_targets.size()));
    eig = ag::eig_modulus_penalty(tape, prior.a, targets);
    total = ag::add(tape, total, ag::scale(tape, eig, cfg_.gamma_eig));
  }

  out.recon = tape.val(recon)(0, 0);
  out.pred = tape.val(pred)(0, 0);
  out.kl = tape.val(kl)(0, 0);
  out.eig = eig.valid() ? tape.val(eig)(0, 0) : 0.0;
  out.alpha = cfg_.alpha;
  out.beta = cfg_.beta;
  out.gamma_eig = cfg_.gamma_eig;
  out.total = tape.val(total)(0, 0);

  auto bad = [](double v) { return !std::isfinite(v); };
  if (bad(out.recon) || bad(out.pred) || bad(out.kl) || bad(out.eig) ||
      bad(out.total)) {
    std::ostringstream oss;
    oss << "loss diverged: recon=" << out.recon << " pred=" << out.pred
        << " kl=" << out.kl << " eig=" << out.eig;
    throw NumericalError(oss.str());
  }
  return total;
}

// --- public value-level wrappers ---------------------------------------------

LatentSequence KoVAE::posterior_forward(const data::SeriesBatch& batch,
                                        Sampling sampling,
                                        uint64_t seed) const {
  Tape tape;
  nn::TapeBind bind(tape, params_);
  NoiseBank noise = NoiseBank::recording(RngStream(seed, "posterior_sampling"));
  TapeLatent lat =
      posterior_core(tape, bind, batch, sampling, /*training=*/false, noise);
  LatentSequence out;
  out.z = steps_to_tensor(tape, lat.z);
  out.mu = steps_to_tensor(tape, lat.mu);
  out.logvar = steps_to_tensor(tape, lat.logvar);
  if (sampling == Sampling::Stochastic) {
    out.noise = Tensor3(batch.n(), batch.t(), cfg_.k);
    for (int s = 0; s < batch.t(); ++s)
      out.noise.set_step(s, noise.draws()[s]);
  }
  return out;
}

PriorRollout KoVAE::prior_rollout(int n, int t_len, uint64_t seed) const {
  Tape tape;
  nn::TapeBind bind(tape, params_);
  NoiseBank noise = NoiseBank::recording(RngStream(seed, "prior_sampling"));
  TapePrior prior = prior_core(tape, bind, n, t_len, noise);
  PriorRollout out;
  out.z_bar.z = steps_to_tensor(tape, prior.z_bar.z);
  out.z_bar.mu = steps_to_tensor(tape, prior.z_bar.mu);
  out.z_bar.logvar = steps_to_tensor(tape, prior.z_bar.logvar);
  out.z = steps_to_tensor(tape, prior.z);
  out.op = koopman::make_operator(tape.val(prior.a));
  return out;
}

Tensor3 KoVAE::decode(const Tensor3& z) const {
  if (z.f() != cfg_.k)
    throw std::invalid_argument("decode: latent width mismatch");
  Tape tape;
  nn::TapeBind bind(tape, params_);
  std::vector<Var> zs;
  for (int s = 0; s < z.t(); ++s) zs.push_back(tape.constant(z.step(s)));
  return steps_to_tensor(tape, decode_core(tape, bind, zs));
}

data::SeriesBatch KoVAE::generate(int n, int t_len, uint64_t seed) const {
  if (norm_lo_.size() == 0)
    throw std::logic_error("generate: normalization metadata not set");
  PriorRollout prior = prior_rollout(n, t_len, seed);
  Tensor3 decoded = decode(prior.z);
  data::SeriesBatch out;
  out.values = decoded;
  out.timestamps.resize(n, t_len);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < t_len; ++s)
      out.timestamps(i, s) = s * cfg_.time_step;
  out.mask.setOnes(n, t_len);
  out.norm_lo = norm_lo_;
  out.norm_hi = norm_hi_;
  return data::denormalize(out);
}

LossBreakdown KoVAE::compute_loss(const data::SeriesBatch& batch,
                                  uint64_t seed) const {
  Tape tape;
  nn::TapeBind bind(tape, params_);
  NoiseBank post = NoiseBank::recording(RngStream(seed, "loss_post"));
  NoiseBank prior = NoiseBank::recording(RngStream(seed, "loss_prior"));
  LossBreakdown out;
  // Diagnostic pass; put the running BN statistics back afterwards.
  nn::ParamStore bn_copy = bn_state_.clone_values();
  training_loss(tape, bind, batch, post, prior, out);
  bn_state_ = std::move(bn_copy);
  return out;
}

// --- persistence ---------------------------------------------------------------

std::string KoVAE::config_to_json(const ModelConfig& cfg) {
  json j;
  j["d"] = cfg.d;
  j["t_len"] = cfg.t_len;
  j["k"] = cfg.k;
  j["enc_hidden"] = cfg.enc_hidden;
  j["dec_hidden"] = cfg.dec_hidden;
  j["prior_hidden"] = cfg.prior_hidden;
  j["irregular"] = cfg.irregular;
  j["ncde_hidden"] = cfg.ncde.hidden_dim;
  j["ncde_width"] = cfg.ncde.field_width;
  j["ncde_depth"] = cfg.ncde.field_depth;
  j["ncde_steps"] = cfg.ncde.solver_steps_per_interval;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["gamma_eig"] = cfg.gamma_eig;
  j["eig_targets"] = cfg.eig_targets;
  j["ridge"] = cfg.ridge;
  j["logvar_limit"] = cfg.logvar_limit;
  j["time_step"] = cfg.time_step;
  return j.dump();
}

ModelConfig KoVAE::config_from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig cfg;
  cfg.d = j.at("d");
  cfg.t_len = j.at("t_len");
  cfg.k = j.at("k");
  cfg.enc_hidden = j.at("enc_hidden");
  cfg.dec_hidden = j.at("dec_hidden");
  cfg.prior_hidden = j.at("prior_hidden");
  cfg.irregular = j.at("irregular");
  cfg.ncde.hidden_dim = j.at("ncde_hidden");
  cfg.ncde.field_width = j.at("ncde_width");
  cfg.ncde.field_depth = j.at("ncde_depth");
  cfg.ncde.solver_steps_per_interval = j.at("ncde_steps");
  cfg.alpha = j.at("alpha");
  cfg.beta = j.at("beta");
  cfg.gamma_eig = j.at("gamma_eig");
  cfg.eig_targets = j.at("eig_targets").get<std::vector<double>>();
  cfg.ridge = j.at("ridge");
  cfg.logvar_limit = j.at("logvar_limit");
  cfg.time_step = j.at("time_step");
  return cfg;
}

namespace {
void put_store(Archive& a, const std::string& ns, const nn::ParamStore& ps) {
  for (const auto& name : ps.names()) {
    const Mat& m = ps.get(name);
    std::vector<double> flat;
    flat.reserve(m.size());
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
    a.put_f64(ns + name, flat,
              {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())});
  }
}

void get_store(const Archive& a, const std::string& ns, nn::ParamStore& ps) {
  for (const auto& name : ps.names()) {
    const auto& e = a.at(ns + name);
    Mat& m = ps.get(name);
    if (e.dims.size() != 2 || static_cast<int>(e.dims[0]) != m.rows() ||
        static_cast<int>(e.dims[1]) != m.cols())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    size_t idx = 0;
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) m(i, j) = e.f64[idx++];
  }
}
}  // namespace

void KoVAE::save_checkpoint(const std::string& path, int64_t step,
                            const std::string& extra_json,
                            const std::vector<std::string>& rng_states) const {
  Archive a;
  a.put_text("schema_version", "1");
  a.put_text("model_config", config_to_json(cfg_));
  a.put_text("extra", extra_json);
  json rngs = rng_states;
  a.put_text("rng_states", rngs.dump());
  std::vector<double> step_v = {static_cast<double>(step)};
  a.put_f64("step", step_v, {1});
  put_store(a, "param/", params_);
  put_store(a, "state/", bn_state_);
  std::vector<double> lo(norm_lo_.data(), norm_lo_.data() + norm_lo_.size());
  std::vector<double> hi(norm_hi_.data(), norm_hi_.data() + norm_hi_.size());
  a.put_f64("norm_lo", lo, {static_cast<uint32_t>(lo.size())});
  a.put_f64("norm_hi", hi, {static_cast<uint32_t>(hi.size())});
  a.save(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  Archive a = Archive::load(path);
  if (a.text("schema_version") != "1")
    throw std::runtime_error("checkpoint: unsupported schema version");
  ModelConfig cfg = KoVAE::config_from_json(a.text("model_config"));
  KoVAE model(cfg, /*init_seed=*/0);
  get_store(a, "param/", model.params());
  get_store(a, "state/", model.bn_state());
  const auto& lo = a.at("norm_lo");
  const auto& hi = a.at("norm_hi");
  if (!lo.f64.empty())
    model.set_normalization(
        Eigen::Map<const Eigen::VectorXd>(lo.f64.data(),
                                          static_cast<int>(lo.f64.size())),
        Eigen::Map<const Eigen::VectorXd>(hi.f64.data(),
                                          static_cast<int>(hi.f64.size())));
  LoadedCheckpoint out{std::move(model),
                       static_cast<int64_t>(a.at("step").f64[0]),
                       a.text("extra"),
                       {}};
  json rngs = json::parse(a.text("rng_states"));
  out.rng_states = rngs.get<std::vector<std::string>>();
  return out;
}

}  // namespace kovae::model
