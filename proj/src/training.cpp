#include "kovae/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "kovae/evaluation.hpp"
#include "kovae/plot.hpp"

namespace kovae::train {

namespace fs = std::filesystem;
using ag::Mat;
using ag::Tape;
using ag::Var;

uint64_t ExperimentConfig::resolved_data_seed() const {
  return data_seed ? data_seed : seed ^ hash_name("data");
}
uint64_t ExperimentConfig::resolved_init_seed() const {
  return init_seed ? init_seed : seed ^ hash_name("init");
}
uint64_t ExperimentConfig::resolved_sample_seed() const {
  return sample_seed ? sample_seed : seed ^ hash_name("sample");
}

void ExperimentConfig::validate() const {
  if (dataset != "sines" && dataset != "pendulum" && dataset != "csv")
    throw cfg::ConfigError("unknown dataset '" + dataset + "'");
  if (dataset == "csv" && csv_path.empty())
    throw cfg::ConfigError("dataset=csv requires data.csv_path");
  if (n_sequences < 1 || t_len < 2 || d < 1)
    throw cfg::ConfigError("data dimensions must be positive (t >= 2)");
  const double allowed[] = {0.0, 0.3, 0.5, 0.7};
  bool ok = false;
  for (double a : allowed) ok = ok || std::abs(drop_rate - a) < 1e-12;
  if (!ok)
    throw cfg::ConfigError("drop_rate must be one of 0, 0.3, 0.5, 0.7");
  if (model.alpha < 0 || model.beta < 0)
    throw cfg::ConfigError("alpha and beta must be non-negative");
  if (static_cast<int>(model.eig_targets.size()) > model.k)
    throw cfg::ConfigError("eig targets exceed latent size k");
  if (batch_size < 1 || steps < 0 || learning_rate <= 0)
    throw cfg::ConfigError("bad optimizer settings");
  if (optimizer != "adam")
    throw cfg::ConfigError("unknown optimizer '" + optimizer + "'");
  model.validate();
}

ExperimentConfig ExperimentConfig::from_keyvalues(const cfg::KeyValues& kv) {
  ExperimentConfig c;
  c.dataset = kv.get_or("data.name", c.dataset);
  c.n_sequences = kv.get_int("data.n", c.n_sequences);
  c.t_len = kv.get_int("data.t", c.t_len);
  c.d = kv.get_int("data.d", c.d);
  c.csv_path = kv.get_or("data.csv_path", c.csv_path);
  c.drop_rate = kv.get_double("data.drop_rate", c.drop_rate);
  c.train_fraction = kv.get_double("data.train_fraction", c.train_fraction);
  c.pendulum.length = kv.get_double("data.pendulum_length", c.pendulum.length);
  c.pendulum.gravity = kv.get_double("data.pendulum_gravity", c.pendulum.gravity);
  c.pendulum.dt = kv.get_double("data.pendulum_dt", c.pendulum.dt);
  c.pendulum.horizon = kv.get_double("data.pendulum_horizon", c.pendulum.horizon);
  c.pendulum.noise_scale =
      kv.get_double("data.pendulum_noise", c.pendulum.noise_scale);
  c.pendulum.theta0_lo = kv.get_double("data.pendulum_theta0_lo", c.pendulum.theta0_lo);
  c.pendulum.theta0_hi = kv.get_double("data.pendulum_theta0_hi", c.pendulum.theta0_hi);

  if (c.dataset == "pendulum") {
    c.t_len = c.pendulum.steps();
    c.d = 2;
    c.model.time_step = c.pendulum.dt;
  } else if (c.dataset == "sines") {
    c.model.time_step = 1.0 / c.t_len;  // benchmark grid t_s = s / T
  }

  c.model.k = kv.get_int("model.k", c.model.k);
  c.model.enc_hidden = kv.get_int("model.enc_hidden", c.model.enc_hidden);
  c.model.dec_hidden = kv.get_int("model.dec_hidden", c.model.dec_hidden);
  c.model.prior_hidden = kv.get_int("model.prior_hidden", c.model.prior_hidden);
  c.model.ncde.hidden_dim = kv.get_int("model.ncde_hidden", c.model.ncde.hidden_dim);
  c.model.ncde.field_width = kv.get_int("model.ncde_width", c.model.ncde.field_width);
  c.model.ncde.field_depth = kv.get_int("model.ncde_depth", c.model.ncde.field_depth);
  c.model.ncde.solver_steps_per_interval =
      kv.get_int("model.ncde_steps", c.model.ncde.solver_steps_per_interval);
  c.model.logvar_limit = kv.get_double("model.logvar_limit", c.model.logvar_limit);

  c.model.alpha = kv.get_double("loss.alpha", c.model.alpha);
  c.model.beta = kv.get_double("loss.beta", c.model.beta);
  c.model.gamma_eig = kv.get_double("loss.gamma_eig", c.model.gamma_eig);
  c.model.eig_targets = kv.get_list("loss.eig_targets", c.model.eig_targets);
  c.model.ridge = kv.get_double("loss.ridge", c.model.ridge);

  c.learning_rate = kv.get_double("optim.lr", c.learning_rate);
  c.lr_final = kv.get_double("optim.lr_final", c.lr_final);
  c.batch_size = kv.get_int("optim.batch", c.batch_size);
  c.steps = kv.get_int("optim.steps", c.steps);
  c.grad_clip = kv.get_double("optim.grad_clip", c.grad_clip);
  c.checkpoint_every = kv.get_int("optim.checkpoint_every", c.checkpoint_every);
  c.log_every = kv.get_int("optim.log_every", c.log_every);
  c.optimizer = kv.get_or("optim.name", c.optimizer);

  c.seed = static_cast<uint64_t>(kv.get_int("run.seed", static_cast<int>(c.seed)));
  c.data_seed = static_cast<uint64_t>(kv.get_int("run.data_seed", 0));
  c.init_seed = static_cast<uint64_t>(kv.get_int("run.init_seed", 0));
  c.sample_seed = static_cast<uint64_t>(kv.get_int("run.sample_seed", 0));

  c.model.d = c.d;
  c.model.t_len = c.t_len;
  c.model.irregular = c.drop_rate > 0.0;
  c.validate();
  return c;
}

cfg::KeyValues ExperimentConfig::to_keyvalues() const {
  cfg::KeyValues kv;
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  kv.set("data.name", dataset);
  kv.set("data.n", std::to_string(n_sequences));
  kv.set("data.t", std::to_string(t_len));
  kv.set("data.d", std::to_string(d));
  if (!csv_path.empty()) kv.set("data.csv_path", csv_path);
  kv.set("data.drop_rate", num(drop_rate));
  kv.set("data.train_fraction", num(train_fraction));
  if (dataset == "pendulum") {
    kv.set("data.pendulum_length", num(pendulum.length));
    kv.set("data.pendulum_gravity", num(pendulum.gravity));
    kv.set("data.pendulum_dt", num(pendulum.dt));
    kv.set("data.pendulum_horizon", num(pendulum.horizon));
    kv.set("data.pendulum_noise", num(pendulum.noise_scale));
    kv.set("data.pendulum_theta0_lo", num(pendulum.theta0_lo));
    kv.set("data.pendulum_theta0_hi", num(pendulum.theta0_hi));
  }
  kv.set("model.k", std::to_string(model.k));
  kv.set("model.enc_hidden", std::to_string(model.enc_hidden));
  kv.set("model.dec_hidden", std::to_string(model.dec_hidden));
  kv.set("model.prior_hidden", std::to_string(model.prior_hidden));
  kv.set("model.ncde_hidden", std::to_string(model.ncde.hidden_dim));
  kv.set("model.ncde_width", std::to_string(model.ncde.field_width));
  kv.set("model.ncde_depth", std::to_string(model.ncde.field_depth));
  kv.set("model.ncde_steps",
         std::to_string(model.ncde.solver_steps_per_interval));
  kv.set("model.logvar_limit", num(model.logvar_limit));
  kv.set("loss.alpha", num(model.alpha));
  kv.set("loss.beta", num(model.beta));
  kv.set("loss.gamma_eig", num(model.gamma_eig));
  {
    std::ostringstream os;
    for (size_t i = 0; i < model.eig_targets.size(); ++i)
      os << (i ? "," : "") << model.eig_targets[i];
    kv.set("loss.eig_targets", os.str());
  }
  kv.set("loss.ridge", num(model.ridge));
  kv.set("optim.name", optimizer);
  kv.set("optim.lr", num(learning_rate));
  kv.set("optim.lr_final", num(lr_final));
  kv.set("optim.batch", std::to_string(batch_size));
  kv.set("optim.steps", std::to_string(steps));
  kv.set("optim.grad_clip", num(grad_clip));
  kv.set("optim.checkpoint_every", std::to_string(checkpoint_every));
  kv.set("optim.log_every", std::to_string(log_every));
  kv.set("run.seed", std::to_string(seed));
  kv.set("run.data_seed", std::to_string(data_seed));
  kv.set("run.init_seed", std::to_string(init_seed));
  kv.set("run.sample_seed", std::to_string(sample_seed));
  return kv;
}

data::SeriesBatch make_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset == "sines")
    return data::generate_sines(cfg.n_sequences, cfg.t_len, cfg.d,
                                cfg.resolved_data_seed());
  if (cfg.dataset == "pendulum")
    return data::generate_pendulum(cfg.n_sequences, cfg.pendulum,
                                   cfg.resolved_data_seed());
  return data::load_csv_dataset(cfg.csv_path, cfg.d, cfg.t_len,
                                cfg.resolved_data_seed());
}

TrainResult train(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);

  data::SeriesBatch raw = make_dataset(cfg);
  auto [train_raw, test_raw] =
      data::split_batch(raw, cfg.train_fraction, cfg.resolved_data_seed());
  if (cfg.drop_rate > 0.0)
    train_raw = data::drop_observations(train_raw, cfg.drop_rate,
                                        cfg.resolved_data_seed());
  data::SeriesBatch train_set = data::normalize(train_raw);

  model::ModelConfig mc = cfg.model;
  model::KoVAE net(mc, cfg.resolved_init_seed());
  net.set_normalization(train_set.norm_lo, train_set.norm_hi);

  nn::Adam adam({.lr = cfg.learning_rate, .grad_clip = cfg.grad_clip});
  RngStream batch_rng(cfg.resolved_data_seed(), "batch_order");
  const uint64_t sample_seed = cfg.resolved_sample_seed();

  std::string metrics_path = out_dir + "/metrics.csv";
  std::ofstream log(metrics_path, std::ios::trunc);
  {
    // Config echo: the resolved experiment travels with its metrics.
    std::istringstream cfg_text(cfg.to_keyvalues().to_text());
    std::string line;
    while (std::getline(cfg_text, line)) log << "# " << line << "\n";
  }
  log << "step,recon,pred,kl,eig,total\n";
  log.precision(10);

  TrainResult result{.model = net};
  std::vector<int> order;
  size_t cursor = 0;
  auto next_batch = [&]() {
    std::vector<int> rows;
    for (int i = 0; i < cfg.batch_size; ++i) {
      if (cursor >= order.size()) {
        order = batch_rng.permutation(train_set.n());
        cursor = 0;
      }
      rows.push_back(order[cursor++]);
    }
    return rows;
  };

  int64_t step = 0;
  for (; step < cfg.steps; ++step) {
    std::vector<int> rows = next_batch();
    data::SeriesBatch mb = train_set.select(rows);

    double sched = 1.0;
    if (cfg.lr_final > 0 && cfg.steps > 1)
      sched = std::pow(cfg.lr_final / cfg.learning_rate,
                       static_cast<double>(step) / (cfg.steps - 1));
    auto run_step = [&](double lr_scale, uint64_t attempt) {
      Tape tape;
      nn::TapeBind bind(tape, net.params());
      uint64_t step_seed =
          sample_seed + 0x9e3779b97f4a7c15ULL * (2 * step + attempt + 1);
      model::NoiseBank post = model::NoiseBank::recording(
          RngStream(step_seed, "train_posterior"));
      model::NoiseBank prior =
          model::NoiseBank::recording(RngStream(step_seed, "train_prior"));
      model::LossBreakdown lb;
      Var total = net.training_loss(tape, bind, mb, post, prior, lb);
      tape.backward(total);
      std::map<std::string, Mat> grads;
      bind.collect_grads(grads);
      adam.step(net.params(), grads, lr_scale * sched);
      return lb;
    };

    model::LossBreakdown lb;
    nn::ParamStore previous = net.params();  // includes optimizer moments
    try {
      lb = run_step(1.0, 0);
    } catch (const model::NumericalError&) {
      // One retry with fresh noise at a 10x smaller step, from the
      // pre-step weights.
      net.params() = previous;
      try {
        lb = run_step(0.1, 1);
      } catch (const model::NumericalError& e2) {
        result.halted_on_divergence = true;
        result.divergence_step = static_cast<int>(step);
        std::cerr << "training halted at step " << step << ": " << e2.what()
                  << "\n";
        break;
      }
    }

    if (step == 0) result.first_loss = lb;
    result.final_loss = lb;
    if (step % cfg.log_every == 0 || step + 1 == cfg.steps)
      log << step << "," << lb.recon << "," << lb.pred << "," << lb.kl << ","
          << lb.eig << "," << lb.total << "\n";
    if (cfg.checkpoint_every > 0 && step > 0 &&
        step % cfg.checkpoint_every == 0) {
      net.save_checkpoint(out_dir + "/checkpoint_step" + std::to_string(step) +
                              ".kvar",
                          step);
    }
  }

  result.steps_run = step;
  result.checkpoint_path = out_dir + "/checkpoint.kvar";
  std::vector<std::string> rng_states = {batch_rng.serialize()};
  net.save_checkpoint(result.checkpoint_path, step, "{}", rng_states);
  result.model = net;
  result.metrics_path = metrics_path;
  result.train_split = train_set;
  result.test_split = test_raw;
  return result;
}

std::vector<SweepCell> sweep(const ExperimentConfig& base,
                             const std::vector<double>& alpha_grid,
                             const std::vector<double>& beta_grid,
                             const std::string& out_dir) {
  if (alpha_grid.empty() || beta_grid.empty())
    throw cfg::ConfigError("sweep: grids must be non-empty");
  fs::create_directories(out_dir);
  std::vector<SweepCell> cells;
  for (double a : alpha_grid)
    for (double b : beta_grid) {
      SweepCell cell{.alpha = a, .beta = b};
      try {
        ExperimentConfig cfg = base;
        cfg.model.alpha = a;
        cfg.model.beta = b;
        std::ostringstream name;
        name << out_dir << "/cell_a" << a << "_b" << b;
        TrainResult r = train(cfg, name.str());
        data::SeriesBatch fake = r.model.generate(
            r.test_split.n(), cfg.t_len, cfg.resolved_sample_seed());
        cell.discriminative =
            eval::discriminative_score(r.test_split, fake, cfg.seed).mean;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      cells.push_back(cell);
      std::cout << "sweep alpha=" << cell.alpha << " beta=" << cell.beta
                << (cell.failed ? " FAILED " + cell.error
                                : " disc=" + std::to_string(cell.discriminative))
                << std::endl;
    }

  // CSV + score scatter (log-log axes, disc encoded as color intensity).
  std::ofstream os(out_dir + "/sweep.csv", std::ios::trunc);
  os << "alpha,beta,discriminative,failed\n";
  os.precision(10);
  for (const auto& c : cells)
    os << c.alpha << "," << c.beta << "," << c.discriminative << ","
       << (c.failed ? 1 : 0) << "\n";

  plot::Canvas canvas(560, 560);
  canvas.frame();
  double worst = 1e-9;
  for (const auto& c : cells) worst = std::max(worst, c.discriminative);
  std::vector<double> lx, ly;
  for (const auto& c : cells) {
    lx.push_back(std::log10(std::max(c.alpha, 1e-6)));
    ly.push_back(std::log10(std::max(c.beta, 1e-6)));
  }
  plot::Axes ax = plot::Axes::fit(lx, ly, 0.1);
  for (size_t i = 0; i < cells.size(); ++i) {
    double v = cells[i].failed ? 1.0 : cells[i].discriminative / worst;
    uint8_t red = static_cast<uint8_t>(55 + 200 * v);
    canvas.disc(ax, lx[i], ly[i], 6, {red, 40, 120});
  }
  canvas.save_png(out_dir + "/sweep.png");
  return cells;
}

}  // namespace kovae::train
