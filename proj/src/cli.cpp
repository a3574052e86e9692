#include "kovae/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "kovae/csvio.hpp"
#include "kovae/evaluation.hpp"
#include "kovae/manifest.hpp"
#include "kovae/training.hpp"

namespace kovae::cli {

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  int64_t seed = -1;
  std::string out_dir;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path,
                  "config file (path or name under ./configs)");
  cmd->add_option("--set", args.overrides, "override, repeatable: key=value");
  cmd->add_option("--seed", args.seed, "override run.seed");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_flag("--force", args.force, "recompute even if up to date");
}

std::string resolve_config_path(const std::string& name) {
  if (name.empty()) return "";
  if (fs::exists(name)) return name;
  std::string with_dir = "configs/" + name;
  if (fs::exists(with_dir)) return with_dir;
  std::string with_ext = with_dir + ".cfg";
  if (fs::exists(with_ext)) return with_ext;
  throw cfg::ConfigError("config not found: " + name);
}

cfg::KeyValues load_config(const CommonArgs& args, std::string* used_path) {
  cfg::KeyValues kv;
  std::string path = resolve_config_path(args.config_path);
  if (!path.empty()) kv = cfg::KeyValues::parse_file(path);
  for (const auto& ov : args.overrides) kv.apply_override(ov);
  if (args.seed >= 0) kv.set("run.seed", std::to_string(args.seed));
  if (used_path) *used_path = path;
  return kv;
}

std::string default_out(const CommonArgs& args, const std::string& verb) {
  if (!args.out_dir.empty()) return args.out_dir;
  if (verb == "make-data") {
    const char* cache = std::getenv("KOVAE_DATA_DIR");
    if (cache && *cache) return cache;
  }
  return "out/" + verb;
}

/// Manifest gate shared by every verb: write-before-work, skip identical
/// re-runs unless --force.
bool begin_run(const std::string& verb, const cfg::KeyValues& resolved,
               const std::map<std::string, std::string>& input_files,
               const std::vector<std::string>& outputs,
               const std::string& out_dir, bool force) {
  manifest::Manifest m;
  m.command = verb;
  m.resolved_config = resolved.to_text();
  for (const auto& [label, path] : input_files)
    m.inputs[label + ":" + path] = manifest::sha256_file(path);
  m.outputs = outputs;
  if (!force && manifest::up_to_date(m, out_dir)) {
    std::cout << verb << ": up to date in " << out_dir << " (use --force)\n";
    return false;
  }
  manifest::write_manifest(m, out_dir);
  return true;
}

std::map<std::string, std::string> config_inputs(
    const std::string& config_path, const train::ExperimentConfig& cfg) {
  std::map<std::string, std::string> in;
  if (!config_path.empty()) in["config"] = config_path;
  if (cfg.dataset == "csv") in["csv"] = cfg.csv_path;
  return in;
}

int cmd_make_data(const CommonArgs& args) {
  std::string config_path;
  cfg::KeyValues kv = load_config(args, &config_path);
  train::ExperimentConfig cfg = train::ExperimentConfig::from_keyvalues(kv);
  std::string out_dir = default_out(args, "make-data");
  std::string fname = cfg.dataset + ".kvar";
  if (!begin_run("make-data", cfg.to_keyvalues(),
                 config_inputs(config_path, cfg), {fname}, out_dir,
                 args.force))
    return 0;
  data::SeriesBatch batch = train::make_dataset(cfg);
  if (cfg.drop_rate > 0)
    batch = data::drop_observations(batch, cfg.drop_rate,
                                    cfg.resolved_data_seed());
  data::save_batch(batch, out_dir + "/" + fname);
  std::cout << "wrote " << out_dir << "/" << fname << " [" << batch.n() << " x "
            << batch.t() << " x " << batch.d() << "]\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  std::string config_path;
  cfg::KeyValues kv = load_config(args, &config_path);
  train::ExperimentConfig cfg = train::ExperimentConfig::from_keyvalues(kv);
  std::string out_dir = default_out(args, "train");
  if (!begin_run("train", cfg.to_keyvalues(), config_inputs(config_path, cfg),
                 {"checkpoint.kvar", "metrics.csv"}, out_dir, args.force))
    return 0;
  train::TrainResult r = train::train(cfg, out_dir);
  std::cout << "trained " << r.steps_run << " steps, final total loss "
            << r.final_loss.total << "\n"
            << "checkpoint: " << r.checkpoint_path << "\n";
  if (r.halted_on_divergence) {
    std::cerr << "training diverged at step " << r.divergence_step << "\n";
    return 1;
  }
  return 0;
}

int cmd_generate(const CommonArgs& args, const std::string& checkpoint,
                 int count) {
  cfg::KeyValues kv;
  for (const auto& ov : args.overrides) kv.apply_override(ov);
  std::string out_dir = default_out(args, "generate");
  kv.set("generate.checkpoint", checkpoint);
  kv.set("generate.count", std::to_string(count));
  uint64_t seed = args.seed >= 0 ? static_cast<uint64_t>(args.seed) : 1;
  kv.set("run.seed", std::to_string(seed));
  if (!begin_run("generate", kv, {{"checkpoint", checkpoint}},
                 {"generated.kvar"}, out_dir, args.force))
    return 0;
  auto loaded = model::load_checkpoint(checkpoint);
  data::SeriesBatch fake =
      loaded.model.generate(count, loaded.model.config().t_len, seed);
  data::save_batch(fake, out_dir + "/generated.kvar");
  std::cout << "wrote " << out_dir << "/generated.kvar [" << fake.n() << " x "
            << fake.t() << " x " << fake.d() << "]\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& checkpoint) {
  std::string config_path;
  cfg::KeyValues kv = load_config(args, &config_path);
  train::ExperimentConfig cfg = train::ExperimentConfig::from_keyvalues(kv);
  std::string out_dir = default_out(args, "evaluate");
  auto inputs = config_inputs(config_path, cfg);
  inputs["checkpoint"] = checkpoint;
  if (!begin_run("evaluate", cfg.to_keyvalues(), inputs, {"report.json"},
                 out_dir, args.force))
    return 0;

  auto loaded = model::load_checkpoint(checkpoint);
  data::SeriesBatch raw = train::make_dataset(cfg);
  auto [train_raw, test_raw] =
      data::split_batch(raw, cfg.train_fraction, cfg.resolved_data_seed());
  data::SeriesBatch fake = loaded.model.generate(
      test_raw.n(), cfg.t_len, cfg.resolved_sample_seed());

  eval::EvalReport report;
  report.discriminative = eval::discriminative_score(test_raw, fake, cfg.seed);
  report.predictive = eval::predictive_score(test_raw, fake, cfg.seed);
  report.original_predictive =
      eval::original_predictive_score(test_raw, cfg.seed).mean;
  if (test_raw.n() >= 100 && fake.n() >= 100)
    report.kde_l1 = eval::qualitative_report(
        test_raw, fake, out_dir + "/qualitative", cfg.seed, 1000,
        &report.plots);
  std::ofstream os(out_dir + "/report.json", std::ios::trunc);
  os << report.to_json() << "\n";
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_spectrum(const CommonArgs& args, const std::string& checkpoint,
                 int count) {
  cfg::KeyValues kv;
  for (const auto& ov : args.overrides) kv.apply_override(ov);
  kv.set("spectrum.checkpoint", checkpoint);
  std::string out_dir = default_out(args, "spectrum");
  uint64_t seed = args.seed >= 0 ? static_cast<uint64_t>(args.seed) : 1;
  kv.set("run.seed", std::to_string(seed));
  if (!begin_run("spectrum", kv, {{"checkpoint", checkpoint}},
                 {"spectrum.csv", "spectrum.png"}, out_dir, args.force))
    return 0;
  auto loaded = model::load_checkpoint(checkpoint);
  model::PriorRollout prior =
      loaded.model.prior_rollout(count, loaded.model.config().t_len, seed);
  koopman::write_spectral_report(prior.op, out_dir + "/spectrum.csv",
                                 out_dir + "/spectrum.png");
  for (int j = 0; j < prior.op.k(); ++j)
    std::cout << "lambda_" << j << ": |.|=" << std::abs(prior.op.eigenvalues(j))
              << " arg=" << std::arg(prior.op.eigenvalues(j)) << "\n";
  std::cout << "wrote " << out_dir << "/spectrum.csv and spectrum.png\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  std::string config_path;
  cfg::KeyValues kv = load_config(args, &config_path);
  train::ExperimentConfig cfg = train::ExperimentConfig::from_keyvalues(kv);
  std::vector<double> alpha_grid =
      kv.get_list("sweep.alpha_grid", {cfg.model.alpha});
  std::vector<double> beta_grid =
      kv.get_list("sweep.beta_grid", {cfg.model.beta});
  std::string out_dir = default_out(args, "sweep");
  if (!begin_run("sweep", cfg.to_keyvalues(), config_inputs(config_path, cfg),
                 {"sweep.csv", "sweep.png"}, out_dir, args.force))
    return 0;
  auto cells = train::sweep(cfg, alpha_grid, beta_grid, out_dir);
  int failed = 0;
  for (const auto& c : cells) failed += c.failed ? 1 : 0;
  std::cout << "sweep finished: " << cells.size() << " cells, " << failed
            << " failed\n";
  return 0;
}

int cmd_reconstruct(const CommonArgs& args, const std::string& checkpoint) {
  std::string config_path;
  cfg::KeyValues kv = load_config(args, &config_path);
  train::ExperimentConfig cfg = train::ExperimentConfig::from_keyvalues(kv);
  std::string out_dir = default_out(args, "reconstruct");
  auto inputs = config_inputs(config_path, cfg);
  inputs["checkpoint"] = checkpoint;
  if (!begin_run("reconstruct", cfg.to_keyvalues(), inputs,
                 {"reconstruction.json"}, out_dir, args.force))
    return 0;
  auto loaded = model::load_checkpoint(checkpoint);
  data::SeriesBatch raw = train::make_dataset(cfg);
  auto [train_raw, test_raw] =
      data::split_batch(raw, cfg.train_fraction, cfg.resolved_data_seed());
  if (cfg.drop_rate > 0)
    test_raw = data::drop_observations(test_raw, cfg.drop_rate,
                                       cfg.resolved_data_seed() + 1);
  auto rep = eval::reconstruction_report(loaded.model, test_raw,
                                         out_dir + "/reconstruction");
  std::ofstream os(out_dir + "/reconstruction.json", std::ios::trunc);
  os << "{\n  \"mse\": " << rep.mse
     << ",\n  \"mse_observed\": " << rep.mse_observed
     << ",\n  \"mse_masked\": " << rep.mse_masked << ",\n  \"per_feature\": [";
  for (size_t j = 0; j < rep.per_feature_mse.size(); ++j)
    os << (j ? ", " : "") << rep.per_feature_mse[j];
  os << "]\n}\n";
  std::cout << "reconstruction mse=" << rep.mse
            << " (observed=" << rep.mse_observed
            << ", masked=" << rep.mse_masked << ")\n";
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  static const std::vector<std::string> verbs = {
      "make-data", "train",      "generate", "evaluate",
      "spectrum",  "sweep",      "reconstruct"};
  if (!args.empty() && args[0].rfind("-", 0) != 0 &&
      std::find(verbs.begin(), verbs.end(), args[0]) == verbs.end()) {
    std::cerr << "unknown command '" << args[0] << "'; expected one of:";
    for (const auto& v : verbs) std::cerr << " " << v;
    std::cerr << "\n";
    return 2;
  }

  CLI::App app{"KoVAE: linear-latent-prior VAE for time series generation"};
  app.require_subcommand(0, 1);

  CommonArgs common[7];
  std::string checkpoint_gen, checkpoint_eval, checkpoint_spec, checkpoint_rec;
  int gen_count = 256, spec_count = 256;

  CLI::App* c_make = app.add_subcommand("make-data", "build a dataset archive");
  add_common(c_make, common[0]);
  CLI::App* c_train = app.add_subcommand("train", "train a model");
  add_common(c_train, common[1]);
  CLI::App* c_gen = app.add_subcommand("generate", "sample from a checkpoint");
  add_common(c_gen, common[2]);
  c_gen->add_option("--checkpoint", checkpoint_gen, "trained model")->required();
  c_gen->add_option("-n,--count", gen_count, "sequences to generate");
  CLI::App* c_eval =
      app.add_subcommand("evaluate", "discriminative/predictive scores");
  add_common(c_eval, common[3]);
  c_eval->add_option("--checkpoint", checkpoint_eval, "trained model")
      ->required();
  CLI::App* c_spec =
      app.add_subcommand("spectrum", "operator eigenvalue report");
  add_common(c_spec, common[4]);
  c_spec->add_option("--checkpoint", checkpoint_spec, "trained model")
      ->required();
  c_spec->add_option("-n,--count", spec_count, "prior sample count");
  CLI::App* c_sweep = app.add_subcommand("sweep", "alpha/beta grid search");
  add_common(c_sweep, common[5]);
  CLI::App* c_rec =
      app.add_subcommand("reconstruct", "reconstruction/inference report");
  add_common(c_rec, common[6]);
  c_rec->add_option("--checkpoint", checkpoint_rec, "trained model")
      ->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints usage, exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_make->parsed()) return cmd_make_data(common[0]);
    if (c_train->parsed()) return cmd_train(common[1]);
    if (c_gen->parsed()) return cmd_generate(common[2], checkpoint_gen, gen_count);
    if (c_eval->parsed()) return cmd_evaluate(common[3], checkpoint_eval);
    if (c_spec->parsed()) return cmd_spectrum(common[4], checkpoint_spec, spec_count);
    if (c_sweep->parsed()) return cmd_sweep(common[5]);
    if (c_rec->parsed()) return cmd_reconstruct(common[6], checkpoint_rec);
    std::cout << app.help() << "\n";
    return 0;
  } catch (const cfg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args);
}

}  // namespace kovae::cli
