#include "kovae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "kovae/plot.hpp"
#include "kovae/tsne.hpp"

namespace kovae::eval {

using ag::Mat;
using ag::Tape;
using ag::Var;

namespace {

void finish_score(Score& s) {
  const int n = static_cast<int>(s.runs.size());
  s.mean = std::accumulate(s.runs.begin(), s.runs.end(), 0.0) / n;
  double sq = 0;
  for (double r : s.runs) sq += (r - s.mean) * (r - s.mean);
  s.stddev = n > 1 ? std::sqrt(sq / (n - 1)) : 0.0;
}

/// Joint min-max scaling derived from the real batch so scores live on the
/// benchmark's [0,1] scale regardless of raw units.
std::pair<Tensor3, Tensor3> normalized_pair(const data::SeriesBatch& real,
                                            const data::SeriesBatch& fake) {
  data::SeriesBatch r = real.normalized() ? real : data::normalize(real);
  data::SeriesBatch f =
      fake.normalized() ? fake
                        : data::apply_normalization(fake, r.norm_lo, r.norm_hi);
  return {r.values, f.values};
}

std::vector<Var> tensor_steps(Tape& tape, const Tensor3& x,
                              const std::vector<int>& rows) {
  Tensor3 sel = x.select(rows);
  std::vector<Var> out;
  for (int s = 0; s < sel.t(); ++s) out.push_back(tape.constant(sel.step(s)));
  return out;
}

struct BatchSampler {
  explicit BatchSampler(int n, int batch, RngStream rng)
      : n_(n), batch_(std::min(batch, n)), rng_(std::move(rng)) {}
  std::vector<int> next() {
    std::vector<int> idx(batch_);
    for (int i = 0; i < batch_; ++i)
      idx[i] = static_cast<int>(rng_.uniform_index(n_));
    return idx;
  }
  int n_, batch_;
  RngStream rng_;
};

}  // namespace

Score discriminative_score(const data::SeriesBatch& real,
                           const data::SeriesBatch& fake, uint64_t seed,
                           const MetricConfig& cfg) {
  if (real.n() != fake.n() || real.t() != fake.t() || real.d() != fake.d())
    throw std::invalid_argument("discriminative_score: shape mismatch");
  if (real.n() < 20)
    throw std::invalid_argument("discriminative_score: need N >= 20");
  auto [rv, fv] = normalized_pair(real, fake);
  const int n = rv.n(), t = rv.t(), d = rv.f();
  const int hidden = std::max(cfg.hidden_for(d, t), 2);

  // Pooled dataset: first n rows real (label 1), next n fake (label 0).
  Score score;
  for (int run = 0; run < cfg.runs; ++run) {
    RngStream rng(seed, "disc_run_" + std::to_string(run));
    std::vector<int> order = rng.permutation(2 * n);
    int n_train = static_cast<int>(std::llround(cfg.train_fraction * 2 * n));
    n_train = std::clamp(n_train, 1, 2 * n - 1);

    nn::ParamStore ps;
    nn::GRU gru{"clf.gru", d, hidden, cfg.layers};
    nn::Linear head{"clf.head", hidden, 1};
    gru.init(ps, rng);
    head.init(ps, rng);
    nn::Adam adam({.lr = cfg.learning_rate});

    BatchSampler sampler(n_train, cfg.batch_size,
                         RngStream(seed, "disc_batches_" + std::to_string(run)));
    for (int step = 0; step < cfg.train_steps; ++step) {
      std::vector<int> pick = sampler.next();
      std::vector<int> r_rows, f_rows;
      Mat labels(static_cast<int>(pick.size()), 1);
      std::vector<int> slot(pick.size());
      for (size_t i = 0; i < pick.size(); ++i) {
        int pooled = order[pick[i]];
        labels(static_cast<int>(i), 0) = pooled < n ? 1.0 : 0.0;
        if (pooled < n) {
          slot[i] = static_cast<int>(r_rows.size());
          r_rows.push_back(pooled);
        } else {
          slot[i] = static_cast<int>(f_rows.size());
          f_rows.push_back(pooled - n);
        }
      }
      // Assemble the minibatch values in pick order.
      Tensor3 mb(static_cast<int>(pick.size()), t, d);
      Tensor3 rsel = r_rows.empty() ? Tensor3() : rv.select(r_rows);
      Tensor3 fsel = f_rows.empty() ? Tensor3() : fv.select(f_rows);
      for (size_t i = 0; i < pick.size(); ++i) {
        const Tensor3& src = order[pick[i]] < n ? rsel : fsel;
        for (int s = 0; s < t; ++s)
          for (int j = 0; j < d; ++j)
            mb(static_cast<int>(i), s, j) = src(slot[i], s, j);
      }

      Tape tape;
      nn::TapeBind bind(tape, ps);
      std::vector<Var> xs;
      for (int s = 0; s < t; ++s) xs.push_back(tape.constant(mb.step(s)));
      Var last = gru.forward(tape, bind, xs).back();
      Var logit = head.forward(tape, bind, last);
      // BCE with logits: mean(softplus(logit) - y * logit)
      Var loss = ag::mean(
          tape, ag::sub(tape, ag::softplus(tape, logit),
                        ag::mul_const(tape, logit, labels)));
      tape.backward(loss);
      std::map<std::string, Mat> grads;
      bind.collect_grads(grads);
      adam.step(ps, grads);
    }

    // Held-out accuracy.
    int correct = 0, total = 0;
    std::vector<int> heldout(order.begin() + n_train, order.end());
    const int chunk = 512;
    for (size_t base = 0; base < heldout.size(); base += chunk) {
      size_t hi = std::min(heldout.size(), base + chunk);
      std::vector<int> r_rows, f_rows;
      std::vector<std::pair<bool, int>> where;
      for (size_t i = base; i < hi; ++i) {
        int pooled = heldout[i];
        if (pooled < n) {
          where.push_back({true, static_cast<int>(r_rows.size())});
          r_rows.push_back(pooled);
        } else {
          where.push_back({false, static_cast<int>(f_rows.size())});
          f_rows.push_back(pooled - n);
        }
      }
      Tensor3 mb(static_cast<int>(hi - base), t, d);
      Tensor3 rsel = r_rows.empty() ? Tensor3() : rv.select(r_rows);
      Tensor3 fsel = f_rows.empty() ? Tensor3() : fv.select(f_rows);
      for (size_t i = 0; i < where.size(); ++i) {
        const Tensor3& src = where[i].first ? rsel : fsel;
        for (int s = 0; s < t; ++s)
          for (int j = 0; j < d; ++j)
            mb(static_cast<int>(i), s, j) = src(where[i].second, s, j);
      }
      Tape tape;
      nn::TapeBind bind(tape, ps);
      std::vector<Var> xs;
      for (int s = 0; s < t; ++s) xs.push_back(tape.constant(mb.step(s)));
      Var last = gru.forward(tape, bind, xs).back();
      Mat logits = tape.val(head.forward(tape, bind, last));
      for (size_t i = 0; i < where.size(); ++i) {
        bool predicted_real = logits(static_cast<int>(i), 0) > 0.0;
        if (predicted_real == where[i].first) ++correct;
        ++total;
      }
    }
    double acc = static_cast<double>(correct) / std::max(total, 1);
    score.runs.push_back(std::abs(0.5 - acc));
  }
  finish_score(score);
  return score;
}

namespace {
/// One-step-ahead GRU predictor trained with MAE on `train`, evaluated with
/// MAE on `test` (both already on the [0,1] scale).
double predictor_mae(const Tensor3& train, const Tensor3& test, uint64_t seed,
                     int run, const MetricConfig& cfg) {
  const int t = train.t(), d = train.f();
  if (t < 3) throw std::invalid_argument("predictive_score: need T >= 3");
  const int hidden = std::max(cfg.hidden_for(d, t), 2);

  RngStream rng(seed, "pred_run_" + std::to_string(run));
  nn::ParamStore ps;
  nn::GRU gru{"pred.gru", d, hidden, cfg.layers};
  nn::Linear head{"pred.head", hidden, d};
  gru.init(ps, rng);
  head.init(ps, rng);
  nn::Adam adam({.lr = cfg.learning_rate});

  BatchSampler sampler(train.n(), cfg.batch_size,
                       RngStream(seed, "pred_batches_" + std::to_string(run)));
  for (int step = 0; step < cfg.train_steps; ++step) {
    std::vector<int> rows = sampler.next();
    Tape tape;
    nn::TapeBind bind(tape, ps);
    std::vector<Var> xs = tensor_steps(tape, train, rows);
    std::vector<Var> inputs(xs.begin(), xs.end() - 1);
    std::vector<Var> hs = gru.forward(tape, bind, inputs);
    Var err_sum;
    for (size_t s = 0; s < hs.size(); ++s) {
      Var pred = head.forward(tape, bind, hs[s]);
      Var diff = ag::abs_(tape, ag::sub(tape, pred, xs[s + 1]));
      Var ssum = ag::sum(tape, diff);
      err_sum = (s == 0) ? ssum : ag::add(tape, err_sum, ssum);
    }
    double denom = static_cast<double>(rows.size()) * (t - 1) * d;
    Var loss = ag::scale(tape, err_sum, 1.0 / denom);
    tape.backward(loss);
    std::map<std::string, Mat> grads;
    bind.collect_grads(grads);
    adam.step(ps, grads);
  }

  // MAE on the evaluation side.
  double abs_err = 0;
  int count = 0;
  const int chunk = 512;
  std::vector<int> all(test.n());
  std::iota(all.begin(), all.end(), 0);
  for (int base = 0; base < test.n(); base += chunk) {
    std::vector<int> rows(all.begin() + base,
                          all.begin() + std::min(test.n(), base + chunk));
    Tape tape;
    nn::TapeBind bind(tape, ps);
    std::vector<Var> xs = tensor_steps(tape, test, rows);
    std::vector<Var> inputs(xs.begin(), xs.end() - 1);
    std::vector<Var> hs = gru.forward(tape, bind, inputs);
    for (size_t s = 0; s < hs.size(); ++s) {
      Mat pred = tape.val(head.forward(tape, bind, hs[s]));
      Mat truth = tape.val(xs[s + 1]);
      abs_err += (pred - truth).array().abs().sum();
      count += static_cast<int>(pred.size());
    }
  }
  return abs_err / std::max(count, 1);
}
}  // namespace

Score predictive_score(const data::SeriesBatch& real,
                       const data::SeriesBatch& fake, uint64_t seed,
                       const MetricConfig& cfg) {
  if (real.n() != fake.n() || real.t() != fake.t() || real.d() != fake.d())
    throw std::invalid_argument("predictive_score: shape mismatch");
  auto [rv, fv] = normalized_pair(real, fake);
  Score score;
  for (int run = 0; run < cfg.runs; ++run)
    score.runs.push_back(predictor_mae(fv, rv, seed, run, cfg));
  finish_score(score);
  return score;
}

Score original_predictive_score(const data::SeriesBatch& real, uint64_t seed,
                                const MetricConfig& cfg) {
  data::SeriesBatch r = real.normalized() ? real : data::normalize(real);
  auto [train, test] = data::split_batch(r, cfg.train_fraction, seed);
  Score score;
  for (int run = 0; run < cfg.runs; ++run)
    score.runs.push_back(predictor_mae(train.values, test.values, seed,
                                       run + 100, cfg));
  finish_score(score);
  return score;
}

std::vector<std::vector<double>> flatten_sequences(
    const data::SeriesBatch& batch) {
  std::vector<std::vector<double>> out(batch.n(),
                                       std::vector<double>(batch.t()));
  for (int i = 0; i < batch.n(); ++i)
    for (int s = 0; s < batch.t(); ++s) {
      double acc = 0;
      for (int j = 0; j < batch.d(); ++j) acc += batch.values(i, s, j);
      out[i][s] = acc / batch.d();
    }
  return out;
}

KdeCurve kde_curve(const std::vector<double>& values, double grid_lo,
                   double grid_hi, int grid_points) {
  KdeCurve c;
  const int n = static_cast<int>(values.size());
  double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= std::max(n - 1, 1);
  // Scott's rule in one dimension.
  double h = std::sqrt(var) * std::pow(static_cast<double>(n), -0.2);
  if (h <= 0) h = 1e-3;
  c.grid.resize(grid_points);
  c.density.assign(grid_points, 0.0);
  double step = (grid_hi - grid_lo) / (grid_points - 1);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * M_PI));
  for (int g = 0; g < grid_points; ++g) {
    double x = grid_lo + g * step;
    c.grid[g] = x;
    double acc = 0;
    for (double v : values) {
      double u = (x - v) / h;
      acc += std::exp(-0.5 * u * u);
    }
    c.density[g] = norm * acc;
  }
  return c;
}

double kde_l1_distance(const std::vector<double>& a,
                       const std::vector<double>& b, int grid_points) {
  double lo = std::min(*std::min_element(a.begin(), a.end()),
                       *std::min_element(b.begin(), b.end()));
  double hi = std::max(*std::max_element(a.begin(), a.end()),
                       *std::max_element(b.begin(), b.end()));
  double pad = 0.1 * std::max(hi - lo, 1e-9);
  KdeCurve ca = kde_curve(a, lo - pad, hi + pad, grid_points);
  KdeCurve cb = kde_curve(b, lo - pad, hi + pad, grid_points);
  double step = ca.grid[1] - ca.grid[0];
  double l1 = 0;
  for (int g = 0; g < grid_points; ++g)
    l1 += std::abs(ca.density[g] - cb.density[g]) * step;
  return l1;
}

double qualitative_report(const data::SeriesBatch& real,
                          const data::SeriesBatch& fake,
                          const std::string& out_prefix, uint64_t seed,
                          int max_points,
                          std::vector<std::string>* plot_paths) {
  if (real.n() < 100 || fake.n() < 100)
    throw std::invalid_argument("qualitative_report: need >= 100 sequences");
  auto rflat = flatten_sequences(real);
  auto fflat = flatten_sequences(fake);

  RngStream rng(seed, "qualitative_subsample");
  auto subsample = [&](std::vector<std::vector<double>>& v) {
    if (static_cast<int>(v.size()) <= max_points) return;
    std::vector<int> order = rng.permutation(static_cast<int>(v.size()));
    std::vector<std::vector<double>> out;
    for (int i = 0; i < max_points; ++i) out.push_back(v[order[i]]);
    v = std::move(out);
  };
  subsample(rflat);
  subsample(fflat);

  // KDE over all flattened scalar values.
  std::vector<double> rpool, fpool;
  for (const auto& seq : rflat)
    rpool.insert(rpool.end(), seq.begin(), seq.end());
  for (const auto& seq : fflat)
    fpool.insert(fpool.end(), seq.begin(), seq.end());
  double l1 = kde_l1_distance(rpool, fpool);

  if (!out_prefix.empty()) {
    // Joint t-SNE colored by origin.
    const int nr = static_cast<int>(rflat.size());
    const int nf = static_cast<int>(fflat.size());
    const int t = static_cast<int>(rflat[0].size());
    Eigen::MatrixXd pts(nr + nf, t);
    for (int i = 0; i < nr; ++i)
      for (int s = 0; s < t; ++s) pts(i, s) = rflat[i][s];
    for (int i = 0; i < nf; ++i)
      for (int s = 0; s < t; ++s) pts(nr + i, s) = fflat[i][s];
    Eigen::MatrixXd y = tsne::embed_2d(pts, seed);

    std::vector<double> xs(y.rows()), ys(y.rows());
    for (int i = 0; i < y.rows(); ++i) {
      xs[i] = y(i, 0);
      ys[i] = y(i, 1);
    }
    plot::Axes ax = plot::Axes::fit(xs, ys);
    plot::Canvas canvas(640, 640);
    canvas.frame();
    for (int i = 0; i < nr; ++i)
      canvas.disc(ax, y(i, 0), y(i, 1), 2, {200, 40, 40});
    for (int i = 0; i < nf; ++i)
      canvas.disc(ax, y(nr + i, 0), y(nr + i, 1), 2, {40, 60, 200});
    std::string tsne_path = out_prefix + "_tsne.png";
    canvas.save_png(tsne_path);
    if (plot_paths) plot_paths->push_back(tsne_path);

    // KDE curves on one axis.
    double lo = std::min(*std::min_element(rpool.begin(), rpool.end()),
                         *std::min_element(fpool.begin(), fpool.end()));
    double hi = std::max(*std::max_element(rpool.begin(), rpool.end()),
                         *std::max_element(fpool.begin(), fpool.end()));
    double pad = 0.1 * std::max(hi - lo, 1e-9);
    KdeCurve cr = kde_curve(rpool, lo - pad, hi + pad);
    KdeCurve cf = kde_curve(fpool, lo - pad, hi + pad);
    double dmax = std::max(*std::max_element(cr.density.begin(), cr.density.end()),
                           *std::max_element(cf.density.begin(), cf.density.end()));
    plot::Axes kax{lo - pad, hi + pad, 0, 1.05 * std::max(dmax, 1e-9)};
    plot::Canvas kcanvas(640, 420);
    kcanvas.frame();
    kcanvas.polyline(kax, cr.grid, cr.density, {200, 40, 40});
    kcanvas.polyline(kax, cf.grid, cf.density, {40, 60, 200});
    std::string kde_path = out_prefix + "_kde.png";
    kcanvas.save_png(kde_path);
    if (plot_paths) plot_paths->push_back(kde_path);
  }
  return l1;
}

ReconstructionReport reconstruction_report(const model::KoVAE& m,
                                           const data::SeriesBatch& batch,
                                           const std::string& out_prefix) {
  data::SeriesBatch norm =
      batch.normalized()
          ? batch
          : data::apply_normalization(batch, m.norm_lo(), m.norm_hi());
  model::LatentSequence lat =
      m.posterior_forward(norm, model::Sampling::Mean, /*seed=*/0);
  Tensor3 recon = m.decode(lat.z);

  ReconstructionReport rep;
  rep.per_feature_mse.assign(batch.d(), 0.0);
  std::vector<double> feature_count(batch.d(), 0.0);
  double se_all = 0, se_obs = 0, se_mask = 0;
  int n_all = 0, n_obs = 0, n_mask = 0;
  for (int i = 0; i < norm.n(); ++i)
    for (int s = 0; s < norm.t(); ++s)
      for (int j = 0; j < norm.d(); ++j) {
        double e = recon(i, s, j) - norm.values(i, s, j);
        double sq = e * e;
        se_all += sq;
        ++n_all;
        if (norm.observed(i, s)) {
          se_obs += sq;
          ++n_obs;
          rep.per_feature_mse[j] += sq;
          feature_count[j] += 1;
        } else {
          se_mask += sq;
          ++n_mask;
        }
      }
  rep.mse = se_all / std::max(n_all, 1);
  rep.mse_observed = se_obs / std::max(n_obs, 1);
  rep.mse_masked = n_mask > 0 ? se_mask / n_mask : 0.0;
  for (int j = 0; j < batch.d(); ++j)
    rep.per_feature_mse[j] /= std::max(feature_count[j], 1.0);

  if (!out_prefix.empty()) {
    // Overlays for the first 5 features of the first sequence, solid truth
    // vs dashed reconstruction, in raw data units.
    data::SeriesBatch recon_batch = norm;
    recon_batch.values = recon;
    data::SeriesBatch raw_recon = data::denormalize(recon_batch);
    data::SeriesBatch raw_truth =
        batch.normalized() ? data::denormalize(batch) : batch;
    int show = std::min(5, batch.d());
    for (int j = 0; j < show; ++j) {
      std::vector<double> ts(norm.t()), truth(norm.t()), pred(norm.t());
      for (int s = 0; s < norm.t(); ++s) {
        ts[s] = norm.timestamps(0, s);
        truth[s] = raw_truth.values(0, s, j);
        pred[s] = raw_recon.values(0, s, j);
      }
      std::vector<double> all_y = truth;
      all_y.insert(all_y.end(), pred.begin(), pred.end());
      plot::Axes ax = plot::Axes::fit(ts, all_y);
      plot::Canvas canvas(640, 320);
      canvas.frame();
      canvas.polyline(ax, ts, truth, {30, 30, 30});
      canvas.polyline(ax, ts, pred, {200, 40, 40}, /*dash=*/3);
      std::string path = out_prefix + "_feature" + std::to_string(j) + ".png";
      canvas.save_png(path);
      rep.plots.push_back(path);
    }
  }
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["discriminative"] = {{"mean", discriminative.mean},
                         {"std", discriminative.stddev},
                         {"runs", discriminative.runs}};
  j["predictive"] = {{"mean", predictive.mean},
                     {"std", predictive.stddev},
                     {"runs", predictive.runs}};
  j["original_predictive"] = original_predictive;
  j["kde_l1"] = kde_l1;
  j["plots"] = plots;
  return j.dump(2);
}

}  // namespace kovae::eval
