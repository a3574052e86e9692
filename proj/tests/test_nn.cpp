#include <doctest.h>

#include "kovae/nn.hpp"
#include "test_helpers.hpp"

using namespace kovae;
using ag::Mat;
using ag::Tape;
using ag::Var;

TEST_CASE("nn: GRU gradients match finite differences") {
  nn::ParamStore ps;
  RngStream rng(11, "init");
  nn::GRU gru{"g", 3, 5, 2};
  gru.init(ps, rng);
  Mat x0 = rng.normal_matrix(4, 3), x1 = rng.normal_matrix(4, 3),
      x2 = rng.normal_matrix(4, 3);
  auto build = [&](Tape& t, nn::TapeBind& bind) {
    std::vector<Var> xs = {t.constant(x0), t.constant(x1), t.constant(x2)};
    auto hs = gru.forward(t, bind, xs);
    Var acc = ag::sum(t, hs.back());
    return ag::add(t, acc, ag::sum(t, ag::mul(t, hs[0], hs[1])));
  };
  auto names = ps.names();
  CHECK(testutil::max_rel_grad_err(ps, names, build, 1e-5, 3) < 1e-5);
}

TEST_CASE("nn: batch-norm normalizes pooled statistics and backprops") {
  nn::ParamStore ps, state;
  RngStream rng(13, "init");
  nn::BatchNorm bn{"b", 4};
  bn.init(ps, rng);
  bn.init_state(state);
  Mat x0 = 5.0 * rng.normal_matrix(8, 4);
  Mat x1 = 5.0 * rng.normal_matrix(8, 4).array() + 2.0;

  Tape t;
  nn::TapeBind bind(t, ps);
  auto ys = bn.forward(t, bind, state, {t.constant(x0), t.constant(x1)}, true);
  // Pooled over batch and time: mean ~0, var ~1 per feature.
  Mat stacked(16, 4);
  stacked << t.val(ys[0]), t.val(ys[1]);
  for (int j = 0; j < 4; ++j) {
    double m = stacked.col(j).mean();
    double v = (stacked.col(j).array() - m).square().mean();
    CHECK(std::abs(m) < 1e-9);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
  // Running statistics moved toward the batch statistics.
  CHECK(state.get("b.running_mean").cwiseAbs().sum() > 0.0);

  auto build = [&](Tape& tp, nn::TapeBind& bd) {
    nn::ParamStore st2;
    bn.init_state(st2);
    auto out = bn.forward(tp, bd, st2, {tp.constant(x0), tp.constant(x1)}, true);
    return ag::mean(tp, ag::mul(tp, out[0], out[1]));
  };
  CHECK(testutil::max_rel_grad_err(ps, {"b.gamma", "b.beta"}, build) < 1e-5);
}

TEST_CASE("nn: batch-norm eval mode uses running statistics") {
  nn::ParamStore ps, state;
  RngStream rng(14, "init");
  nn::BatchNorm bn{"b", 2};
  bn.init(ps, rng);
  bn.init_state(state);
  state.get("b.running_mean") << 1.0, -1.0;
  state.get("b.running_var") << 4.0, 0.25;
  Tape t;
  nn::TapeBind bind(t, ps);
  Mat x(1, 2);
  x << 3.0, -2.0;
  auto ys = bn.forward(t, bind, state, {t.constant(x)}, false);
  CHECK(t.val(ys[0])(0, 0) == doctest::Approx((3.0 - 1.0) / 2.0).epsilon(1e-4));
  CHECK(t.val(ys[0])(0, 1) == doctest::Approx((-2.0 + 1.0) / 0.5).epsilon(1e-4));
}

TEST_CASE("nn: Adam reduces a quadratic") {
  nn::ParamStore ps;
  ps.create("w", Mat::Constant(2, 2, 5.0));
  nn::Adam adam({.lr = 0.1});
  for (int i = 0; i < 200; ++i) {
    Tape t;
    nn::TapeBind bind(t, ps);
    Var w = bind("w");
    Var loss = ag::sum(t, ag::mul(t, w, w));
    t.backward(loss);
    std::map<std::string, Mat> grads;
    bind.collect_grads(grads);
    adam.step(ps, grads);
  }
  CHECK(ps.get("w").cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("nn: gradient clipping bounds the applied step") {
  nn::ParamStore ps;
  ps.create("w", Mat::Zero(1, 1));
  nn::Adam adam({.lr = 1.0, .grad_clip = 1.0});
  std::map<std::string, Mat> grads;
  grads["w"] = Mat::Constant(1, 1, 1e6);
  adam.step(ps, grads);
  // First Adam step magnitude is ~lr regardless, but the clipped gradient
  // must not overflow the moment buffers.
  CHECK(std::isfinite(ps.get("w")(0, 0)));
  CHECK(ps.adam_v("w")(0, 0) <= 1.0 + 1e-9);
}

TEST_CASE("nn: MLP small output-scale initialization") {
  nn::ParamStore ps;
  RngStream rng(15, "init");
  nn::MLP mlp{"f", 3, 8, 6, 1, 0.01};
  mlp.init(ps, rng);
  CHECK(ps.get("f.out.W").cwiseAbs().maxCoeff() < 0.01);
  Tape t;
  nn::TapeBind bind(t, ps);
  Var y = mlp.forward(t, bind, t.constant(rng.normal_matrix(4, 3)));
  CHECK(t.val(y).rows() == 4);
  CHECK(t.val(y).cols() == 6);
  CHECK(t.val(y).cwiseAbs().maxCoeff() < 0.1);
}
