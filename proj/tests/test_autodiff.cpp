#include <doctest.h>

#include "kovae/autodiff.hpp"
#include "kovae/koopman.hpp"
#include "test_helpers.hpp"

using namespace kovae;
using ag::Mat;
using ag::Tape;
using ag::Var;

namespace {
nn::ParamStore random_store(const std::vector<std::pair<std::string,
                                                        std::pair<int, int>>>& shapes,
                            uint64_t seed = 9) {
  nn::ParamStore ps;
  RngStream rng(seed, "store");
  for (const auto& [name, sh] : shapes)
    ps.create(name, rng.normal_matrix(sh.first, sh.second));
  return ps;
}
}  // namespace

TEST_CASE("autodiff: elementwise and matmul chain matches finite differences") {
  auto ps = random_store({{"a", {3, 4}}, {"b", {4, 5}}, {"c", {3, 5}}});
  auto build = [](Tape& t, nn::TapeBind& bind) {
    Var a = bind("a"), b = bind("b"), c = bind("c");
    Var m = ag::matmul(t, a, b);
    Var s = ag::sigmoid(t, m);
    Var u = ag::mul(t, s, c);
    Var v = ag::tanh_(t, ag::add(t, u, c));
    return ag::mean(t, v);
  };
  CHECK(testutil::max_rel_grad_err(ps, {"a", "b", "c"}, build) < 1e-6);
}

TEST_CASE("autodiff: broadcasts, reductions, slicing") {
  auto ps = random_store({{"x", {6, 3}}, {"r", {1, 3}}});
  auto build = [](Tape& t, nn::TapeBind& bind) {
    Var x = bind("x"), r = bind("r");
    Var y = ag::add_rowvec(t, x, r);
    Var z = ag::mul_rowvec(t, y, r);
    Var w = ag::sub_rowvec(t, z, ag::colwise_mean(t, z));
    Var top = ag::rows(t, w, 0, 3);
    Var bottom = ag::rows(t, w, 3, 3);
    Var v = ag::vcat(t, {ag::mul(t, top, bottom), top});
    Var sel = ag::cols(t, v, 1, 2);
    return ag::sum(t, ag::exp_(t, ag::scale(t, sel, 0.1)));
  };
  CHECK(testutil::max_rel_grad_err(ps, {"x", "r"}, build) < 1e-6);
}

TEST_CASE("autodiff: softplus, abs, clamp, log, pow") {
  auto ps = random_store({{"x", {4, 4}}});
  // keep entries away from clamp corners and abs kink
  ps.get("x") = ps.get("x").array() + 3.0;
  auto build = [](Tape& t, nn::TapeBind& bind) {
    Var x = bind("x");
    Var a = ag::softplus(t, x);
    Var b = ag::abs_(t, ag::add_scalar(t, x, -0.5));
    Var c = ag::clamp(t, x, -2.0, 8.0);
    Var d = ag::log_(t, ag::add_scalar(t, ag::mul(t, x, x), 1.0));
    Var e = ag::cwise_pow(t, ag::add_scalar(t, ag::mul(t, x, x), 0.5), -0.5);
    Var s = ag::add(t, ag::add(t, a, b), ag::add(t, c, ag::add(t, d, e)));
    return ag::mean(t, s);
  };
  CHECK(testutil::max_rel_grad_err(ps, {"x"}, build) < 1e-6);
}

TEST_CASE("autodiff: clamp zeroes the gradient outside the active range") {
  Tape t;
  Mat x(1, 3);
  x << -5.0, 0.0, 5.0;
  Var xv = t.leaf(x, true);
  Var y = ag::sum(t, ag::clamp(t, xv, -2.0, 2.0));
  t.backward(y);
  Mat g = t.grad(xv);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 1.0);
  CHECK(g(0, 2) == 0.0);
}

TEST_CASE("autodiff: gradients accumulate across reuse") {
  Tape t;
  Mat x = Mat::Constant(1, 1, 3.0);
  Var xv = t.leaf(x, true);
  Var y = ag::mul(t, xv, xv);  // x^2, both inputs the same node
  t.backward(y);
  CHECK(t.grad(xv)(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("autodiff: least-squares transition gradients match FD") {
  auto ps = random_store({{"z0", {12, 4}}, {"z1", {12, 4}}}, 17);
  auto build = [](Tape& t, nn::TapeBind& bind) {
    Var a = ag::lstsq_transition(t, bind("z0"), bind("z1"), 1e-6);
    // arbitrary smooth scalar of A
    Var s = ag::sum(t, ag::mul(t, a, a));
    return ag::add(t, s, ag::sum(t, ag::tanh_(t, a)));
  };
  CHECK(testutil::max_rel_grad_err(ps, {"z0", "z1"}, build, 1e-5, 8) < 1e-4);
}

TEST_CASE("autodiff: eigenvalue-modulus penalty gradient matches FD") {
  // Well-separated spectrum keeps the eigendecomposition derivative stable.
  Mat a0(3, 3);
  a0 << 0.9, 0.4, 0.0,
       -0.4, 0.6, 0.1,
        0.0, 0.0, 0.2;
  nn::ParamStore ps;
  ps.create("a", a0);
  Eigen::VectorXd targets(2);
  targets << 1.0, 0.5;
  auto build = [&](Tape& t, nn::TapeBind& bind) {
    return ag::eig_modulus_penalty(t, bind("a"), targets);
  };
  CHECK(testutil::max_rel_grad_err(ps, {"a"}, build, 1e-6, 9) < 1e-4);
}

TEST_CASE("autodiff: eigen penalty value is exact for a diagonal matrix") {
  Tape t;
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = 0.5;
  a(1, 1) = 0.25;
  Eigen::VectorXd targets(1);
  targets << 1.0;
  Var av = t.leaf(a, true);
  Var p = ag::eig_modulus_penalty(t, av, targets);
  CHECK(t.val(p)(0, 0) == doctest::Approx(0.25));  // (0.5 - 1)^2
}

TEST_CASE("autodiff: degenerate spectrum skips the eigen gradient") {
  Tape t;
  Var av = t.leaf(Mat::Identity(3, 3), true);  // triple eigenvalue 1
  Eigen::VectorXd targets(2);
  targets << 0.5, 0.5;
  Var p = ag::eig_modulus_penalty(t, av, targets);
  CHECK(t.val(p)(0, 0) == doctest::Approx(0.5));
  t.backward(p);
  CHECK(t.grad(av).norm() == 0.0);  // guarded, treated as zero
}
