#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "kovae/data.hpp"
#include "test_helpers.hpp"

using namespace kovae;

namespace {
double pendulum_energy(double theta, double omega, double g_over_l) {
  return 0.5 * omega * omega + g_over_l * (1.0 - std::cos(theta));
}
}  // namespace

TEST_CASE("sines: analytic values with forced parameters") {
  // x(t) = sin(2*pi*eta*t + theta) with eta=0.25, theta=0.
  double eta = 0.25, theta = 0.0;
  auto value = [&](int t) {
    return std::sin(2.0 * std::numbers::pi * eta * t + theta);
  };
  CHECK(value(1) == doctest::Approx(1.0));
  CHECK(std::abs(value(2)) < 1e-12);

  auto b = data::generate_sines(7, 10, 5, 123);
  CHECK(b.n() == 7);
  CHECK(b.t() == 10);
  CHECK(b.d() == 5);  // benchmark default channel count
  for (double v : b.values.raw()) {
    CHECK(v <= 1.0 + 1e-12);
    CHECK(v >= -1.0 - 1e-12);
  }
  CHECK(b.mask.minCoeff() == 1);
  // Unitless benchmark grid t_s = s / T.
  CHECK(b.timestamps(0, 0) == doctest::Approx(0.0));
  CHECK(b.timestamps(3, 7) == doctest::Approx(0.7));
  CHECK_THROWS(data::generate_sines(0, 10, 5, 1));
  CHECK_THROWS(data::generate_sines(5, 10, 0, 1));
}

TEST_CASE("sines: deterministic for a fixed seed") {
  auto a = data::generate_sines(5, 12, 3, 99);
  auto b = data::generate_sines(5, 12, 3, 99);
  CHECK(a.values.raw() == b.values.raw());
  auto c = data::generate_sines(5, 12, 3, 100);
  CHECK(a.values.raw() != c.values.raw());
}

TEST_CASE("pendulum: equilibrium start stays at rest") {
  data::PendulumParams p;
  auto traj = data::pendulum_trajectory(0.0, p);
  CHECK(traj.rows() == 170);
  CHECK(traj.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pendulum: energy drift below 1e-3 against dt/100 reference") {
  data::PendulumParams p;
  double gl = p.gravity / p.length;
  auto traj = data::pendulum_trajectory(2.0, p);
  double e0 = pendulum_energy(traj(0, 0), traj(0, 1), gl);
  double worst = 0;
  for (int s = 1; s < traj.rows(); ++s) {
    double e = pendulum_energy(traj(s, 0), traj(s, 1), gl);
    worst = std::max(worst, std::abs(e - e0) / e0);
  }
  CHECK(worst < 1e-3);

  // Reference integration at dt/100 (independent oracle for the trajectory
  // itself, not only the invariant).
  auto ref = data::pendulum_trajectory(2.0, p, p.dt / 100.0);
  double max_dev = (traj.col(0) - ref.col(0)).cwiseAbs().maxCoeff();
  CHECK(max_dev < 1e-4);
}

TEST_CASE("pendulum: batch shape, noise scale, angle bound") {
  data::PendulumParams p;
  auto b = data::generate_pendulum(20, p, 7);
  CHECK(b.n() == 20);
  CHECK(b.t() == 170);  // horizon / dt
  CHECK(b.d() == 2);
  CHECK(b.timestamps(0, 1) == doctest::Approx(0.1));
  // Clean theta is bounded by the energy of the widest start; noise adds
  // ~0.08-scale jitter.
  double max_theta = 0;
  for (int i = 0; i < b.n(); ++i)
    for (int s = 0; s < b.t(); ++s)
      max_theta = std::max(max_theta, std::abs(b.values(i, s, 0)));
  CHECK(max_theta < p.theta0_hi + 1.0);
  CHECK_THROWS(data::generate_pendulum(
      3, data::PendulumParams{.dt = -0.1}, 1));
}

TEST_CASE("normalize: min-max, constant features, round trip") {
  Tensor3 vals(1, 3, 2);
  // feature 0: {2, 4, 3} -> {0, 1, 0.5}; feature 1 constant 3 -> 0.5
  vals(0, 0, 0) = 2;
  vals(0, 1, 0) = 4;
  vals(0, 2, 0) = 3;
  for (int s = 0; s < 3; ++s) vals(0, s, 1) = 3;
  data::SeriesBatch b;
  b.values = vals;
  b.timestamps.setZero(1, 3);
  for (int s = 0; s < 3; ++s) b.timestamps(0, s) = s;
  b.mask.setOnes(1, 3);

  auto n = data::normalize(b);
  CHECK(n.values(0, 0, 0) == doctest::Approx(0.0));
  CHECK(n.values(0, 1, 0) == doctest::Approx(1.0));
  CHECK(n.values(0, 2, 0) == doctest::Approx(0.5));
  CHECK(n.values(0, 0, 1) == doctest::Approx(0.5));
  CHECK_THROWS(data::normalize(n));        // already normalized
  CHECK_THROWS(data::denormalize(b));      // no stored ranges

  auto back = data::denormalize(n);
  for (int s = 0; s < 3; ++s)
    CHECK(back.values(0, s, 0) == doctest::Approx(vals(0, s, 0)).epsilon(1e-9));
}

TEST_CASE("normalize: round trip on a sines batch within 1e-6") {
  auto b = data::generate_sines(50, 24, 5, 42);
  auto n = data::normalize(b);
  for (double v : n.values.raw()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  auto back = data::denormalize(n);
  double worst = 0;
  for (size_t i = 0; i < back.values.raw().size(); ++i)
    worst = std::max(worst,
                     std::abs(back.values.raw()[i] - b.values.raw()[i]));
  CHECK(worst < 1e-6);
}

TEST_CASE("drop_observations: exact counts, first kept, placeholders") {
  auto b = data::generate_sines(30, 10, 2, 5);
  auto d = data::drop_observations(b, 0.3, 11);
  for (int i = 0; i < d.n(); ++i) {
    CHECK(d.observed_count(i) == 7);  // 10 - round(0.3*10)
    CHECK(d.observed(i, 0));
  }
  // Masked positions hold the last observed value.
  for (int i = 0; i < d.n(); ++i) {
    double last0 = d.values(i, 0, 0);
    for (int s = 0; s < d.t(); ++s) {
      if (d.observed(i, s))
        last0 = d.values(i, s, 0);
      else
        CHECK(d.values(i, s, 0) == doctest::Approx(last0));
    }
  }
  // Timestamps and shapes unchanged; mask only flips true -> false.
  CHECK(d.timestamps == b.timestamps);
  CHECK(d.n() == b.n());
  for (int i = 0; i < d.n(); ++i)
    for (int s = 0; s < d.t(); ++s)
      CHECK(d.mask(i, s) <= b.mask(i, s));

  auto same = data::drop_observations(b, 0.0, 11);
  CHECK(same.mask == b.mask);
  CHECK(same.values.raw() == b.values.raw());

  CHECK_THROWS(data::drop_observations(b, 0.95, 1));
  CHECK_THROWS(data::drop_observations(b, -0.1, 1));
}

TEST_CASE("drop_observations: 50% sines keeps NCDE preconditions") {
  auto b = data::generate_sines(8, 24, 5, 6);
  auto d = data::drop_observations(b, 0.5, 3);
  for (int i = 0; i < d.n(); ++i) CHECK(d.observed_count(i) == 12);
}

TEST_CASE("csv windows: counts, stride-1 coverage, shuffling, channel check") {
  std::string dir = testutil::scratch_dir("csvdata");
  std::string path = dir + "/rows.csv";
  {
    std::ofstream os(path);
    os << "a,b\n";
    for (int r = 0; r < 100; ++r) os << r << "," << 2 * r << "\n";
  }
  auto b = data::load_csv_dataset(path, 2, 24, 17);
  CHECK(b.n() == 77);  // 100 - 24 + 1
  CHECK(b.t() == 24);
  CHECK(b.d() == 2);

  // Every window is a contiguous run; every input row appears somewhere.
  std::vector<bool> covered(100, false);
  for (int i = 0; i < b.n(); ++i) {
    double start = b.values(i, 0, 0);
    for (int s = 0; s < 24; ++s) {
      CHECK(b.values(i, s, 0) == doctest::Approx(start + s));
      covered[static_cast<int>(start) + s] = true;
    }
  }
  CHECK(std::all_of(covered.begin(), covered.end(), [](bool v) { return v; }));

  // Shuffled under the seed: first window is almost surely not row 0.
  auto b2 = data::load_csv_dataset(path, 2, 24, 17);
  CHECK(b.values.raw() == b2.values.raw());

  std::string one = dir + "/one.csv";
  {
    std::ofstream os(one);
    for (int r = 0; r < 24; ++r) os << r << "," << r << "\n";
  }
  CHECK(data::load_csv_dataset(one, 2, 24, 1).n() == 1);
  CHECK_THROWS(data::load_csv_dataset(one, 2, 25, 1));
  CHECK_THROWS(data::load_csv_dataset(one, 3, 24, 1));
}

TEST_CASE("batch archive: save/load round trip with mask and ranges") {
  auto b = data::generate_sines(6, 8, 3, 21);
  auto dropped = data::drop_observations(b, 0.3, 2);
  auto n = data::normalize(dropped);
  std::string path = testutil::scratch_dir("batchio") + "/b.kvar";
  data::save_batch(n, path);
  auto r = data::load_batch(path);
  CHECK(r.values.raw() == n.values.raw());
  CHECK(r.mask == n.mask);
  CHECK(r.timestamps == n.timestamps);
  CHECK(r.norm_lo == n.norm_lo);
  CHECK(r.norm_hi == n.norm_hi);
}

TEST_CASE("split_batch: deterministic disjoint split") {
  auto b = data::generate_sines(10, 6, 2, 3);
  auto [tr, te] = data::split_batch(b, 0.8, 77);
  CHECK(tr.n() == 8);
  CHECK(te.n() == 2);
  auto [tr2, te2] = data::split_batch(b, 0.8, 77);
  CHECK(tr.values.raw() == tr2.values.raw());
}
