#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kunita/kernels.hpp"
#include "kunita/noise.hpp"

using namespace kunita;

namespace {

KernelParams se(int d, double alpha = 1.0, double sigma = 1.0) {
  return {KernelFamily::SquaredExponential, alpha, sigma, 0.0, d};
}

KernelParams matern(int d, double c, double alpha = 1.0, double sigma = 1.0) {
  return {KernelFamily::Matern, alpha, sigma, c, d};
}

LandmarkConfig two_points_1d(double a, double b) {
  return LandmarkConfig(2, 1, Eigen::Vector2d(a, b));
}

}  // namespace

TEST_CASE("increments are deterministic in (seed, stream, step)") {
  const KernelParams p = se(2);
  LandmarkConfig x(2, 2, Eigen::Vector4d(0, 0, 1, 0));
  NoiseBackend g1 = make_noise_grid(p, x, 42, 7);
  NoiseBackend g2 = make_noise_grid(p, x, 42, 7);
  const NoiseIncrement a = sample_increment(g1, 0.01, 5);
  const NoiseIncrement b = sample_increment(g2, 0.01, 5);
  CHECK(a.values == b.values);

  const NoiseIncrement c = sample_increment(g1, 0.01, 6);
  CHECK(a.values != c.values);
  NoiseBackend g3 = make_noise_grid(p, x, 43, 7);
  CHECK(sample_increment(g3, 0.01, 5).values != a.values);
  NoiseBackend g4 = make_noise_grid(p, x, 42, 8);
  CHECK(sample_increment(g4, 0.01, 5).values != a.values);
}

TEST_CASE("dt = 0 yields a zero increment") {
  const KernelParams p = se(1);
  LandmarkConfig x = two_points_1d(0.0, 1.0);
  NoiseBackend grid = make_noise_grid(p, x, 1);
  CHECK(sample_increment(grid, 0.0, 0).values.norm() == 0.0);
  NoiseBackend exact = ExactCovariance{p, 2, 1, 0};
  CHECK(sample_increment(exact, 0.0, 0).values.norm() == 0.0);
}

TEST_CASE("increment marginals have variance dt") {
  const KernelParams p = se(1);
  LandmarkConfig x(1, 1, Eigen::VectorXd::Zero(1));
  NoiseBackend grid = make_noise_grid(p, x, 99);
  const double dt = 0.25;
  double sum = 0.0, sum2 = 0.0;
  std::int64_t count = 0;
  for (int s = 0; s < 200; ++s) {
    const NoiseIncrement inc = sample_increment(grid, dt, s);
    sum += inc.values.sum();
    sum2 += inc.values.squaredNorm();
    count += inc.values.size();
  }
  const double mean = sum / count;
  const double var = sum2 / count - mean * mean;
  // SE(var) ~ var * sqrt(2/count)
  const double se_var = dt * std::sqrt(2.0 / count);
  CHECK(std::fabs(mean) <= 3.0 * std::sqrt(dt / count));
  CHECK(std::fabs(var - dt) <= 3.0 * se_var);
}

TEST_CASE("driven displacement variance approaches g(0) dt") {
  // Var(dx_i) = g(0) dt per axis for both backends; grid converges as the
  // quadrature refines.
  const double dt = 0.1;
  const int reps = 4000;
  for (int family = 0; family < 2; ++family) {
    const KernelParams p = family == 0 ? se(1, 0.8, 0.7) : matern(1, 2.5, 0.8, 0.7);
    const double g0 = variance(p);
    LandmarkConfig x(1, 1, Eigen::VectorXd::Zero(1));

    NoiseBackend grid = make_noise_grid(p, x, 7, 0, 0.25);
    NoiseBackend exact = ExactCovariance{p, 1, 7, 0};
    for (const NoiseBackend& backend : {grid, exact}) {
      double sum2 = 0.0;
      for (int s = 0; s < reps; ++s) {
        const NoiseIncrement inc = sample_increment(backend, dt, s);
        sum2 += drive(backend, p, x, inc).squaredNorm();
      }
      const double var = sum2 / reps;
      const double se_est = g0 * dt * std::sqrt(2.0 / reps);
      CHECK(std::fabs(var - g0 * dt) <= 4.0 * se_est);
    }
  }
}

TEST_CASE("well separated points are driven nearly independently") {
  const KernelParams p = se(1);
  LandmarkConfig x = two_points_1d(0.0, 20.0);
  NoiseBackend grid = make_noise_grid(p, x, 5);
  const double dt = 0.1;
  const int reps = 4000;
  double cross = 0.0, v0 = 0.0, v1 = 0.0;
  for (int s = 0; s < reps; ++s) {
    const Eigen::VectorXd dx = drive(grid, p, x, sample_increment(grid, dt, s));
    cross += dx[0] * dx[1];
    v0 += dx[0] * dx[0];
    v1 += dx[1] * dx[1];
  }
  const double corr = cross / std::sqrt(v0 * v1);
  CHECK(std::fabs(corr) <= 4.0 / std::sqrt(static_cast<double>(reps)));
}

TEST_CASE("drive covariance matches g at finite separation") {
  // E[dx_0 dx_1] = g(|x_0 - x_1|) dt
  const KernelParams p = se(1);
  const double r = 1.3, dt = 0.05;
  LandmarkConfig x = two_points_1d(0.0, r);
  NoiseBackend grid = make_noise_grid(p, x, 31, 0, 0.25);
  const int reps = 20000;
  double cross = 0.0;
  for (int s = 0; s < reps; ++s) {
    const Eigen::VectorXd dx = drive(grid, p, x, sample_increment(grid, dt, s));
    cross += dx[0] * dx[1];
  }
  const double target = eval_g(p, r) * dt;
  const double se_est = variance(p) * dt * std::sqrt(2.0 / reps);
  CHECK(std::fabs(cross / reps - target) <= 4.0 * se_est);
}

TEST_CASE("extending the point set preserves the prefix bit for bit") {
  const KernelParams p = se(2, 0.9, 0.8);
  // 5-point cross, then a 25-point superset containing it as a prefix
  Eigen::VectorXd base(10);
  base << 0, 0, 1, 0, -1, 0, 0, 1, 0, -1;
  LandmarkConfig small(5, 2, base);

  Eigen::VectorXd big(50);
  big.head(10) = base;
  int k = 10;
  for (int i = 0; i < 5 && k < 50; ++i)
    for (int j = 0; j < 5 && k < 50; ++j) {
      const double px = -1.0 + 0.5 * i + 0.03, py = -1.0 + 0.5 * j + 0.07;
      big[k++] = px;
      big[k++] = py;
    }
  LandmarkConfig superset(25, 2, big);

  // the grid must cover the superset so both calls see identical nodes
  NoiseBackend grid = make_noise_grid(p, superset, 17);
  const NoiseIncrement inc = sample_increment(grid, 0.01, 3);
  const Eigen::VectorXd dx_small = drive(grid, p, small, inc);
  const Eigen::VectorXd dx_big = extend_points(grid, p, superset, inc);
  CHECK(dx_big.head(10) == dx_small);

  NoiseBackend exact = ExactCovariance{p, 5, 17, 0};
  CHECK_THROWS_AS(extend_points(exact, p, superset, inc), ParameterError);
}

TEST_CASE("grid refinement recovers the exact displacement variance") {
  const KernelParams p = se(1);
  const double g0 = variance(p);
  LandmarkConfig x(1, 1, Eigen::VectorXd::Zero(1));
  const double dt = 1.0;
  double prev_err = 1e18;
  for (double h_over_sigma : {1.0, 0.5, 0.25}) {
    NoiseBackend grid = make_noise_grid(p, x, 3, 0, h_over_sigma);
    // exact per-step variance of the quadrature: dt h^d sum_j k(|x-z_j|)^2
    const auto& g = std::get<NoiseGrid>(grid);
    double q = 0.0;
    for (std::int64_t j = 0; j < g.node_count(); ++j) {
      const double kv = eval_k(p, (x.point(0) - g.node(j)).norm());
      q += kv * kv;
    }
    q *= g.h * dt;  // h^d with d=1, times dt
    const double err = std::fabs(q - g0 * dt) / (g0 * dt);
    CHECK(err <= std::max(prev_err, 1e-12));
    prev_err = err;
    if (h_over_sigma == 0.25) CHECK(err <= 0.02);
  }
}

TEST_CASE("out-of-domain points are rejected") {
  const KernelParams p = se(1);
  LandmarkConfig x = two_points_1d(0.0, 1.0);
  NoiseBackend grid = make_noise_grid(p, x, 1);
  const NoiseIncrement inc = sample_increment(grid, 0.01, 0);
  LandmarkConfig far = two_points_1d(0.0, 100.0);
  CHECK_THROWS_AS(drive(grid, p, far, inc), DomainCoverageError);
}

TEST_CASE("binary noise record round-trips exactly") {
  const KernelParams p = se(2);
  LandmarkConfig x(2, 2, Eigen::Vector4d(0, 0, 1, 1));
  const NoiseGrid grid = make_noise_grid(p, x, 123, 4);
  const double dt = 0.02;
  const int steps = 7;

  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  write_noise_record(buf, grid, dt, steps);
  const NoiseRecord rec = read_noise_record(buf);

  CHECK(rec.grid.seed == grid.seed);
  CHECK(rec.grid.stream == grid.stream);
  CHECK(rec.grid.h == grid.h);
  CHECK(rec.grid.counts == grid.counts);
  CHECK(rec.dt == dt);
  REQUIRE(rec.increments.size() == static_cast<std::size_t>(steps));
  NoiseBackend backend = grid;
  for (int s = 0; s < steps; ++s) {
    const NoiseIncrement live = sample_increment(backend, dt, s);
    CHECK(rec.increments[s].values == live.values);
  }

  std::stringstream bad(std::ios::in | std::ios::out | std::ios::binary);
  bad << "XXXX";
  CHECK_THROWS_AS(read_noise_record(bad), ParseError);
}
