#include "kunita/processes.hpp"

#include <cmath>
#include <functional>

namespace kunita {

namespace {

const KernelParams& spec_params(const ProcessSpec& spec) {
  return std::visit([](const auto& s) -> const KernelParams& { return s.params; }, spec);
}

NoiseBackend with_stream(const NoiseBackend& backend, std::uint64_t stream) {
  NoiseBackend b = backend;
  std::visit([&](auto& v) { v.stream = stream; }, b);
  return b;
}

bool collided(const LandmarkConfig& x, double sigma) {
  return x.n > 1 && x.min_pairwise_distance() < 1e-8 * sigma;
}

// Stratonovich noise terms of the EPDiff system for one increment, with the
// same h^{d/2} node weight as drive():
// dx_i = sum_{j,a} k(r_ij) h^{d/2} e_a dW_{j,a},
// dp_i = -sum_{j,a} p_{i,a} k'(r_ij) h^{d/2} (x_i - zeta_j)/r_ij dW_{j,a}.
void epdiff_noise(const KernelParams& params, const NoiseGrid& grid,
                  const LandmarkConfig& x, const Eigen::VectorXd& p,
                  const NoiseIncrement& inc, Eigen::VectorXd& dx, Eigen::VectorXd& dp) {
  const int d = grid.d;
  const double hd = std::pow(grid.h, 0.5 * d);
  const std::int64_t nodes = grid.node_count();
  dx.setZero(x.coords.size());
  dp.setZero(x.coords.size());
  Eigen::MatrixXd zeta(d, nodes);
  for (std::int64_t j = 0; j < nodes; ++j) zeta.col(j) = grid.node(j);
  for (int i = 0; i < x.n; ++i) {
    const Eigen::VectorXd xi = x.point(i);
    if (!grid.contains(xi))
      throw DomainCoverageError("landmark outside the padded noise domain");
    for (std::int64_t j = 0; j < nodes; ++j) {
      const Eigen::VectorXd diff = xi - zeta.col(j);
      const double r = diff.norm();
      const double w = eval_k(params, r) * hd;
      double pdw = 0.0;
      for (int a = 0; a < d; ++a) {
        dx[i * d + a] += w * inc.values[j * d + a];
        pdw += p[i * d + a] * inc.values[j * d + a];
      }
      if (r > 0.0) dp.segment(i * d, d) -= eval_k_deriv(params, r) * hd * pdw / r * diff;
    }
  }
}

}  // namespace

std::vector<Eigen::MatrixXd> christoffel(const KernelParams& params, const LandmarkConfig& x) {
  params.validate();
  x.validate();
  if (params.family == KernelFamily::Matern && !(params.nu() > 1.0))
    throw ParameterError("Christoffel symbols need Matern nu > 1 for radial smoothness");
  const int n = x.n, d = x.d, m = n * d;
  const Eigen::MatrixXd kmat = kernel_matrix_k(params, x);
  const Eigen::MatrixXd kinv = kmat.llt().solve(Eigen::MatrixXd::Identity(m, m));

  // dg[e] = d/dcoord_e K(x)^{-1} = -Kinv (dK/dcoord_e) Kinv
  std::vector<Eigen::MatrixXd> dg(m);
  for (int mi = 0; mi < n; ++mi)
    for (int c = 0; c < d; ++c) {
      Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(m, m);
      for (int j = 0; j < n; ++j) {
        if (j == mi) continue;
        const Eigen::VectorXd diff = x.point(mi) - x.point(j);
        const double r = diff.norm();
        const double v = eval_k_deriv(params, r) * diff[c] / r;
        for (int a = 0; a < d; ++a) {
          dk(mi * d + a, j * d + a) = v;
          dk(j * d + a, mi * d + a) = v;
        }
      }
      dg[mi * d + c] = -kinv * dk * kinv;
    }

  std::vector<Eigen::MatrixXd> gamma(m, Eigen::MatrixXd::Zero(m, m));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = b; c < m; ++c) {
        double s = 0.0;
        for (int e = 0; e < m; ++e)
          s += kmat(a, e) * (dg[b](e, c) + dg[c](e, b) - dg[e](b, c));
        gamma[a](b, c) = 0.5 * s;
        gamma[a](c, b) = 0.5 * s;
      }
  return gamma;
}

namespace {

PathSample run_sde(const ProcessSpec& spec, const LandmarkConfig& x0,
                   const std::optional<Momentum>& p0, double T, int steps,
                   const NoiseBackend& backend, std::uint64_t stream,
                   const std::function<NoiseIncrement(const NoiseBackend&, double, int)>&
                       next_increment) {
  const KernelParams& params = spec_params(spec);
  params.validate();
  x0.validate();
  if (!(T > 0.0) || steps < 1) throw ParameterError("need T > 0 and steps >= 1");
  const bool has_momentum = std::holds_alternative<StochasticEPDiff>(spec) ||
                            std::holds_alternative<InnerMomentumNoise>(spec) ||
                            std::holds_alternative<Langevin>(spec);
  if (has_momentum && !p0)
    throw ParameterError("this process variant requires an initial momentum");
  if (std::holds_alternative<RiemannianBM>(spec) && params.family == KernelFamily::Matern &&
      !(params.nu() > 1.0))
    throw ParameterError("Riemannian BM needs Matern nu > 1");

  const double dt = T / steps;
  PathSample path;
  path.stream = stream;
  path.convention = std::holds_alternative<StochasticEPDiff>(spec) ||
                            (std::holds_alternative<KunitaLandmark>(spec) &&
                             std::get<KunitaLandmark>(spec).convention == SdeConvention::Stratonovich)
                        ? "stratonovich"
                        : "ito";

  // EPDiff is driven by the grid embedded in its spec; everything else by the
  // supplied backend. The per-trajectory stream overrides the backend's.
  NoiseBackend drv = std::holds_alternative<StochasticEPDiff>(spec)
                         ? NoiseBackend(std::get<StochasticEPDiff>(spec).grid)
                         : backend;
  drv = with_stream(drv, stream);
  std::visit([&](const auto& v) { path.seed = v.seed; }, drv);
  path.backend = std::holds_alternative<NoiseGrid>(drv) ? "grid_quadrature" : "exact_covariance";

  Eigen::VectorXd x = x0.coords;
  Eigen::VectorXd p = p0 ? *p0 : Eigen::VectorXd();
  path.times.push_back(0.0);
  path.positions.push_back(x);
  if (has_momentum) path.momenta.push_back(p);

  for (int s = 0; s < steps; ++s) {
    const NoiseIncrement inc = next_increment(drv, dt, s);
    const LandmarkConfig cur(x0.n, x0.d, x);

    if (const auto* kf = std::get_if<KunitaLandmark>(&spec)) {
      if (kf->convention == SdeConvention::Ito) {
        x = x + drive(drv, params, cur, inc);
      } else {
        const Eigen::VectorXd d1 = drive(drv, params, cur, inc);
        const LandmarkConfig pred(x0.n, x0.d, x + d1);
        const Eigen::VectorXd d2 = drive(drv, params, pred, inc);
        x = x + 0.5 * (d1 + d2);
      }
    } else if (std::get_if<RiemannianBM>(&spec) != nullptr) {
      const Eigen::MatrixXd kmat = kernel_matrix_k(params, cur);
      const auto gamma = christoffel(params, cur);
      Eigen::VectorXd drift(x.size());
      for (int a = 0; a < x.size(); ++a)
        drift[a] = -0.5 * kmat.cwiseProduct(gamma[a]).sum();
      x = x + drift * dt + factor_psd(kmat) * inc.values;
    } else if (const auto* ep = std::get_if<StochasticEPDiff>(&spec)) {
      // Euler-Heun predictor-corrector for the Stratonovich system.
      const Eigen::VectorXd bx = grad_p_hamiltonian(params, cur, p);
      const Eigen::VectorXd bp = -grad_x_hamiltonian(params, cur, p);
      Eigen::VectorXd nx1, np1, nx2, np2;
      epdiff_noise(params, ep->grid, cur, p, inc, nx1, np1);
      const LandmarkConfig xpred(x0.n, x0.d, x + bx * dt + nx1);
      const Eigen::VectorXd ppred = p + bp * dt + np1;
      epdiff_noise(params, ep->grid, xpred, ppred, inc, nx2, np2);
      x = x + bx * dt + 0.5 * (nx1 + nx2);
      p = p + bp * dt + 0.5 * (np1 + np2);
    } else if (const auto* im = std::get_if<InnerMomentumNoise>(&spec)) {
      const Eigen::VectorXd bx = grad_p_hamiltonian(params, cur, p);
      const Eigen::VectorXd bp = -grad_x_hamiltonian(params, cur, p);
      x = x + bx * dt;
      p = p + bp * dt + im->noise_scale * inc.values;
    } else {
      const auto& lv = std::get<Langevin>(spec);
      const Eigen::VectorXd bx = grad_p_hamiltonian(params, cur, p);
      const Eigen::VectorXd bp =
          -lv.lambda * bx - grad_x_hamiltonian(params, cur, p);
      x = x + bx * dt;
      p = p + bp * dt + lv.sigma_noise * inc.values;
    }

    path.times.push_back((s + 1) * dt);
    path.positions.push_back(x);
    if (has_momentum) path.momenta.push_back(p);
    const LandmarkConfig next(x0.n, x0.d, x);
    if (collided(next, params.sigma)) {
      path.collision = true;
      break;
    }
  }
  return path;
}

}  // namespace

PathSample simulate(const ProcessSpec& spec, const LandmarkConfig& x0,
                    const std::optional<Momentum>& p0, double T, int steps,
                    const NoiseBackend& backend, std::uint64_t stream) {
  return run_sde(spec, x0, p0, T, steps, backend, stream,
                 [](const NoiseBackend& drv, double dt, int s) {
                   return sample_increment(drv, dt, static_cast<std::uint64_t>(s));
                 });
}

PathSample simulate_with_increments(const ProcessSpec& spec, const LandmarkConfig& x0,
                                    const std::optional<Momentum>& p0, double T,
                                    const NoiseBackend& backend,
                                    const std::vector<NoiseIncrement>& increments) {
  if (increments.empty()) throw ParameterError("need at least one increment");
  return run_sde(spec, x0, p0, T, static_cast<int>(increments.size()), backend, 0,
                 [&](const NoiseBackend&, double, int s) { return increments[s]; });
}

PathSample warp_points(const KernelParams& params, const LandmarkConfig& dense_points,
                       double T, int steps, const NoiseGrid& grid) {
  params.validate();
  if (!dense_points.coords.allFinite()) throw ParameterError("non-finite polyline coordinates");
  if (!(T > 0.0) || steps < 1) throw ParameterError("need T > 0 and steps >= 1");
  const double dt = T / steps;
  PathSample path;
  path.seed = grid.seed;
  path.stream = grid.stream;
  path.backend = "grid_quadrature";
  path.convention = "ito";
  Eigen::VectorXd x = dense_points.coords;
  path.times.push_back(0.0);
  path.positions.push_back(x);
  const NoiseBackend drv(grid);
  for (int s = 0; s < steps; ++s) {
    const NoiseIncrement inc = sample_increment(drv, dt, static_cast<std::uint64_t>(s));
    const LandmarkConfig cur(dense_points.n, dense_points.d, x);
    x = x + drive(drv, params, cur, inc);
    path.times.push_back((s + 1) * dt);
    path.positions.push_back(x);
  }
  return path;
}

}  // namespace kunita
