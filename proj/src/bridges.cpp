#include "kunita/bridges.hpp"

#include <algorithm>
#include <cmath>

#include "kunita/rng.hpp"

namespace kunita {

Auxiliary aux_from_observation(const KernelParams& params, const LandmarkConfig& v) {
  return Auxiliary{kernel_matrix_g(params, v)};
}

Eigen::VectorXd score_delyon_hu(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                double t, double T) {
  if (!(t < T)) throw ParameterError("score requires t < T");
  return -(x - y) / (T - t);
}

Eigen::VectorXd guided_score(const Auxiliary& aux, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y, double t, double T) {
  if (!(t < T)) throw ParameterError("score requires t < T");
  Eigen::LLT<Eigen::MatrixXd> llt((T - t) * aux.a_tilde);
  if (llt.info() != Eigen::Success) throw FactorizationError("auxiliary diffusion not SPD");
  return llt.solve(y - x);
}

namespace {

struct StepModel {
  Eigen::MatrixXd a;  // a(x)
  Eigen::MatrixXd l;  // chol(a(x))
};

StepModel eval_dynamics(const BridgeDynamics& dyn, const LandmarkConfig& x) {
  if (const auto* kd = std::get_if<KunitaDiffusion>(&dyn)) {
    Eigen::MatrixXd a = kernel_matrix_g(kd->params, x);
    Eigen::MatrixXd l = factor_psd(a);
    return {std::move(a), std::move(l)};
  }
  const auto& cd = std::get<ConstantDiffusion>(dyn);
  return {cd.a, factor_psd(cd.a)};
}

}  // namespace

WeightedPath simulate_bridge_with_innovations(const BridgeSpec& spec,
                                              const BridgeDynamics& dynamics,
                                              const LandmarkConfig& x0,
                                              const Eigen::MatrixXd& innovations) {
  if (!(spec.horizon > 0.0)) throw ParameterError("bridge horizon must be positive");
  if (spec.steps < 2) throw ParameterError("bridge needs steps >= 2");
  const Eigen::VectorXd y = spec.target.coords;
  if (y.size() != x0.coords.size()) throw ParameterError("target dimension mismatch");
  const int nd = static_cast<int>(x0.coords.size());
  if (innovations.rows() < spec.steps || innovations.cols() != nd)
    throw ParameterError("innovations shape does not match the step grid");

  const double T = spec.horizon;
  const double dt = T / spec.steps;
  const double sdt = std::sqrt(dt);
  const double eps2 = spec.obs_noise * spec.obs_noise;
  const Eigen::MatrixXd* a_tilde = nullptr;
  Eigen::MatrixXd a_tilde_storage;
  if (spec.method == BridgeMethod::Guided) {
    // Auxiliary diffusion: explicit override, else frozen at the target.
    if (spec.aux_diffusion.size() > 0) {
      a_tilde_storage = spec.aux_diffusion;
    } else if (const auto* kd = std::get_if<KunitaDiffusion>(&dynamics)) {
      a_tilde_storage = kernel_matrix_g(kd->params, spec.target);
    } else {
      a_tilde_storage = std::get<ConstantDiffusion>(dynamics).a;
    }
    a_tilde = &a_tilde_storage;
  }

  // A guided path that leaves the neighbourhood of the data by orders of
  // magnitude has hit the explicit-Euler stability limit of the pulling
  // drift; its weight increments are meaningless, so fail instead.
  const double divergence_bound =
      10.0 * std::max({x0.coords.cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff(), 1.0});

  WeightedPath out;
  out.path.backend = "exact_covariance";
  out.path.convention = "ito";
  Eigen::VectorXd x = x0.coords;
  out.path.times.push_back(0.0);
  out.path.positions.push_back(x);

  for (int s = 0; s < spec.steps; ++s) {
    const double t = s * dt;
    const LandmarkConfig cur(x0.n, x0.d, x);
    const StepModel sm = eval_dynamics(dynamics, cur);

    Eigen::VectorXd drift(nd);
    if (spec.method == BridgeMethod::DelyonHu) {
      drift = score_delyon_hu(x, y, t, T);
    } else {
      Eigen::MatrixXd m = (T - t) * (*a_tilde);
      if (spec.widening.size() > 0)
        m += spec.widening;
      else
        m.diagonal().array() += eps2;
      Eigen::LLT<Eigen::MatrixXd> llt(m);
      if (llt.info() != Eigen::Success)
        throw FactorizationError("widened auxiliary covariance not SPD");
      const Eigen::VectorXd r_tilde = llt.solve(y - x);
      const Eigen::MatrixXd h_tilde = llt.solve(Eigen::MatrixXd::Identity(nd, nd));
      drift = sm.a * r_tilde;
      // van der Meulen-Schauer integrand with b = b~ = 0.
      const Eigen::MatrixXd diff = sm.a - *a_tilde;
      const Eigen::MatrixXd inner = h_tilde - r_tilde * r_tilde.transpose();
      const double increment = -0.5 * diff.cwiseProduct(inner.transpose()).sum() * dt;
      // A single Euler cell contributing a log-ratio beyond log(DBL_MAX) can
      // never be exponentiated; the grid does not resolve the weight integrand.
      if (!(std::abs(increment) < 700.0))
        throw NumericalError("bridge weight increment exceeds grid resolution");
      out.log_weight += increment;
    }
    x = x + drift * dt + sm.l * (sdt * innovations.row(s).transpose());
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > divergence_bound)
      throw NumericalError("guided bridge diverged; refine the grid or move the auxiliary");
    out.path.times.push_back((s + 1) * dt);
    out.path.positions.push_back(x);
  }

  if (spec.clamp_endpoint && spec.method == BridgeMethod::DelyonHu) {
    out.path.positions.back() = y;
  }
  return out;
}

WeightedPath simulate_bridge(const BridgeSpec& spec, const BridgeDynamics& dynamics,
                             const LandmarkConfig& x0, std::uint64_t seed,
                             std::uint64_t stream) {
  const int nd = static_cast<int>(x0.coords.size());
  const CounterRng rng(seed, stream);
  Eigen::MatrixXd z(spec.steps, nd);
  for (int s = 0; s < spec.steps; ++s)
    for (int i = 0; i < nd; ++i) z(s, i) = rng.normal(static_cast<std::uint64_t>(s), i, 0);
  WeightedPath wp = simulate_bridge_with_innovations(spec, dynamics, x0, z);
  wp.path.seed = seed;
  wp.path.stream = stream;
  return wp;
}

}  // namespace kunita
