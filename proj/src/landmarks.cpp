#include "kunita/landmarks.hpp"

#include <cmath>
#include <limits>

#include "kunita/kernels.hpp"

namespace kunita {

double LandmarkConfig::min_pairwise_distance() const {
  double dmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      dmin = std::min(dmin, (point(i) - point(j)).norm());
  return dmin;
}

void LandmarkConfig::validate() const {
  if (n < 0 || d < 1 || d > 3) throw ParameterError("bad landmark configuration shape");
  if (coords.size() != static_cast<Eigen::Index>(n) * d)
    throw ParameterError("coordinate vector size does not match n*d");
  if (!coords.allFinite()) throw ParameterError("non-finite landmark coordinates");
  if (n > 1 && !(min_pairwise_distance() > 0.0))
    throw ParameterError("coincident landmarks");
}

double hamiltonian(const KernelParams& params, const LandmarkConfig& x, const Momentum& p) {
  if (p.size() != x.coords.size()) throw ParameterError("momentum size mismatch");
  double h = 0.0;
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.n; ++j) {
      const double kij = eval_k(params, (x.point(i) - x.point(j)).norm());
      h += kij * p.segment(i * x.d, x.d).dot(p.segment(j * x.d, x.d));
    }
  return 0.5 * h;
}

Eigen::VectorXd grad_p_hamiltonian(const KernelParams& params, const LandmarkConfig& x,
                                   const Momentum& p) {
  if (p.size() != x.coords.size()) throw ParameterError("momentum size mismatch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.n; ++j) {
      const double kij = eval_k(params, (x.point(i) - x.point(j)).norm());
      g.segment(i * x.d, x.d) += kij * p.segment(j * x.d, x.d);
    }
  return g;
}

Eigen::VectorXd grad_x_hamiltonian(const KernelParams& params, const LandmarkConfig& x,
                                   const Momentum& p) {
  if (p.size() != x.coords.size()) throw ParameterError("momentum size mismatch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.n; ++j) {
      if (i == j) continue;
      const Eigen::VectorXd diff = x.point(i) - x.point(j);
      const double r = diff.norm();
      const double pp = p.segment(i * x.d, x.d).dot(p.segment(j * x.d, x.d));
      g.segment(i * x.d, x.d) += pp * eval_k_deriv(params, r) / r * diff;
    }
  return g;
}

namespace {

struct PhaseDeriv {
  Eigen::VectorXd dx, dp;
};

PhaseDeriv hamiltonian_rhs(const KernelParams& params, const LandmarkConfig& shape,
                           const Eigen::VectorXd& x, const Eigen::VectorXd& p) {
  LandmarkConfig cur(shape.n, shape.d, x);
  return {grad_p_hamiltonian(params, cur, p), -grad_x_hamiltonian(params, cur, p)};
}

}  // namespace

GeodesicPath geodesic(const KernelParams& params, const LandmarkConfig& x0,
                      const Momentum& p0, double T, int steps) {
  params.validate();
  x0.validate();
  if (p0.size() != x0.coords.size()) throw ParameterError("momentum size mismatch");
  if (!(T > 0.0) || steps < 1) throw ParameterError("need T > 0 and steps >= 1");

  const double dt = T / steps;
  const double collision_tol = 1e-8 * params.sigma;
  GeodesicPath path;
  path.times.reserve(steps + 1);
  path.states.reserve(steps + 1);
  Eigen::VectorXd x = x0.coords, p = p0;
  path.times.push_back(0.0);
  path.states.emplace_back(x, p);

  for (int s = 0; s < steps; ++s) {
    const auto k1 = hamiltonian_rhs(params, x0, x, p);
    const auto k2 = hamiltonian_rhs(params, x0, x + 0.5 * dt * k1.dx, p + 0.5 * dt * k1.dp);
    const auto k3 = hamiltonian_rhs(params, x0, x + 0.5 * dt * k2.dx, p + 0.5 * dt * k2.dp);
    const auto k4 = hamiltonian_rhs(params, x0, x + dt * k3.dx, p + dt * k3.dp);
    x += dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    p += dt / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
    LandmarkConfig cur(x0.n, x0.d, x);
    if (x0.n > 1 && cur.min_pairwise_distance() < collision_tol)
      throw CollisionError("landmark collision during geodesic integration");
    path.times.push_back((s + 1) * dt);
    path.states.emplace_back(x, p);
  }
  return path;
}

LandmarkConfig rigid_transform(const LandmarkConfig& x, const Eigen::MatrixXd& rot,
                               const Eigen::VectorXd& trans) {
  x.validate();
  if (rot.rows() != x.d || rot.cols() != x.d || trans.size() != x.d)
    throw ParameterError("transform dimension mismatch");
  if ((rot * rot.transpose() - Eigen::MatrixXd::Identity(x.d, x.d)).norm() > 1e-10 ||
      rot.determinant() < 0.0)
    throw ParameterError("R is not a proper rotation");
  LandmarkConfig out = x;
  for (int i = 0; i < x.n; ++i) out.set_point(i, rot * x.point(i) + trans);
  return out;
}

}  // namespace kunita
