#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "kunita/errors.hpp"

namespace kunita {

struct KernelParams;

// n distinct labeled points in R^d, coordinates landmark-major:
// coords = (x_{1,1},...,x_{1,d}, x_{2,1},...).
struct LandmarkConfig {
  int n = 0;
  int d = 0;
  Eigen::VectorXd coords;

  LandmarkConfig() = default;
  LandmarkConfig(int n_, int d_, Eigen::VectorXd coords_)
      : n(n_), d(d_), coords(std::move(coords_)) {}

  Eigen::VectorXd point(int i) const { return coords.segment(i * d, d); }
  void set_point(int i, const Eigen::VectorXd& p) { coords.segment(i * d, d) = p; }

  double min_pairwise_distance() const;
  // Throws ParameterError on non-finite coordinates or coincident landmarks.
  void validate() const;
};

// Cotangent vector, same landmark-major layout.
using Momentum = Eigen::VectorXd;

struct GeodesicPath {
  std::vector<double> times;
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> states;  // (x, p)
  bool collision = false;  // halted early at a near-collision
};

// H(x,p) = 1/2 sum_ij p_i^T k(|x_i-x_j|) p_j.
double hamiltonian(const KernelParams& params, const LandmarkConfig& x,
                   const Momentum& p);

// Analytic gradients of H, using the radial derivative k'(r).
Eigen::VectorXd grad_p_hamiltonian(const KernelParams& params,
                                   const LandmarkConfig& x, const Momentum& p);
Eigen::VectorXd grad_x_hamiltonian(const KernelParams& params,
                                   const LandmarkConfig& x, const Momentum& p);

// Fixed-step RK4 integration of the Hamiltonian system
// dx = grad_p H dt, dp = -grad_x H dt. Throws CollisionError if the minimum
// pairwise distance drops below 1e-8*sigma.
GeodesicPath geodesic(const KernelParams& params, const LandmarkConfig& x0,
                      const Momentum& p0, double T, int steps);

// x_i -> R x_i + t. R must be orthogonal with det +1.
LandmarkConfig rigid_transform(const LandmarkConfig& x, const Eigen::MatrixXd& rot,
                               const Eigen::VectorXd& trans);

}  // namespace kunita
