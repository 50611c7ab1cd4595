#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include "kunita/kernels.hpp"
#include "kunita/landmarks.hpp"
#include "kunita/rng.hpp"

namespace kunita {

// Lattice discretization of the cylindrical Wiener driver. The domain is an
// axis-aligned box covering the driven points padded by >= 5 sigma, with node
// spacing h (default sigma/2).
struct NoiseGrid {
  int d = 0;
  double h = 0.0;
  Eigen::VectorXd lo;              // lattice origin
  std::vector<int> counts;         // nodes per axis
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::int64_t node_count() const;
  Eigen::VectorXd node(std::int64_t j) const;  // lexicographic, axis 0 slowest
  bool contains(const Eigen::VectorXd& p) const;
};

// Domain = bounding box of `points` padded by pad_sigmas*sigma, h in units of
// sigma (h = h_over_sigma * sigma).
NoiseGrid make_noise_grid(const KernelParams& params, const LandmarkConfig& points,
                          std::uint64_t seed, std::uint64_t stream = 0,
                          double h_over_sigma = 0.5, double pad_sigmas = 5.0);

// Exact landmark-space driver: dx = factor_psd(G(x)) dW. Bound to a fixed
// number of degrees of freedom.
struct ExactCovariance {
  KernelParams params;
  int n = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

using NoiseBackend = std::variant<NoiseGrid, ExactCovariance>;

struct NoiseIncrement {
  double dt = 0.0;
  Eigen::VectorXd values;  // node-major (grid: node*d+axis) or dof (exact)
};

// Normal(0, dt) per node/axis (grid) or per landmark dof (exact), keyed by
// (seed, stream, step_index, node, axis).
NoiseIncrement sample_increment(const NoiseBackend& backend, double dt,
                                std::uint64_t step_index);

// Displacement of each point under one noise increment:
// grid: dx_i = sum_j k(|x_i - zeta_j|) dW_j h^{d/2} (so the displacement
// covariance is the Riemann-sum approximation dt h^d sum_j k k of dt g);
// exact: dx = chol(G(x)) dW.
Eigen::VectorXd drive(const NoiseBackend& backend, const KernelParams& params,
                      const LandmarkConfig& points, const NoiseIncrement& inc);

// Drive a superset of points; prefix displacements are bit-identical to
// driving the prefix alone. Grid backend only.
Eigen::VectorXd extend_points(const NoiseBackend& backend, const KernelParams& params,
                              const LandmarkConfig& superset, const NoiseIncrement& inc);

// Binary replay record: all grid increments for `steps` time steps.
// Layout (little-endian): magic "KNRZ", u32 version, u64 seed, u64 stream,
// i32 d, f64 h, d*f64 lo, d*i32 counts, i64 steps, f64 dt,
// then steps*node_count*d f64 increment values in step-major order.
void write_noise_record(std::ostream& os, const NoiseGrid& grid, double dt, int steps);
struct NoiseRecord {
  NoiseGrid grid;
  double dt = 0.0;
  std::vector<NoiseIncrement> increments;
};
NoiseRecord read_noise_record(std::istream& is);

}  // namespace kunita
