#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kunita/kernels.hpp"
#include "kunita/landmarks.hpp"
#include "kunita/noise.hpp"

namespace kunita {

enum class SdeConvention { Ito, Stratonovich };

// dx = (Kunita drift is zero) + noise; Ito by Euler-Maruyama,
// Stratonovich by Euler-Heun.
struct KunitaLandmark {
  KernelParams params;
  SdeConvention convention = SdeConvention::Ito;
};

// dx_i = -1/2 sum K^{lm} Gamma^i_{lm} dt + chol(K(x)) dW.
struct RiemannianBM {
  KernelParams params;
};

// Hamiltonian dynamics plus Stratonovich noise fields
// sigma_{j,a}(x) = k(|x - zeta_j|) h^{d/2} e_a on the grid nodes.
struct StochasticEPDiff {
  KernelParams params;
  NoiseGrid grid;
};

// Noise enters only the momentum equation: dp_i += noise_scale dW_i.
struct InnerMomentumNoise {
  KernelParams params;
  double noise_scale = 1.0;
};

// dp gains -lambda grad_p H dt dissipation and sigma_noise dW_i.
struct Langevin {
  KernelParams params;
  double lambda = 0.0;
  double sigma_noise = 0.0;
};

using ProcessSpec =
    std::variant<KunitaLandmark, RiemannianBM, StochasticEPDiff, InnerMomentumNoise, Langevin>;

struct PathSample {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> positions;
  std::vector<Eigen::VectorXd> momenta;  // empty for position-only variants
  std::string backend;                   // descriptor for output metadata
  std::string convention;                // "ito" | "stratonovich"
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  bool collision = false;                // halted early with a partial path
};

// Integrate the selected SDE from x0 (and p0 where the variant carries
// momentum). Collision (min pairwise distance < 1e-8 sigma) halts with the
// partial path flagged rather than throwing: collisions are data.
PathSample simulate(const ProcessSpec& spec, const LandmarkConfig& x0,
                    const std::optional<Momentum>& p0, double T, int steps,
                    const NoiseBackend& backend, std::uint64_t stream);

// Same integration driven by externally supplied increments (replayed records,
// or coupled refinements where coarse increments are sums of fine ones).
PathSample simulate_with_increments(const ProcessSpec& spec, const LandmarkConfig& x0,
                                    const std::optional<Momentum>& p0, double T,
                                    const NoiseBackend& backend,
                                    const std::vector<NoiseIncrement>& increments);

// Christoffel symbols of the landmark metric K(x)^{-1}; gamma[i](l,m) is
// Gamma^i_{lm} over flat coordinate indices. Requires a kernel with two
// radial derivatives (Matern needs nu > 1).
std::vector<Eigen::MatrixXd> christoffel(const KernelParams& params,
                                         const LandmarkConfig& x);

// Advect a dense point set by one shared grid-quadrature flow (Ito).
// Any subset's trajectories bit-match a run restricted to that subset.
PathSample warp_points(const KernelParams& params, const LandmarkConfig& dense_points,
                       double T, int steps, const NoiseGrid& grid);

}  // namespace kunita
