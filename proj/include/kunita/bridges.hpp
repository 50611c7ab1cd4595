#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <variant>

#include "kunita/kernels.hpp"
#include "kunita/landmarks.hpp"
#include "kunita/processes.hpp"

namespace kunita {

// Linear auxiliary process: zero drift, constant SPD diffusion matrix, so
// p~_{t->T}(x, .) = N(x, (T-t) a~).
struct Auxiliary {
  Eigen::MatrixXd a_tilde;
};

// a~ frozen at the observation: kernel_matrix_g(params, v) (+ factorization
// jitter on use).
Auxiliary aux_from_observation(const KernelParams& params, const LandmarkConfig& v);

// Brownian score -(x-y)/(T-t).
Eigen::VectorXd score_delyon_hu(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                double t, double T);

// grad log p~ = ((T-t) a~)^{-1} (y - x).
Eigen::VectorXd guided_score(const Auxiliary& aux, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y, double t, double T);

enum class BridgeMethod { DelyonHu, Guided };

struct BridgeSpec {
  LandmarkConfig target;            // y
  double horizon = 1.0;             // T
  BridgeMethod method = BridgeMethod::Guided;
  int steps = 100;
  bool clamp_endpoint = false;      // Delyon-Hu only: set X_T = y
  double obs_noise = 0.0;           // epsilon: widen (T-t)a~ by eps^2 I
  Eigen::MatrixXd widening;         // optional matrix widening; overrides obs_noise
  Eigen::MatrixXd aux_diffusion;    // optional a~ override; default freezes at target
};

// Diffusion models the bridge can run on: the Kunita landmark diffusion
// a(x) = G(x), or a constant matrix (test processes, Brownian oracles).
struct KunitaDiffusion {
  KernelParams params;
};
struct ConstantDiffusion {
  Eigen::MatrixXd a;  // SPD
};
using BridgeDynamics = std::variant<KunitaDiffusion, ConstantDiffusion>;

struct WeightedPath {
  PathSample path;
  double log_weight = 0.0;
};

// Euler-Maruyama with the guiding drift a(x) r~ (guided) or -(x-y)/(T-t)
// (Delyon-Hu), r~ = ((T-t) a~ + eps^2 I)^{-1} (y - x). Guided runs accumulate
// log_weight = sum_s -1/2 tr[(a(x_s) - a~)(H~(s) - r~ r~^T)] dt with
// H~ = ((T-s) a~ + eps^2 I)^{-1}. b = b~ = 0 throughout.
WeightedPath simulate_bridge(const BridgeSpec& spec, const BridgeDynamics& dynamics,
                             const LandmarkConfig& x0, std::uint64_t seed,
                             std::uint64_t stream);

// As above but with externally supplied standard-normal innovations
// (steps x nd, row s used at step s), for pCN updates and refinement tests.
WeightedPath simulate_bridge_with_innovations(const BridgeSpec& spec,
                                              const BridgeDynamics& dynamics,
                                              const LandmarkConfig& x0,
                                              const Eigen::MatrixXd& innovations);

}  // namespace kunita
