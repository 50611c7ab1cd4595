#pragma once

#include <Eigen/Dense>

#include "kunita/errors.hpp"
#include "kunita/landmarks.hpp"

namespace kunita {

enum class KernelFamily { SquaredExponential, Matern };

// Radial flow kernel k and its square g. For Matern, nu = c - d/2 and the
// kernel is normalized so k(0) = alpha for both families.
struct KernelParams {
  KernelFamily family = KernelFamily::SquaredExponential;
  double alpha = 1.0;   // amplitude
  double sigma = 1.0;   // length-scale
  double c = 0.0;       // Matern operator order (unused for SE)
  int dim = 2;          // ambient dimension

  double nu() const { return c - 0.5 * dim; }
  void validate() const;
};

// k(r): SE = alpha exp(-r^2/(2 sigma^2));
// Matern = alpha 2^{1-nu}/Gamma(nu) (r/sigma)^nu K_nu(r/sigma).
double eval_k(const KernelParams& params, double r);

// Radial derivative k'(r).
double eval_k_deriv(const KernelParams& params, double r);

// g(r) = int k(x,zeta) k(zeta,y) dzeta with r = |x-y|, in closed form.
double eval_g(const KernelParams& params, double r);

// var(Q) = g(0): the representation-free variance of the flow.
double variance(const KernelParams& params);

// Block matrices [k(|x_i-x_j|) I_d] and [g(|x_i-x_j|) I_d], landmark-major.
Eigen::MatrixXd kernel_matrix_k(const KernelParams& params, const LandmarkConfig& x);
Eigen::MatrixXd kernel_matrix_g(const KernelParams& params, const LandmarkConfig& x);

// Lower Cholesky factor of a symmetric PSD matrix, with a relative diagonal
// jitter of 1e-10*(trace/n) escalated by x10 up to 1e-6 before failing.
Eigen::MatrixXd factor_psd(const Eigen::MatrixXd& m);

}  // namespace kunita
