#include "kunita/kernels.hpp"

#include <cmath>
#include <numbers>

namespace kunita {

void KernelParams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ParameterError("kernel amplitude alpha must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ParameterError("kernel length-scale sigma must be positive");
  if (dim < 1 || dim > 3)
    throw ParameterError("ambient dimension must be 1, 2 or 3");
  if (family == KernelFamily::Matern) {
    // c > d/2 so nu > 0; this is stronger than the c > d/4 needed for var(Q)
    // but required for the kernel itself to be defined.
    if (!(c > 0.5 * dim))
      throw ParameterError("Matern order must satisfy c > d/2");
  }
}

namespace {

// z^mu K_mu(z) with its finite z->0 limit 2^{mu-1} Gamma(mu).
double scaled_bessel(double mu, double z) {
  if (z < 1e-12) return std::pow(2.0, mu - 1.0) * std::tgamma(mu);
  if (z > 705.0) return 0.0;  // K_mu underflows
  return std::pow(z, mu) * std::cyl_bessel_k(mu, z);
}

}  // namespace

double eval_k(const KernelParams& params, double r) {
  params.validate();
  if (r < 0.0 || !std::isfinite(r)) throw ParameterError("radius must be finite and nonnegative");
  if (params.family == KernelFamily::SquaredExponential) {
    const double z = r / params.sigma;
    return params.alpha * std::exp(-0.5 * z * z);
  }
  const double nu = params.nu();
  const double norm = std::pow(2.0, 1.0 - nu) / std::tgamma(nu);
  return params.alpha * norm * scaled_bessel(nu, r / params.sigma);
}

double eval_k_deriv(const KernelParams& params, double r) {
  params.validate();
  if (r < 0.0 || !std::isfinite(r)) throw ParameterError("radius must be finite and nonnegative");
  if (params.family == KernelFamily::SquaredExponential) {
    const double s2 = params.sigma * params.sigma;
    const double z = r / params.sigma;
    return -(r / s2) * params.alpha * std::exp(-0.5 * z * z);
  }
  // d/dz [z^nu K_nu(z)] = -z^nu K_{nu-1}(z), with K_{-mu} = K_mu.
  const double nu = params.nu();
  if (r < 1e-300) return 0.0;
  const double z = r / params.sigma;
  if (z > 705.0) return 0.0;
  const double norm = std::pow(2.0, 1.0 - nu) / std::tgamma(nu);
  const double knm1 = std::cyl_bessel_k(std::fabs(nu - 1.0), z);
  return -params.alpha * norm * std::pow(z, nu) * knm1 / params.sigma;
}

double eval_g(const KernelParams& params, double r) {
  params.validate();
  if (r < 0.0 || !std::isfinite(r)) throw ParameterError("radius must be finite and nonnegative");
  const double a2 = params.alpha * params.alpha;
  const double pid2 = std::pow(std::numbers::pi, 0.5 * params.dim);
  const double sd = std::pow(params.sigma, params.dim);
  if (params.family == KernelFamily::SquaredExponential) {
    const double z = r / params.sigma;
    return a2 * pid2 * sd * std::exp(-0.25 * z * z);
  }
  const double c = params.c, d = params.dim, nu = params.nu();
  const double mu = 2.0 * c - 0.5 * d;
  const double gn = std::tgamma(nu);
  const double const_part = a2 * std::pow(2.0, 1.5 * d - 2.0 * c + 1.0) * pid2 * sd *
                            std::tgamma(c) * std::tgamma(c) / (gn * gn * std::tgamma(2.0 * c));
  return const_part * scaled_bessel(mu, r / params.sigma);
}

double variance(const KernelParams& params) { return eval_g(params, 0.0); }

namespace {

Eigen::MatrixXd block_kernel_matrix(const KernelParams& params, const LandmarkConfig& x,
                                    double (*f)(const KernelParams&, double)) {
  params.validate();
  x.validate();
  if (x.d != params.dim)
    throw ParameterError("landmark dimension does not match kernel dimension");
  const int n = x.n, d = x.d;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n * d, n * d);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double v = f(params, (x.point(i) - x.point(j)).norm());
      for (int a = 0; a < d; ++a) {
        m(i * d + a, j * d + a) = v;
        m(j * d + a, i * d + a) = v;
      }
    }
  }
  return m;
}

}  // namespace

Eigen::MatrixXd kernel_matrix_k(const KernelParams& params, const LandmarkConfig& x) {
  return block_kernel_matrix(params, x, &eval_k);
}

Eigen::MatrixXd kernel_matrix_g(const KernelParams& params, const LandmarkConfig& x) {
  return block_kernel_matrix(params, x, &eval_g);
}

Eigen::MatrixXd factor_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw FactorizationError("matrix is not square");
  const auto n = m.rows();
  if (n == 0) return m;
  if (m.norm() == 0.0) return Eigen::MatrixXd::Zero(n, n);
  const double scale = std::max(m.trace() / static_cast<double>(n), 1e-300);
  double jitter = 1e-10 * scale;
  const double max_jitter = 1e-6 * scale;
  // First attempt without jitter, then escalate.
  for (double j = 0.0; ; j = (j == 0.0 ? jitter : j * 10.0)) {
    Eigen::MatrixXd shifted = m;
    shifted.diagonal().array() += j;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd l = llt.matrixL();
      const double resid = (l * l.transpose() - m).norm();
      if (resid <= 1e-8 * std::max(m.norm(), 1e-300)) return l;
    }
    if (j >= max_jitter)
      throw FactorizationError("matrix is indefinite beyond the jitter threshold");
  }
}

}  // namespace kunita
