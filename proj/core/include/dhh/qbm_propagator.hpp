#pragma once

#include <vector>

#include "dhh/errors.hpp"
#include "dhh/phase_space.hpp"

namespace dhh {

/// Mass, damping rate and thermal energy; all strictly positive.
struct QbmParams {
  double M = 1.0;
  double gamma = 1.0;
  double kT = 1.0;

  void validate() const;
};

/// Exponent coefficients of the Gaussian kernel exp(-alpha dp^2 - beta dq^2 - epsilon dp dq).
struct PropagatorCoefficients {
  double alpha = 0.0;
  double beta = 0.0;
  double epsilon = 0.0;
  double t = 0.0;
};

/// Covariance of the point-source kernel.
struct KernelCovariance {
  double qq = 0.0;
  double qp = 0.0;
  double pp = 0.0;
};

struct ClassicalPoint {
  double q = 0.0;
  double p = 0.0;
};

struct DiffusionFit {
  double D_fit = 0.0;
  double D_theory = 0.0;
  double relative_error = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
};

struct ConstitutiveResidual {
  Axis q;
  std::vector<double> current;        // integral of p W over p
  std::vector<double> gradient_term;  // (kT/2gamma) df/dq
  std::vector<double> residual;       // current + gradient_term
  double relative_sup = 0.0;          // sup|residual| / max(sup|current|, sup|gradient_term|)
};

/// Kernel used by propagate_analytic.
enum class KernelMode {
  exact,     // closed-form moments of the Kramers equation, valid at every t >= 0
  longtime,  // alpha, beta, epsilon of the asymptotic regime gamma t >= 3
};

enum class QBoundary { zero_flux, periodic };

struct FokkerPlanckOptions {
  /// Periodic q uses period n_q * dq (node n_q coincides with node 0).
  QBoundary q_boundary = QBoundary::zero_flux;
};

ClassicalPoint classical_path(double q0, double p0, double t, const QbmParams& params);

/// Asymptotic coefficients alpha = 1/(2 M kT), beta = M gamma/(2 kT t), epsilon = -1/(2 kT t).
/// gamma t < 3 is a DomainError unless diag is given, in which case a warning is recorded.
PropagatorCoefficients longtime_coefficients(const QbmParams& params, double t, Diagnostics* diag = nullptr);

/// Exact point-source covariance at time t >= 0.
KernelCovariance kernel_covariance(const QbmParams& params, double t);
/// Covariance implied by a coefficient set (requires 4 alpha beta > epsilon^2).
KernelCovariance covariance_from_coefficients(const PropagatorCoefficients& c);
/// Coefficients implied by a covariance (inverse of covariance_from_coefficients).
PropagatorCoefficients coefficients_from_covariance(const KernelCovariance& s, double t);

/// Convolves w0 with the Gaussian kernel centered on the classical path and renormalizes.
/// Throws ResolutionError when the kernel is narrower than a grid spacing or the result
/// loses mass through the grid edges.
WignerGrid propagate_analytic(const WignerGrid& w0, double t, const QbmParams& params,
                              KernelMode mode = KernelMode::exact, Diagnostics* diag = nullptr);

/// dt <= 0.4 min(dq M / p_max, dp^2 / (2 M gamma kT), 1/(4 gamma)).
double fokker_planck_max_dt(const WignerGrid& w, const QbmParams& params);

/// One Strang step: half q-advection, full momentum sector, half q-advection.
WignerGrid step_fokker_planck(const WignerGrid& w, double dt, const QbmParams& params,
                              const FokkerPlanckOptions& opts = {});

/// Integrates to time t using ceil(t/dt) equal steps no longer than dt.
WignerGrid evolve_fokker_planck(const WignerGrid& w0, double t, double dt, const QbmParams& params,
                                const FokkerPlanckOptions& opts = {}, Diagnostics* diag = nullptr);

/// Snapshots at each entry of `times` (non-decreasing, >= 0).
std::vector<WignerGrid> evolve_fokker_planck_series(const WignerGrid& w0, const std::vector<double>& times,
                                                    double dt, const QbmParams& params,
                                                    const FokkerPlanckOptions& opts = {},
                                                    Diagnostics* diag = nullptr);

/// Right-hand side of the Caldeira-Leggett equation with centered differences and
/// zero kernel outside the lattice.
Eigen::MatrixXcd master_generator(const DensityMatrix& rho, const QbmParams& params);
double master_equation_max_dt(const Axis& x, const QbmParams& params);
/// One RK4 step followed by Hermitian symmetrization.
DensityMatrix step_master_equation(const DensityMatrix& rho, double dt, const QbmParams& params);
DensityMatrix evolve_master_equation(const DensityMatrix& rho0, double t, double dt, const QbmParams& params);

/// D = kT / (2 M gamma).
double diffusion_coefficient(const QbmParams& params);

/// Least-squares slope of var_q(t) equals 2 D_fit.
DiffusionFit fit_diffusion(const std::vector<double>& times, const std::vector<double>& var_q,
                           const QbmParams& params);
DiffusionFit fit_diffusion(const std::vector<double>& times, const std::vector<Marginal>& marginals,
                           const QbmParams& params);

ConstitutiveResidual constitutive_check(const WignerGrid& w, const QbmParams& params);

}  // namespace dhh
