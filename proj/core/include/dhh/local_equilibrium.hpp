#pragma once

#include <cstddef>
#include <vector>

#include "dhh/ensemble_stats.hpp"
#include "dhh/errors.hpp"
#include "dhh/histories.hpp"
#include "dhh/phase_space.hpp"

namespace dhh {

/// Density weight f, mean velocity u and temperature kT sampled on the q lattice.
struct LocalEquilibriumProfile {
  Axis q;
  std::vector<double> f;
  std::vector<double> u;
  std::vector<double> kT;
  double m = 1.0;

  /// Throws DomainError on kT <= 0, f < 0 or size mismatch; warns when a relative change
  /// between neighbouring nodes reaches 0.2 (u is measured against the thermal velocity).
  void validate(Diagnostics* diag = nullptr) const;
};

/// Lagrange multipliers on a periodic B-site lattice.
struct LatticeProfile {
  std::vector<double> beta;
  std::vector<double> mu_bar;
  std::vector<double> u;
  double m = 1.0;
  double spacing = 1.0;

  std::size_t B() const { return beta.size(); }
  void validate() const;
};

/// Per-bin averages; energy_flux is the free-particle energy current N int p^3/(2 m^2) W.
struct HydroFields {
  double t = 0.0;
  std::vector<double> center;
  std::vector<double> width;
  std::vector<double> n;
  std::vector<double> g;
  std::vector<double> h;
  std::vector<double> energy_flux;
};

struct ContinuityResidual {
  double t = 0.0;
  std::vector<double> n;
  std::vector<double> g;
  std::vector<double> h;
};

struct PeakingOptions {
  std::size_t N = 6;
  double t1 = 0.0;
  double t2 = 0.3;
  /// Histories count as on-trajectory when every bin at both times lies within this many
  /// occupation units of the mean field.
  double tolerance = 1.0;
  double dephasing_rate = 0.0;
};

struct PeakingReport {
  std::vector<double> mean_t1;
  std::vector<double> mean_t2;
  double epsilon = 0.0;
  double max_offdiagonal = 0.0;
  double fraction_within_tolerance = 0.0;
  /// Probability of the single history nearest the mean trajectory.
  double fraction_on_quantized_trajectory = 0.0;
  double probability_sum = 0.0;
  BoundReport bound;
  DecoherenceMatrix D;
};

/// W1(p,q) proportional to f(q) exp(-(p - m u(q))^2 / (2 m kT(q))), normalized to unit mass.
WignerGrid build_w1(const LocalEquilibriumProfile& profile, const Axis& p_axis, Diagnostics* diag = nullptr);

/// rho1 proportional to exp(-G), G = (beta T + T beta)/2 - beta mu_bar - ((beta u) p + p (beta u))/2.
CMatrix one_particle_gibbs(const LatticeProfile& profile);

HydroFields hydro_averages(const WignerGrid& w1, std::size_t N, const SmearingWindow& window, double m);

/// W(q, p, t) = W(q - p t/m, p, 0) by cubic interpolation along q. Periodic mode uses period
/// n_q dq; otherwise mass leaving the grid raises ResolutionError.
WignerGrid evolve_free(const WignerGrid& w1, double t, double m, bool periodic = false);

/// Residuals of the discrete continuity equations on bin densities (field / bin width):
/// d_t n + (1/m) d_x g, d_t g + 2 d_x h, d_t h + d_x energy_flux. Second-order differences,
/// centered in the interior. Frames must share bins and be equally spaced in time.
std::vector<ContinuityResidual> continuity_residual(const std::vector<HydroFields>& series, double m);

PeakingReport local_equilibrium_peaking(const LatticeProfile& profile, const PeakingOptions& options,
                                        Diagnostics* diag = nullptr);

}  // namespace dhh
