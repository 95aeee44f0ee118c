#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dhh/errors.hpp"

namespace dhh {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using StateVector = CVector;
using DensityOperator = CMatrix;

/// Distinguishable N-particle space (C^B)^{(x)N}. Basis index c has particle k in bin
/// digit(c, k), particle 0 being the most significant digit.
class ToyHilbert {
 public:
  static constexpr std::size_t kDefaultCap = std::size_t{1} << 16;

  ToyHilbert(std::size_t B, std::size_t N, std::size_t cap = kDefaultCap);

  std::size_t B() const { return B_; }
  std::size_t N() const { return N_; }
  std::size_t dim() const { return dim_; }
  std::size_t digit(std::size_t c, std::size_t k) const;
  std::vector<int> occupation(std::size_t c) const;

 private:
  std::size_t B_, N_, dim_;
};

/// Hermitian operator held in spectral form A = F diag(lambda) F^dagger, where F is the
/// identity (position/product basis) when frame is null.
class Observable {
 public:
  static Observable diagonal(Eigen::VectorXd values);
  static Observable from_hermitian(const CMatrix& a);
  /// Sum over particles of the one-particle Hermitian matrix a (B x B).
  static Observable one_body(const ToyHilbert& h, const CMatrix& a);

  std::size_t dim() const { return static_cast<std::size_t>(values_.size()); }
  const Eigen::VectorXd& eigenvalues() const { return values_; }
  const std::shared_ptr<const CMatrix>& frame() const { return frame_; }
  CMatrix dense() const;
  double expectation(const CMatrix& rho) const;
  double variance(const CMatrix& rho) const;

 private:
  std::shared_ptr<const CMatrix> frame_;
  Eigen::VectorXd values_;
};

/// Real function of an observable: P = F diag(w) F^dagger, or an explicit dense matrix
/// (used for products of approximately commuting families).
struct Operator {
  std::shared_ptr<const CMatrix> frame;
  Eigen::VectorXd weights;
  std::optional<CMatrix> dense_matrix;

  std::size_t dim() const;
  bool position_diagonal() const { return !frame && !dense_matrix; }
  CMatrix dense() const;
  CVector apply(const CVector& v) const;
};

struct LabeledProjector {
  std::string label;
  Operator op;
};

using ProjectorFamily = std::vector<LabeledProjector>;

/// Projections applied at one time; several families are combined by products and must
/// commute to tolerance.
struct HistorySlot {
  double t = 0.0;
  std::vector<ProjectorFamily> families;
};

/// Generator of the unitary evolution plus optional per-particle dephasing.
struct Evolution {
  /// Dense Hamiltonian on the full space; used when set.
  std::optional<CMatrix> hamiltonian;
  /// Otherwise the sum over particles of this one-particle Hamiltonian on `space`.
  std::optional<CMatrix> one_body_hamiltonian;
  std::optional<ToyHilbert> space;
  double dephasing_rate = 0.0;
  /// Lie-Trotter substep when dephasing is on.
  double dephasing_dt = 0.02;
  /// Bin coordinates entering the dephasing distance; defaults to 0..B-1.
  std::vector<double> bin_positions;

  CMatrix propagator(double dt, std::size_t dim) const;
};

struct HistorySpec {
  std::vector<HistorySlot> slots;
  Evolution evolution;
  /// Sup-norm commutator tolerance for multi-family slots, relative to the norm product.
  double commutation_tolerance = 1e-6;
};

struct DecoherenceMatrix {
  std::vector<std::string> labels;
  /// Per history, the chosen member index in each slot.
  std::vector<std::vector<std::size_t>> paths;
  CMatrix D;

  Eigen::VectorXd probabilities() const { return D.diagonal().real(); }
};

struct BoundReport {
  bool holds = true;
  double max_excess = 0.0;  // max of |D|^2 - p p'
  std::size_t pairs_checked = 0;
  std::size_t worst_a = 0, worst_b = 0;
};

/// Limits for the density-operator path, which stores dense dim x dim matrices.
inline constexpr std::size_t kDenseCap = 2048;

StateVector product_state(const CVector& psi, std::size_t N, std::size_t cap = ToyHilbert::kDefaultCap);
StateVector superposition_state(const CVector& psi, const CVector& chi, std::size_t N, std::complex<double> w_psi,
                                std::complex<double> w_chi, std::size_t cap = ToyHilbert::kDefaultCap);
DensityOperator product_density(const CMatrix& rho1, std::size_t N, std::size_t cap = kDenseCap);
DensityOperator pure_density(const StateVector& psi);

/// One-particle bin projector |b><b| summed over particles.
Observable number_density_operator(const ToyHilbert& h, std::size_t b);
/// Sum over particles of (Pi_b p + p Pi_b)/2 with the supplied one-particle momentum matrix.
Observable momentum_density_operator(const ToyHilbert& h, std::size_t b, const CMatrix& p1);
/// Sum over particles of (Pi_b T + T Pi_b)/2 with T = p1^2/(2m).
Observable energy_density_operator(const ToyHilbert& h, std::size_t b, const CMatrix& p1, double m);
/// Spectral derivative on a periodic B-site lattice with unit spacing; the Nyquist mode is
/// zeroed so the matrix is Hermitian with a symmetric spectrum.
CMatrix lattice_momentum(std::size_t B, double spacing = 1.0);
/// Free kinetic energy with k^2/(2m) on every Fourier mode, Nyquist included.
CMatrix lattice_kinetic(std::size_t B, double m, double spacing = 1.0);

/// (2 pi sigma^2)^{-1/2} exp(-(A - center)^2 / (2 sigma^2)).
Operator gaussian_quasi_projector(const Observable& A, double center, double sigma);
/// Spectral projector onto eigenvalues in [lo, hi]; an empty window yields zero with a warning.
Operator window_projector(const Observable& A, double lo, double hi, Diagnostics* diag = nullptr);
/// Simultaneous eigenspace of all n(b) with eigenvalue target[b] (sum must equal N).
Operator occupation_projector(const ToyHilbert& h, const std::vector<int>& target);
/// prod_b (2 pi sigma^2)^{-1/2} exp(-(n(b) - center[b])^2 / (2 sigma^2)).
Operator gaussian_occupation_projector(const ToyHilbert& h, const std::vector<double>& center, double sigma);
/// F(A) with F(a) = Phi((center + half_width - a)/sigma) - Phi((center - half_width - a)/sigma).
Operator smooth_window(const Observable& A, double center, double half_width, double sigma);

/// All compositions of N into B bins, each as an occupation projector.
ProjectorFamily occupation_family(const ToyHilbert& h);
std::vector<std::vector<int>> compositions(std::size_t N, std::size_t B);
std::string occupation_label(const std::vector<int>& n);

/// D(a, a') = Tr(C_a rho C_a'^dagger) with C_a = P_n(t_n) ... P_1(t_1), evaluated in the
/// Schroedinger picture; dephasing is interleaved with the unitary steps (Lie-Trotter).
DecoherenceMatrix decoherence_functional(const DensityOperator& rho, const HistorySpec& history,
                                         Diagnostics* diag = nullptr);
/// Pure-state path using branch vectors; dephasing is not available here.
DecoherenceMatrix decoherence_functional(const StateVector& psi, const HistorySpec& history,
                                         Diagnostics* diag = nullptr);
/// Diagonal only, pure-state path.
std::vector<double> history_probabilities(const StateVector& psi, const HistorySpec& history,
                                          Diagnostics* diag = nullptr);

/// Relative probability below which a history counts as impossible in epsilon.
inline constexpr double kProbabilityFloor = 1e-12;

/// max over a != a' of |D|/sqrt(p p'); histories with p <= kProbabilityFloor * sum(p) are
/// skipped with a note.
double consistency_epsilon(const DecoherenceMatrix& D, Diagnostics* diag = nullptr);
BoundReport check_dh_bound(const DecoherenceMatrix& D, double slack = 1e-10);

/// Per-particle position-basis dephasing: rho(c, c') *= exp(-rate dt sum_k (x_{c_k} - x_{c'_k})^2).
DensityOperator apply_dephasing(const DensityOperator& rho, const ToyHilbert& h, double rate, double dt,
                                const std::vector<double>& bin_positions = {});

double single_time_prob_exact(const CMatrix& rho, const Observable& A, double center, double sigma);
double single_time_prob_asymptotic(const CMatrix& rho, const Observable& A, double center, double sigma);

/// Probability density of the Gaussian-projector chain with centers at the given times.
double multi_time_prob(const CMatrix& rho, const Observable& A, const std::vector<double>& times,
                       const std::vector<double>& centers, double sigma, const CMatrix& H,
                       Diagnostics* diag = nullptr);

/// Expectation values <A(t_k)> and standard deviations in the Heisenberg picture.
struct Trajectory {
  std::vector<double> mean;
  std::vector<double> spread;
};
Trajectory heisenberg_trajectory(const CMatrix& rho, const Observable& A, const std::vector<double>& times,
                                 const CMatrix& H);

struct ArgmaxResult {
  std::vector<double> centers;
  double probability = 0.0;
  double spacing = 0.0;
  Trajectory trajectory;
};
/// Exhaustive scan over centers <A(t_k)> + m sigma/10, |m| <= 40.
ArgmaxResult argmax_scan(const CMatrix& rho, const Observable& A, const std::vector<double>& times, double sigma,
                         const CMatrix& H, Diagnostics* diag = nullptr);

struct ComplementPair {
  double p = 0.0;
  double p_bar = 0.0;
  std::complex<double> D_off{0.0, 0.0};
  bool bound_holds = true;
};
/// Tube history of half-width tube_width around <A(t_k)> (edges smeared by sigma) and its complement.
ComplementPair complement_pair_consistency(const CMatrix& rho, const Observable& A, const std::vector<double>& times,
                                           double sigma, double tube_width, const CMatrix& H);

CMatrix random_hermitian(std::size_t d, std::mt19937_64& rng);
CVector random_state(std::size_t d, std::mt19937_64& rng);

}  // namespace dhh
