#pragma once

#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dhh/errors.hpp"

namespace dhh {

/// Uniform node lattice x_i = min + i*step, i = 0..n-1, with min < max and n >= 2.
class Axis {
 public:
  Axis() = default;
  Axis(double min, double max, std::size_t n);

  double min() const { return min_; }
  double max() const { return max_; }
  std::size_t size() const { return n_; }
  double step() const { return step_; }
  double operator[](std::size_t i) const { return min_ + static_cast<double>(i) * step_; }
  double length() const { return max_ - min_; }

  /// Trapezoid weight of node i.
  double weight(std::size_t i) const;
  std::vector<double> nodes() const;

  /// Exact integrals over [a, b] of each node's piecewise-linear hat function.
  /// Summing value_i * result_i integrates the linear interpolant over [a, b].
  std::vector<double> hat_integrals(double a, double b) const;

  /// Fractional node coordinate of x (unclamped).
  double coordinate(double x) const { return (x - min_) / step_; }

  bool operator==(const Axis& o) const { return min_ == o.min_ && max_ == o.max_ && n_ == o.n_; }

 private:
  double min_ = 0.0;
  double max_ = 1.0;
  std::size_t n_ = 2;
  double step_ = 1.0;
};

/// Real quasi-probability density sampled on a (q, p) node lattice, stored row-major in q.
class WignerGrid {
 public:
  static constexpr std::size_t kMinNodes = 8;

  WignerGrid(Axis q, Axis p, std::vector<double> values);
  static WignerGrid zeros(Axis q, Axis p);

  template <class F>
  static WignerGrid sample(const Axis& q, const Axis& p, F&& f) {
    std::vector<double> v(q.size() * p.size());
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t j = 0; j < p.size(); ++j) v[i * p.size() + j] = f(q[i], p[j]);
    return WignerGrid(q, p, std::move(v));
  }

  const Axis& q() const { return q_; }
  const Axis& p() const { return p_; }
  std::size_t n_q() const { return q_.size(); }
  std::size_t n_p() const { return p_.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * p_.size() + j]; }
  const std::vector<double>& values() const { return values_; }

  /// Trapezoid double integral.
  double integral() const;
  double integral_abs() const;
  /// Integral of the bilinear interpolant over [q_lo,q_hi] x [p_lo,p_hi].
  double cell_integral(double q_lo, double q_hi, double p_lo, double p_hi) const;

 private:
  Axis q_;
  Axis p_;
  std::vector<double> values_;
};

enum class AxisKind { position, momentum };

/// One-dimensional density sampled on an axis.
struct Marginal {
  AxisKind kind = AxisKind::position;
  Axis axis;
  std::vector<double> samples;

  double spacing() const { return axis.step(); }
  double integral() const;
  double mean() const;
  double variance() const;
  /// Mass of the linear interpolant inside [a, b].
  double mass_between(double a, double b) const;
  /// Linear interpolation; zero outside the axis.
  double value_at(double x) const;
};

struct PhaseSpaceMoments {
  double mean_q = 0.0;
  double mean_p = 0.0;
  double var_q = 0.0;
  double var_p = 0.0;
  double cov_qp = 0.0;
};

/// Position-basis kernel rho(x_k, x_l) on a uniform lattice.
class DensityMatrix {
 public:
  DensityMatrix(Axis x, Eigen::MatrixXcd kernel);

  /// Pure state |psi><psi| with psi rescaled so that sum |psi|^2 dx = 1.
  static DensityMatrix from_wavefunction(const Axis& x, const Eigen::VectorXcd& psi);

  const Axis& x() const { return x_; }
  std::size_t n_x() const { return x_.size(); }
  const Eigen::MatrixXcd& kernel() const { return kernel_; }

  /// Sum of the diagonal times the lattice spacing.
  double trace() const;
  /// max |rho(x,y) - conj(rho(y,x))|.
  double hermiticity_error() const;

 private:
  Axis x_;
  Eigen::MatrixXcd kernel_;
};

WignerGrid normalize(const WignerGrid& w);
Marginal position_marginal(const WignerGrid& w);
Marginal momentum_marginal(const WignerGrid& w);
PhaseSpaceMoments moments(const WignerGrid& w);

/// Normalized bivariate Gaussian sampled on the lattice.
WignerGrid gaussian_wigner(const Axis& q, const Axis& p, double mean_q, double mean_p, double var_q,
                           double var_p, double cov_qp = 0.0);

/// Trapezoid integral of |a - b|; the grids must share axes.
double l1_distance(const WignerGrid& a, const WignerGrid& b);
/// max |a - b| over nodes; the marginals must share an axis.
double sup_distance(const Marginal& a, const Marginal& b);

/// (q, p) axes of the Wigner lattice conjugate to the x lattice: q on the 2n_x-1 midpoints,
/// p_j = (j - n_p/2) * pi / (n_p dx) for j = 0..n_p-1. n_p must be even.
std::pair<Axis, Axis> conjugate_wigner_axes(const Axis& x, std::size_t n_p);

/// rho(x,y) = sum_j dp e^{i p_j (x-y)} W(p_j, (x+y)/2). Requires an odd q node count; the x
/// lattice takes every other q node. Result is Hermitian with unit trace.
DensityMatrix wigner_to_density(const WignerGrid& w, Diagnostics* diag = nullptr);

/// Inverse map onto conjugate_wigner_axes(rho.x(), n_p); n_p = 0 picks the smallest even
/// value >= n_x. Relative separations are kept inside the n_p-sample window the p lattice
/// resolves.
WignerGrid density_to_wigner(const DensityMatrix& rho, std::size_t n_p = 0);

}  // namespace dhh
