#include "dhh/phase_space.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dhh {

namespace {

using cd = std::complex<double>;

void require_same_axes(const WignerGrid& a, const WignerGrid& b) {
  if (!(a.q() == b.q()) || !(a.p() == b.p())) throw GridError("grids do not share axes");
}

double trapezoid(const Axis& ax, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) s += ax.weight(i) * f[i];
  return s;
}

}  // namespace

Axis::Axis(double min, double max, std::size_t n) : min_(min), max_(max), n_(n) {
  if (!(std::isfinite(min) && std::isfinite(max)) || !(min < max))
    throw GridError("axis extents must be finite and strictly ordered");
  if (n < 2) throw GridError("axis needs at least 2 nodes");
  step_ = (max - min) / static_cast<double>(n - 1);
}

double Axis::weight(std::size_t i) const {
  return (i == 0 || i + 1 == n_) ? 0.5 * step_ : step_;
}

std::vector<double> Axis::nodes() const {
  std::vector<double> x(n_);
  for (std::size_t i = 0; i < n_; ++i) x[i] = (*this)[i];
  return x;
}

std::vector<double> Axis::hat_integrals(double a, double b) const {
  std::vector<double> w(n_, 0.0);
  a = std::max(a, min_);
  b = std::min(b, max_);
  if (!(a < b)) return w;
  const double h = step_;
  auto k0 = static_cast<std::size_t>(std::clamp(std::floor((a - min_) / h), 0.0, double(n_ - 2)));
  for (std::size_t k = k0; k + 1 < n_; ++k) {
    const double xk = (*this)[k];
    if (xk >= b) break;
    const double us = std::max(0.0, (a - xk) / h);
    const double ue = std::min(1.0, (b - xk) / h);
    if (ue <= us) continue;
    const double d1 = ue - us;
    const double d2 = 0.5 * (ue * ue - us * us);
    w[k] += h * (d1 - d2);
    w[k + 1] += h * d2;
  }
  return w;
}

WignerGrid::WignerGrid(Axis q, Axis p, std::vector<double> values)
    : q_(q), p_(p), values_(std::move(values)) {
  if (q_.size() < kMinNodes || p_.size() < kMinNodes)
    throw GridError("Wigner grid needs at least 8 nodes per axis");
  if (values_.size() != q_.size() * p_.size())
    throw GridError("Wigner grid value count does not match its shape");
}

WignerGrid WignerGrid::zeros(Axis q, Axis p) {
  return WignerGrid(q, p, std::vector<double>(q.size() * p.size(), 0.0));
}

double WignerGrid::integral() const {
  double s = 0.0;
  for (std::size_t i = 0; i < n_q(); ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n_p(); ++j) r += p_.weight(j) * (*this)(i, j);
    s += q_.weight(i) * r;
  }
  return s;
}

double WignerGrid::integral_abs() const {
  double s = 0.0;
  for (std::size_t i = 0; i < n_q(); ++i)
    for (std::size_t j = 0; j < n_p(); ++j) s += q_.weight(i) * p_.weight(j) * std::abs((*this)(i, j));
  return s;
}

double WignerGrid::cell_integral(double q_lo, double q_hi, double p_lo, double p_hi) const {
  const auto wq = q_.hat_integrals(q_lo, q_hi);
  const auto wp = p_.hat_integrals(p_lo, p_hi);
  double s = 0.0;
  for (std::size_t i = 0; i < n_q(); ++i) {
    if (wq[i] == 0.0) continue;
    double r = 0.0;
    for (std::size_t j = 0; j < n_p(); ++j) r += wp[j] * (*this)(i, j);
    s += wq[i] * r;
  }
  return s;
}

double Marginal::integral() const { return trapezoid(axis, samples); }

double Marginal::mean() const {
  double s = 0.0;
  for (std::size_t i = 0; i < axis.size(); ++i) s += axis.weight(i) * axis[i] * samples[i];
  return s / integral();
}

double Marginal::variance() const {
  const double m = mean();
  double s = 0.0;
  for (std::size_t i = 0; i < axis.size(); ++i) {
    const double d = axis[i] - m;
    s += axis.weight(i) * d * d * samples[i];
  }
  return s / integral();
}

double Marginal::mass_between(double a, double b) const {
  const auto w = axis.hat_integrals(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * samples[i];
  return s;
}

double Marginal::value_at(double x) const {
  const double u = axis.coordinate(x);
  if (u < 0.0 || u > double(axis.size() - 1)) return 0.0;
  auto k = static_cast<std::size_t>(std::floor(u));
  if (k + 1 >= axis.size()) return samples.back();
  const double f = u - double(k);
  return (1.0 - f) * samples[k] + f * samples[k + 1];
}

DensityMatrix::DensityMatrix(Axis x, Eigen::MatrixXcd kernel) : x_(x), kernel_(std::move(kernel)) {
  if (kernel_.rows() != static_cast<Eigen::Index>(x_.size()) || kernel_.cols() != kernel_.rows())
    throw GridError("density kernel must be n_x by n_x");
}

DensityMatrix DensityMatrix::from_wavefunction(const Axis& x, const Eigen::VectorXcd& psi) {
  if (psi.size() != static_cast<Eigen::Index>(x.size())) throw GridError("wavefunction size mismatch");
  const double norm2 = psi.squaredNorm() * x.step();
  if (!(norm2 > 0.0)) throw DegenerateStateError("zero wavefunction");
  const Eigen::VectorXcd v = psi / std::sqrt(norm2);
  return DensityMatrix(x, v * v.adjoint());
}

double DensityMatrix::trace() const { return kernel_.diagonal().real().sum() * x_.step(); }

double DensityMatrix::hermiticity_error() const { return (kernel_ - kernel_.adjoint()).cwiseAbs().maxCoeff(); }

WignerGrid normalize(const WignerGrid& w) {
  const double total = w.integral();
  const double scale = w.integral_abs();
  if (!(scale > 0.0) || !(std::abs(total) > 1e-12 * scale))
    throw DegenerateStateError("grid has zero total weight");
  std::vector<double> v = w.values();
  for (double& x : v) x /= total;
  return WignerGrid(w.q(), w.p(), std::move(v));
}

Marginal position_marginal(const WignerGrid& w) {
  Marginal m{AxisKind::position, w.q(), std::vector<double>(w.n_q(), 0.0)};
  for (std::size_t i = 0; i < w.n_q(); ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < w.n_p(); ++j) r += w.p().weight(j) * w(i, j);
    m.samples[i] = r;
  }
  return m;
}

Marginal momentum_marginal(const WignerGrid& w) {
  Marginal m{AxisKind::momentum, w.p(), std::vector<double>(w.n_p(), 0.0)};
  for (std::size_t i = 0; i < w.n_q(); ++i) {
    const double wq = w.q().weight(i);
    for (std::size_t j = 0; j < w.n_p(); ++j) m.samples[j] += wq * w(i, j);
  }
  return m;
}

PhaseSpaceMoments moments(const WignerGrid& w) {
  double s0 = 0, sq = 0, sp = 0, sqq = 0, spp = 0, sqp = 0;
  for (std::size_t i = 0; i < w.n_q(); ++i) {
    const double q = w.q()[i];
    for (std::size_t j = 0; j < w.n_p(); ++j) {
      const double p = w.p()[j];
      const double m = w.q().weight(i) * w.p().weight(j) * w(i, j);
      s0 += m;
      sq += m * q;
      sp += m * p;
      sqq += m * q * q;
      spp += m * p * p;
      sqp += m * q * p;
    }
  }
  if (!(std::abs(s0) > 0.0)) throw DegenerateStateError("moments of a zero-weight grid");
  PhaseSpaceMoments r;
  r.mean_q = sq / s0;
  r.mean_p = sp / s0;
  r.var_q = sqq / s0 - r.mean_q * r.mean_q;
  r.var_p = spp / s0 - r.mean_p * r.mean_p;
  r.cov_qp = sqp / s0 - r.mean_q * r.mean_p;
  return r;
}

WignerGrid gaussian_wigner(const Axis& q, const Axis& p, double mean_q, double mean_p, double var_q,
                           double var_p, double cov_qp) {
  const double det = var_q * var_p - cov_qp * cov_qp;
  if (!(var_q > 0.0 && var_p > 0.0 && det > 0.0)) throw DomainError("covariance must be positive definite");
  const double iqq = var_p / det, ipp = var_q / det, iqp = -cov_qp / det;
  const double pref = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));
  return WignerGrid::sample(q, p, [&](double x, double k) {
    const double a = x - mean_q, b = k - mean_p;
    return pref * std::exp(-0.5 * (iqq * a * a + 2.0 * iqp * a * b + ipp * b * b));
  });
}

double l1_distance(const WignerGrid& a, const WignerGrid& b) {
  require_same_axes(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.n_q(); ++i)
    for (std::size_t j = 0; j < a.n_p(); ++j)
      s += a.q().weight(i) * a.p().weight(j) * std::abs(a(i, j) - b(i, j));
  return s;
}

double sup_distance(const Marginal& a, const Marginal& b) {
  if (!(a.axis == b.axis)) throw GridError("marginals do not share an axis");
  double s = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) s = std::max(s, std::abs(a.samples[i] - b.samples[i]));
  return s;
}

std::pair<Axis, Axis> conjugate_wigner_axes(const Axis& x, std::size_t n_p) {
  if (n_p < WignerGrid::kMinNodes || n_p % 2 != 0) throw GridError("n_p must be even and at least 8");
  const double dx = x.step();
  const double dp = std::numbers::pi / (static_cast<double>(n_p) * dx);
  const double p_lo = -0.5 * static_cast<double>(n_p) * dp;
  return {Axis(x.min(), x.max(), 2 * x.size() - 1), Axis(p_lo, p_lo + static_cast<double>(n_p - 1) * dp, n_p)};
}

DensityMatrix wigner_to_density(const WignerGrid& w, Diagnostics* diag) {
  if (w.n_q() % 2 == 0) throw GridError("wigner_to_density needs an odd number of q nodes");
  const std::size_t nx = (w.n_q() + 1) / 2;
  const Axis x(w.q().min(), w.q().max(), nx);
  const double dx = x.step();
  const double dp = w.p().step();

  // Momenta outside |p| <= pi/(2 dx) alias onto the band the x lattice resolves.
  const double band = std::numbers::pi / (2.0 * dx);
  double outside = 0.0;
  for (std::size_t i = 0; i < w.n_q(); ++i)
    for (std::size_t j = 0; j < w.n_p(); ++j)
      if (std::abs(w.p()[j]) > band + 0.5 * dp) outside += w.q().weight(i) * w.p().weight(j) * std::abs(w(i, j));
  const double total_abs = w.integral_abs();
  if (outside > 1e-8 * total_abs)
    throw ResolutionError("Wigner grid carries weight at |p| > pi/(2dx) = " + std::to_string(band) +
                          "; refine the x lattice or narrow the p range");

  const std::size_t np = w.n_p();
  const std::size_t ns = 2 * nx - 1;  // s = k - l in [-(nx-1), nx-1]
  std::vector<cd> phase(ns * np);
  for (std::size_t si = 0; si < ns; ++si) {
    const double s = static_cast<double>(si) - static_cast<double>(nx - 1);
    for (std::size_t j = 0; j < np; ++j) phase[si * np + j] = std::polar(dp, w.p()[j] * s * dx);
  }

  Eigen::MatrixXcd k(nx, nx);
  for (std::size_t a = 0; a < nx; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      const std::size_t m = a + b;
      const std::size_t si = a - b + nx - 1;
      cd acc = 0.0;
      for (std::size_t j = 0; j < np; ++j) acc += phase[si * np + j] * w(m, j);
      k(a, b) = acc;
      k(b, a) = std::conj(acc);
    }
    k(a, a) = k(a, a).real();
  }
  const double tr = k.diagonal().real().sum() * dx;
  if (!(tr > 0.0)) throw DegenerateStateError("density matrix has non-positive trace");
  if (std::abs(tr - 1.0) > 1e-3) warn(diag, "wigner_to_density: trace before renormalization " + std::to_string(tr));
  k /= tr;
  return DensityMatrix(x, std::move(k));
}

WignerGrid density_to_wigner(const DensityMatrix& rho, std::size_t n_p) {
  const std::size_t nx = rho.n_x();
  if (n_p == 0) n_p = std::max<std::size_t>(WignerGrid::kMinNodes, nx + (nx % 2));
  const auto [qa, pa] = conjugate_wigner_axes(rho.x(), n_p);
  const double dx = rho.x().step();
  const auto& k = rho.kernel();
  const std::size_t nq = qa.size();
  const auto snp = static_cast<long>(n_p);
  const auto lnx = static_cast<long>(nx);

  std::vector<double> v(nq * n_p, 0.0);
  std::vector<cd> row(n_p);
  for (std::size_t m = 0; m < nq; ++m) {
    const long lm = static_cast<long>(m);
    const long smax = std::min(lm, 2 * lnx - 2 - lm);
    std::fill(row.begin(), row.end(), cd(0.0));
    for (long s = -smax; s <= smax; s += 2) {
      if (s < -snp || s >= snp) continue;
      const cd r = k((lm + s) / 2, (lm - s) / 2);
      for (std::size_t j = 0; j < n_p; ++j) row[j] += std::polar(1.0, -pa[j] * static_cast<double>(s) * dx) * r;
    }
    for (std::size_t j = 0; j < n_p; ++j) v[m * n_p + j] = row[j].real() * dx / std::numbers::pi;
  }
  return normalize(WignerGrid(qa, pa, std::move(v)));
}

}  // namespace dhh
