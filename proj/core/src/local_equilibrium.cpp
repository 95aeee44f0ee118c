#include "dhh/local_equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dhh {

namespace {

using cd = std::complex<double>;

double catmull_rom(double p0, double p1, double p2, double p3, double s) {
  return p1 + 0.5 * s * (p2 - p0 + s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + s * (3.0 * (p1 - p2) + p3 - p0)));
}

// Second-order derivative of samples with uniform spacing h at index i.
double derivative(const std::vector<double>& f, std::size_t i, double h) {
  const std::size_t n = f.size();
  if (n < 3) throw DomainError("derivative needs at least 3 samples");
  if (i == 0) return (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
  if (i + 1 == n) return (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
  return (f[i + 1] - f[i - 1]) / (2.0 * h);
}

}  // namespace

void LocalEquilibriumProfile::validate(Diagnostics* diag) const {
  const std::size_t n = q.size();
  if (f.size() != n || u.size() != n || kT.size() != n) throw DomainError("profile arrays must match the q lattice");
  if (!(m > 0.0)) throw DomainError("particle mass must be positive");
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(kT[i] > 0.0)) throw DomainError("kT must be positive everywhere");
    if (!(f[i] >= 0.0)) throw DomainError("f must be non-negative");
    if (i == 0) continue;
    const double fs = std::max(std::abs(f[i]), std::abs(f[i - 1]));
    if (fs > 0.0) worst = std::max(worst, std::abs(f[i] - f[i - 1]) / fs);
    worst = std::max(worst, std::abs(kT[i] - kT[i - 1]) / std::max(kT[i], kT[i - 1]));
    worst = std::max(worst, std::abs(u[i] - u[i - 1]) / std::sqrt(kT[i] / m));
  }
  if (worst >= 0.2)
    warn(diag, "profile is not slowly varying: max relative change per node " + std::to_string(worst));
}

void LatticeProfile::validate() const {
  if (beta.empty() || mu_bar.size() != beta.size() || u.size() != beta.size())
    throw DomainError("lattice profile arrays must be non-empty and equal in length");
  if (!(m > 0.0) || !(spacing > 0.0)) throw DomainError("mass and spacing must be positive");
  for (double b : beta)
    if (!(b > 0.0)) throw DomainError("beta must be positive");
}

WignerGrid build_w1(const LocalEquilibriumProfile& pr, const Axis& pa, Diagnostics* diag) {
  pr.validate(diag);
  for (std::size_t i = 0; i < pr.q.size(); ++i) {
    if (pr.f[i] == 0.0) continue;
    const double c = pr.m * pr.u[i];
    const double s = std::sqrt(pr.m * pr.kT[i]);
    if (c - 5.0 * s < pa.min() || c + 5.0 * s > pa.max())
      throw ResolutionError("p range cannot contain 5 thermal widths at q = " + std::to_string(pr.q[i]));
    if (s < pa.step()) throw ResolutionError("thermal width below the p spacing at q = " + std::to_string(pr.q[i]));
  }
  std::vector<double> v(pr.q.size() * pa.size());
  for (std::size_t i = 0; i < pr.q.size(); ++i)
    for (std::size_t j = 0; j < pa.size(); ++j) {
      const double d = pa[j] - pr.m * pr.u[i];
      v[i * pa.size() + j] = pr.f[i] * std::exp(-d * d / (2.0 * pr.m * pr.kT[i]));
    }
  return normalize(WignerGrid(pr.q, pa, std::move(v)));
}

CMatrix one_particle_gibbs(const LatticeProfile& pr) {
  pr.validate();
  const std::size_t B = pr.B();
  const auto n = static_cast<Eigen::Index>(B);
  const CMatrix T = lattice_kinetic(B, pr.m, pr.spacing);
  const CMatrix P = lattice_momentum(B, pr.spacing);
  CMatrix beta = CMatrix::Zero(n, n), bu = CMatrix::Zero(n, n), bmu = CMatrix::Zero(n, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    beta(b, b) = pr.beta[std::size_t(b)];
    bu(b, b) = pr.beta[std::size_t(b)] * pr.u[std::size_t(b)];
    bmu(b, b) = pr.beta[std::size_t(b)] * pr.mu_bar[std::size_t(b)];
  }
  CMatrix G = 0.5 * (beta * T + T * beta) - bmu - 0.5 * (bu * P + P * bu);
  G = 0.5 * (G + G.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(G);
  const double lmin = es.eigenvalues().minCoeff();
  Eigen::VectorXd w = (-(es.eigenvalues().array() - lmin)).exp();
  w /= w.sum();
  CMatrix rho = es.eigenvectors() * w.cast<cd>().asDiagonal() * es.eigenvectors().adjoint();
  return 0.5 * (rho + rho.adjoint());
}

HydroFields hydro_averages(const WignerGrid& w1, std::size_t N, const SmearingWindow& window, double m) {
  window.validate();
  if (window.shape != WindowShape::top_hat) throw DomainError("hydro averages use top-hat bins");
  if (!(m > 0.0)) throw DomainError("particle mass must be positive");
  const std::size_t nq = w1.n_q(), np = w1.n_p();
  std::vector<double> m0(nq, 0.0), m1(nq, 0.0), m2(nq, 0.0), m3(nq, 0.0);
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < np; ++j) {
      const double p = w1.p()[j];
      const double x = w1.p().weight(j) * w1(i, j);
      m0[i] += x;
      m1[i] += p * x;
      m2[i] += p * p / (2.0 * m) * x;
      m3[i] += p * p * p / (2.0 * m * m) * x;
    }
  HydroFields h;
  const double Nd = double(N);
  for (std::size_t b = 0; b < window.bins(); ++b) {
    const auto hw = w1.q().hat_integrals(window.edges[b], window.edges[b + 1]);
    double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
    for (std::size_t i = 0; i < nq; ++i) {
      a0 += hw[i] * m0[i];
      a1 += hw[i] * m1[i];
      a2 += hw[i] * m2[i];
      a3 += hw[i] * m3[i];
    }
    h.center.push_back(window.center(b));
    h.width.push_back(window.width(b));
    h.n.push_back(Nd * a0);
    h.g.push_back(Nd * a1);
    h.h.push_back(Nd * a2);
    h.energy_flux.push_back(Nd * a3);
  }
  return h;
}

WignerGrid evolve_free(const WignerGrid& w1, double t, double m, bool periodic) {
  if (!(m > 0.0)) throw DomainError("particle mass must be positive");
  const std::size_t nq = w1.n_q(), np = w1.n_p();
  const double dq = w1.q().step();
  const auto n = static_cast<long>(nq);
  std::vector<double> v(nq * np, 0.0);
  for (std::size_t j = 0; j < np; ++j) {
    const double shift = w1.p()[j] * t / (m * dq);  // in nodes
    const double fl = std::floor(shift);
    const long ks = static_cast<long>(fl);
    const double s = 1.0 - (shift - fl);  // source = i - shift = (i - ks - 1) + s
    auto at = [&](long i) -> double {
      if (periodic) return w1(static_cast<std::size_t>(((i % n) + n) % n), j);
      return (i < 0 || i >= n) ? 0.0 : w1(static_cast<std::size_t>(i), j);
    };
    for (long i = 0; i < n; ++i) {
      const long k = i - ks - 1;
      v[static_cast<std::size_t>(i) * np + j] =
          s == 1.0 ? at(k + 1) : catmull_rom(at(k - 1), at(k), at(k + 1), at(k + 2), s);
    }
  }
  WignerGrid out(w1.q(), w1.p(), std::move(v));
  if (!periodic) {
    const double m0 = w1.integral(), m1 = out.integral();
    if (std::abs(m1 - m0) > 1e-6 * std::abs(m0))
      throw ResolutionError("free streaming carries mass past the grid edge (relative change " +
                            std::to_string(std::abs(m1 - m0) / std::abs(m0)) + ")");
  }
  return out;
}

std::vector<ContinuityResidual> continuity_residual(const std::vector<HydroFields>& series, double m) {
  if (series.size() < 3) throw DomainError("continuity residual needs at least 3 frames");
  const std::size_t K = series.size();
  const std::size_t B = series[0].n.size();
  if (B < 3) throw DomainError("continuity residual needs at least 3 bins");
  const double dt = series[1].t - series[0].t;
  const double V = series[0].width[0];
  for (std::size_t k = 0; k < K; ++k) {
    if (series[k].n.size() != B || series[k].energy_flux.size() != B)
      throw DomainError("frames must share bins and carry the energy flux");
    if (k > 0 && std::abs((series[k].t - series[k - 1].t) - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
      throw DomainError("frames must be equally spaced in time");
    for (double w : series[k].width)
      if (std::abs(w - V) > 1e-12 * V) throw DomainError("continuity residual needs uniform bins");
  }
  if (!(dt > 0.0)) throw DomainError("frames must advance in time");
  auto density = [V](const std::vector<double>& x) {
    std::vector<double> r(x);
    for (double& y : r) y /= V;
    return r;
  };
  std::vector<std::vector<double>> n(K), g(K), h(K), e(K);
  for (std::size_t k = 0; k < K; ++k) {
    n[k] = density(series[k].n);
    g[k] = density(series[k].g);
    h[k] = density(series[k].h);
    e[k] = density(series[k].energy_flux);
  }
  std::vector<ContinuityResidual> out(K);
  std::vector<double> col(K);
  auto dtime = [&](const std::vector<std::vector<double>>& f, std::size_t k, std::size_t b) {
    for (std::size_t j = 0; j < K; ++j) col[j] = f[j][b];
    return derivative(col, k, dt);
  };
  for (std::size_t k = 0; k < K; ++k) {
    out[k].t = series[k].t;
    for (std::size_t b = 0; b < B; ++b) {
      out[k].n.push_back(dtime(n, k, b) + derivative(g[k], b, V) / m);
      out[k].g.push_back(dtime(g, k, b) + 2.0 * derivative(h[k], b, V));
      out[k].h.push_back(dtime(h, k, b) + derivative(e[k], b, V));
    }
  }
  return out;
}

PeakingReport local_equilibrium_peaking(const LatticeProfile& profile, const PeakingOptions& opt, Diagnostics* diag) {
  profile.validate();
  if (opt.N == 0) throw DomainError("N must be positive");
  if (!(opt.t2 > opt.t1) || opt.t1 < 0.0) throw DomainError("need 0 <= t1 < t2");
  const std::size_t B = profile.B();
  const ToyHilbert space(B, opt.N, kDenseCap);
  const CMatrix rho1 = one_particle_gibbs(profile);
  const CMatrix rho = product_density(rho1, opt.N);

  HistorySpec hs;
  hs.evolution.one_body_hamiltonian = lattice_kinetic(B, profile.m, profile.spacing);
  hs.evolution.space = space;
  hs.evolution.dephasing_rate = opt.dephasing_rate;
  const ProjectorFamily fam = occupation_family(space);
  hs.slots.push_back({opt.t1, {fam}});
  hs.slots.push_back({opt.t2, {fam}});

  PeakingReport r;
  r.D = decoherence_functional(rho, hs, diag);
  r.epsilon = consistency_epsilon(r.D, diag);
  r.bound = check_dh_bound(r.D);

  // Mean occupations from the one-particle state.
  Evolution one;
  one.hamiltonian = *hs.evolution.one_body_hamiltonian;
  auto mean_at = [&](double t) {
    const CMatrix u1 = one.propagator(t, B);
    const CMatrix r1 = u1 * rho1 * u1.adjoint();
    std::vector<double> m(B);
    for (std::size_t b = 0; b < B; ++b) m[b] = double(opt.N) * r1(Eigen::Index(b), Eigen::Index(b)).real();
    return m;
  };
  r.mean_t1 = mean_at(opt.t1);
  r.mean_t2 = mean_at(opt.t2);

  const auto comps = compositions(opt.N, B);
  auto nearest = [&](const std::vector<double>& mean) {
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t c = 0; c < comps.size(); ++c) {
      double d = 0.0;
      for (std::size_t b = 0; b < B; ++b) d += (comps[c][b] - mean[b]) * (comps[c][b] - mean[b]);
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    return best;
  };
  const std::size_t q1 = nearest(r.mean_t1), q2 = nearest(r.mean_t2);
  auto within = [&](const std::vector<int>& n, const std::vector<double>& mean) {
    for (std::size_t b = 0; b < B; ++b)
      if (std::abs(n[b] - mean[b]) > opt.tolerance + 1e-12) return false;
    return true;
  };
  const Eigen::VectorXd p = r.D.probabilities();
  for (std::size_t hidx = 0; hidx < r.D.paths.size(); ++hidx) {
    const auto& path = r.D.paths[hidx];
    const double ph = p(Eigen::Index(hidx));
    r.probability_sum += ph;
    if (within(comps[path[0]], r.mean_t1) && within(comps[path[1]], r.mean_t2)) r.fraction_within_tolerance += ph;
    if (path[0] == q1 && path[1] == q2) r.fraction_on_quantized_trajectory += ph;
  }
  for (Eigen::Index a = 0; a < r.D.D.rows(); ++a)
    for (Eigen::Index b = 0; b < r.D.D.cols(); ++b)
      if (a != b) r.max_offdiagonal = std::max(r.max_offdiagonal, std::abs(r.D.D(a, b)));
  return r;
}

}  // namespace dhh
