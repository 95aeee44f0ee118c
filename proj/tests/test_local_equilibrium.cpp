#include <cmath>
#include <numbers>

#include <doctest.h>

#include "dhh/local_equilibrium.hpp"

using namespace dhh;
using doctest::Approx;

namespace {

LocalEquilibriumProfile uniform_profile(const Axis& q, double u, double kT, double m) {
  LocalEquilibriumProfile pr;
  pr.q = q;
  pr.f.assign(q.size(), 1.0);
  pr.u.assign(q.size(), u);
  pr.kT.assign(q.size(), kT);
  pr.m = m;
  return pr;
}

// Scaling-and-squaring Taylor exponential, independent of the eigen-decomposition.
CMatrix expm(const CMatrix& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int s = std::max(0, int(std::ceil(std::log2(norm + 1.0))) + 1);
  const CMatrix x = a / std::pow(2.0, s);
  CMatrix term = CMatrix::Identity(a.rows(), a.cols()), sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * x / double(k);
    sum += term;
  }
  for (; s > 0; --s) sum = sum * sum;
  return sum;
}

std::vector<HydroFields> stream_series(const WignerGrid& w1, std::size_t N, const SmearingWindow& win, double m,
                                       double dt, int frames) {
  std::vector<HydroFields> out;
  for (int k = 0; k < frames; ++k) {
    auto h = hydro_averages(evolve_free(w1, k * dt, m, true), N, win, m);
    h.t = k * dt;
    out.push_back(std::move(h));
  }
  return out;
}

WignerGrid bumped_state(std::size_t nq, double m) {
  const Axis q(-10, 10, nq), p(-8, 8, 129);
  auto pr = uniform_profile(q, 0.0, 1.0, m);
  for (std::size_t i = 0; i < nq; ++i) pr.f[i] = 1.0 + 0.5 * std::exp(-q[i] * q[i] / (2 * 1.5 * 1.5));
  return build_w1(pr, p);
}

}  // namespace

TEST_CASE("local equilibrium momentum moments") {
  const Axis q(-5, 5, 81), p(-12, 12, 241);
  const double m = 1.5;
  auto pr = uniform_profile(q, 0.0, 1.0, m);
  for (std::size_t i = 0; i < q.size(); ++i) {
    pr.f[i] = std::exp(-q[i] * q[i] / 8);
    pr.u[i] = 0.3 * std::sin(q[i] / 4);
    pr.kT[i] = 1.0 + 0.2 * std::cos(q[i] / 5);
  }
  Diagnostics d;
  const auto w = build_w1(pr, p, &d);
  CHECK(d.warnings.empty());
  CHECK(w.integral() == Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < q.size(); i += 10) {
    double s0 = 0, s1 = 0, s2 = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double x = p.weight(j) * w(i, j);
      s0 += x, s1 += p[j] * x, s2 += p[j] * p[j] * x;
    }
    const double mean = s1 / s0;
    CHECK(mean == Approx(m * pr.u[i]).epsilon(1e-9));
    CHECK(s2 / s0 - mean * mean == Approx(m * pr.kT[i]).epsilon(1e-9));
  }
}

TEST_CASE("local equilibrium profile validation") {
  const Axis q(-5, 5, 41);
  auto pr = uniform_profile(q, 0.0, 1.0, 1.0);
  CHECK_THROWS_AS(build_w1(pr, Axis(-2, 2, 81)), ResolutionError);
  CHECK_THROWS_AS(build_w1(pr, Axis(-8, 8, 9)), ResolutionError);
  pr.kT[3] = 0.0;
  CHECK_THROWS_AS(build_w1(pr, Axis(-8, 8, 161)), DomainError);
  pr.kT[3] = 1.0;
  pr.f[10] = 3.0;
  Diagnostics d;
  build_w1(pr, Axis(-8, 8, 161), &d);
  CHECK_FALSE(d.warnings.empty());
}

TEST_CASE("lattice Gibbs state") {
  const std::size_t B = 5;
  LatticeProfile pr{std::vector<double>(B, 0.7), std::vector<double>(B, 0.2), std::vector<double>(B, 0.0), 1.3, 1.0};
  const CMatrix rho = one_particle_gibbs(pr);
  CHECK(std::abs(rho.trace() - 1.0) < 1e-13);
  CHECK((rho - rho.adjoint()).cwiseAbs().maxCoeff() < 1e-15);
  // Uniform multipliers without drift: rho is exp(-beta T) / Z.
  CMatrix oracle = expm(-0.7 * lattice_kinetic(B, 1.3));
  oracle /= oracle.trace();
  CHECK((rho - oracle).cwiseAbs().maxCoeff() < 1e-12);

  pr.u.assign(B, 0.4);
  const CMatrix drifted = one_particle_gibbs(pr);
  CHECK((drifted * lattice_momentum(B)).trace().real() > 0.0);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(drifted);
  CHECK(es.eigenvalues().minCoeff() > -1e-15);

  pr.beta[2] = -1.0;
  CHECK_THROWS_AS(one_particle_gibbs(pr), DomainError);
}

TEST_CASE("hydrodynamic averages of a uniform drifting equilibrium") {
  const Axis q(-10, 10, 201), p(-12, 12, 481);
  const double m = 2.0, u = 0.5, kT = 1.2;
  const std::size_t N = 40;
  const auto w = build_w1(uniform_profile(q, u, kT, m), p);
  const auto h = hydro_averages(w, N, SmearingWindow::uniform(-4, 4, 8), m);
  const double c = m * u, s2 = m * kT;
  for (std::size_t b = 0; b < 8; ++b) {
    const double n = double(N) * h.width[b] / q.length();
    CHECK(h.n[b] == Approx(n).epsilon(1e-9));
    CHECK(h.g[b] == Approx(n * c).epsilon(1e-8));
    CHECK(h.h[b] == Approx(n * (c * c + s2) / (2 * m)).epsilon(1e-8));
    CHECK(h.energy_flux[b] == Approx(n * (c * c * c + 3 * c * s2) / (2 * m * m)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(hydro_averages(w, N, SmearingWindow::uniform(-4, 4, 8, WindowShape::gaussian), m), DomainError);
}

TEST_CASE("free streaming") {
  const Axis q(-20, 20, 401), p(-5, 5, 101);
  const auto w0 = gaussian_wigner(q, p, 0, 0, 0.5, 0.4);
  CHECK(l1_distance(evolve_free(w0, 0.0, 1.0), w0) < 1e-15);
  const double t = 3.0, m = 2.0;
  const auto mm = moments(evolve_free(w0, t, m));
  CHECK(mm.var_q == Approx(0.5 + t * t * 0.4 / (m * m)).epsilon(1e-4));
  CHECK(mm.cov_qp == Approx(t * 0.4 / m).epsilon(1e-4));
  CHECK(mm.var_p == Approx(0.4).epsilon(1e-9));

  const auto wide = gaussian_wigner(Axis(-6, 6, 121), p, 0, 0, 2.0, 1.0);
  CHECK_THROWS_AS(evolve_free(wide, 10.0, 1.0), ResolutionError);
  // Periodic streaming preserves the node sum of every momentum column.
  const auto wrapped = evolve_free(wide, 10.0, 1.0, true);
  double s0 = 0, s1 = 0;
  for (std::size_t k = 0; k < wide.values().size(); ++k) s0 += wide.values()[k], s1 += wrapped.values()[k];
  CHECK(s1 == Approx(s0).epsilon(1e-13));
}

TEST_CASE("continuity residual converges at second order") {
  const double m = 1.0;
  const std::size_t N = 6;
  const auto coarse_w = bumped_state(101, m);
  const auto fine_w = bumped_state(201, m);
  auto sup = [](const std::vector<ContinuityResidual>& r) {
    double s = 0;
    for (const auto& f : r)
      for (const auto* v : {&f.n, &f.g, &f.h})
        for (double x : *v) s = std::max(s, std::abs(x));
    return s;
  };
  const double rc = sup(continuity_residual(stream_series(coarse_w, N, SmearingWindow::uniform(-10, 10, 20), m, 0.2, 6), m));
  const double rf = sup(continuity_residual(stream_series(fine_w, N, SmearingWindow::uniform(-10, 10, 40), m, 0.1, 11), m));
  CHECK(rc / rf > 3.0);

  auto series = stream_series(coarse_w, N, SmearingWindow::uniform(-10, 10, 20), m, 0.2, 3);
  CHECK_THROWS_AS(continuity_residual({series[0], series[1]}, m), DomainError);
  series[2].t = 0.5;
  CHECK_THROWS_AS(continuity_residual(series, m), DomainError);
}

TEST_CASE("occupation histories of a near-uniform lattice Gibbs state") {
  LatticeProfile pr{{0.01, 0.01, 0.01}, {0, 0, 0}, {0, 0, 0}, 1.0, 1.0};
  PeakingOptions opt;
  const auto r = local_equilibrium_peaking(pr, opt);
  CHECK(r.probability_sum == Approx(1.0).epsilon(1e-10));
  CHECK(r.bound.holds);
  CHECK(r.epsilon < 0.05);
  double s1 = 0, s2 = 0;
  for (double x : r.mean_t1) s1 += x;
  for (double x : r.mean_t2) s2 += x;
  CHECK(s1 == Approx(6.0));
  CHECK(s2 == Approx(6.0));
  CHECK(r.fraction_within_tolerance <= 1.0);

  // One particle cannot peak: its history probability spreads over the bins.
  opt.N = 1;
  const auto one = local_equilibrium_peaking(pr, opt);
  CHECK(one.fraction_on_quantized_trajectory < 0.5);

  opt.t2 = opt.t1;
  CHECK_THROWS_AS(local_equilibrium_peaking(pr, opt), DomainError);
}
