#include <array>
#include <cmath>

#include <doctest.h>

#include "dhh/qbm_propagator.hpp"

using namespace dhh;
using doctest::Approx;

namespace {

using Mat2 = std::array<double, 4>;  // row-major qq, qp, pq, pp

// Independent oracle: RK4 on dS/dt = A S + S A^T + Q, A = [[0, 1/M], [0, -2 gamma]],
// Q = diag(0, 4 M gamma kT), starting from S = 0.
Mat2 lyapunov_rk4(const QbmParams& P, double t, int steps) {
  auto rhs = [&](const Mat2& s) {
    const double a01 = 1.0 / P.M, a11 = -2.0 * P.gamma;
    // A S
    const Mat2 as{a01 * s[2], a01 * s[3], a11 * s[2], a11 * s[3]};
    // A S + (A S)^T + Q
    return Mat2{2 * as[0], as[1] + as[2], as[2] + as[1], 2 * as[3] + 4.0 * P.M * P.gamma * P.kT};
  };
  Mat2 s{0, 0, 0, 0};
  const double h = t / steps;
  for (int k = 0; k < steps; ++k) {
    auto add = [](const Mat2& a, const Mat2& b, double f) {
      return Mat2{a[0] + f * b[0], a[1] + f * b[1], a[2] + f * b[2], a[3] + f * b[3]};
    };
    const auto k1 = rhs(s), k2 = rhs(add(s, k1, h / 2)), k3 = rhs(add(s, k2, h / 2)), k4 = rhs(add(s, k3, h));
    for (int i = 0; i < 4; ++i) s[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return s;
}

}  // namespace

TEST_CASE("parameters must be positive") {
  CHECK_THROWS_AS((QbmParams{1, 0, 1}.validate()), DomainError);
  CHECK_THROWS_WITH_AS((QbmParams{1, -1, 1}.validate()), "gamma must be positive", DomainError);
  CHECK_THROWS_AS((QbmParams{0, 1, 1}.validate()), DomainError);
  CHECK_THROWS_AS((QbmParams{1, 1, 0}.validate()), DomainError);
}

TEST_CASE("kernel covariance matches an independent Lyapunov integration") {
  for (const QbmParams P : {QbmParams{1, 0.5, 1}, QbmParams{2.5, 1.3, 0.4}}) {
    for (double t : {1e-3, 4e-3, 0.05, 0.7, 3.0, 12.0}) {
      const auto s = kernel_covariance(P, t);
      const auto o = lyapunov_rk4(P, t, 4000);
      CAPTURE(t);
      CHECK(s.qq == Approx(o[0]).epsilon(1e-8));
      CHECK(s.qp == Approx(o[1]).epsilon(1e-8));
      CHECK(s.pp == Approx(o[3]).epsilon(1e-8));
    }
  }
  // Series branch and closed form agree across the switch point.
  const QbmParams P{1, 1, 1};
  const double below = kernel_covariance(P, 0.5e-2 * (1 - 1e-9)).qq;
  const double above = kernel_covariance(P, 0.5e-2 * (1 + 1e-9)).qq;
  CHECK(below == Approx(above).epsilon(1e-6));
  CHECK(kernel_covariance(P, 0.0).qq == 0.0);
}

TEST_CASE("coefficient and covariance maps are inverse") {
  const QbmParams P{1.2, 0.8, 1.7};
  const auto c = longtime_coefficients(P, 10.0);
  CHECK(c.alpha == Approx(1.0 / (2 * P.M * P.kT)));
  CHECK(c.beta == Approx(P.M * P.gamma / (2 * P.kT * 10.0)));
  CHECK(c.epsilon == Approx(-1.0 / (2 * P.kT * 10.0)));
  const auto back = coefficients_from_covariance(covariance_from_coefficients(c), 10.0);
  CHECK(back.alpha == Approx(c.alpha).epsilon(1e-13));
  CHECK(back.beta == Approx(c.beta).epsilon(1e-13));
  CHECK(back.epsilon == Approx(c.epsilon).epsilon(1e-13));

  // Long-time kernel approaches the exact one: qq ~ 2 D t, pp -> M kT.
  const double t = 60.0;
  const auto lt = covariance_from_coefficients(longtime_coefficients(P, t));
  const auto ex = kernel_covariance(P, t);
  CHECK(lt.qq == Approx(ex.qq).epsilon(0.05));
  CHECK(lt.pp == Approx(ex.pp).epsilon(0.05));
  CHECK(ex.pp == Approx(P.M * P.kT).epsilon(1e-12));
}

TEST_CASE("long-time coefficients reject the transient regime") {
  const QbmParams P{1, 1, 1};
  CHECK_THROWS_AS(longtime_coefficients(P, 2.0), DomainError);
  Diagnostics d;
  CHECK_NOTHROW(longtime_coefficients(P, 2.0, &d));
  CHECK(d.warnings.size() == 1);
}

TEST_CASE("classical path") {
  const QbmParams P{2, 0.5, 1};
  const auto c = classical_path(1.0, 3.0, 0.0, P);
  CHECK(c.q == 1.0);
  CHECK(c.p == 3.0);
  const auto far = classical_path(1.0, 3.0, 200.0, P);
  CHECK(far.q == Approx(1.0 + 3.0 / (2 * P.M * P.gamma)));
  CHECK(std::abs(far.p) < 1e-80);
  const auto mid = classical_path(0.0, 1.0, 1.0, P);
  CHECK(mid.p == Approx(std::exp(-1.0)));
  CHECK(mid.q == Approx((1 - std::exp(-1.0)) / (2 * P.M * P.gamma)));
}

TEST_CASE("analytic propagation reproduces Gaussian moments") {
  const QbmParams P{1, 0.5, 1};
  const Axis q(-25, 25, 301), p(-7, 7, 141);
  const double q0 = -1, p0 = 1.5, vq = 0.5, vp = 0.8, cqp = 0.2;
  const auto w0 = gaussian_wigner(q, p, q0, p0, vq, vp, cqp);
  for (double t : {1.5, 4.0, 8.0}) {
    Diagnostics d;
    const auto w = propagate_analytic(w0, t, P, KernelMode::exact, &d);
    const auto m = moments(w);
    const double a = std::exp(-2 * P.gamma * t), c = (1 - a) / (2 * P.M * P.gamma);
    const auto S = kernel_covariance(P, t);
    CAPTURE(t);
    CHECK(w.integral() == Approx(1.0).epsilon(1e-12));
    CHECK(m.mean_q == Approx(q0 + c * p0).epsilon(1e-4));
    CHECK(m.mean_p == Approx(a * p0).epsilon(1e-4));
    CHECK(m.var_q == Approx(vq + 2 * c * cqp + c * c * vp + S.qq).epsilon(1e-3));
    CHECK(m.var_p == Approx(a * a * vp + S.pp).epsilon(1e-3));
    CHECK(m.cov_qp == Approx(a * cqp + a * c * vp + S.qp).epsilon(1e-3));
    CHECK(d.warnings.empty());
  }
  CHECK(l1_distance(propagate_analytic(w0, 0.0, P), w0) < 1e-9);
  CHECK_THROWS_AS(propagate_analytic(w0, 1e-4, P), ResolutionError);
  CHECK_THROWS_AS(propagate_analytic(w0, -1.0, P), DomainError);
  // A state that spreads past the grid edges is rejected rather than silently truncated.
  const auto narrow = gaussian_wigner(Axis(-4, 4, 81), p, 0, 0, 0.5, 0.8);
  CHECK_THROWS_AS(propagate_analytic(narrow, 30.0, P), ResolutionError);
}

TEST_CASE("Fokker-Planck step size, conservation and relaxation") {
  const QbmParams P{1, 0.5, 1};
  const Axis q(-15, 15, 181), p(-7, 7, 113);
  const auto w0 = gaussian_wigner(q, p, 0, 2.0, 0.3, 0.3);
  const double dt = fokker_planck_max_dt(w0, P);
  CHECK(dt > 0.0);
  CHECK(dt <= 0.4 / (4 * P.gamma));
  CHECK_THROWS_AS(step_fokker_planck(w0, 1.5 * dt / 0.4, P), StepSizeError);

  const double t = 1.5;
  const auto w = evolve_fokker_planck(w0, t, dt, P);
  CHECK(w.integral() == Approx(1.0).epsilon(1e-10));
  const auto m = moments(w);
  const double a = std::exp(-2 * P.gamma * t), c = (1 - a) / (2 * P.M * P.gamma);
  const auto S = kernel_covariance(P, t);
  CHECK(m.mean_p == Approx(2.0 * a).epsilon(2e-2));
  CHECK(m.mean_q == Approx(2.0 * c).epsilon(2e-2));
  CHECK(m.var_p == Approx(a * a * 0.3 + S.pp).epsilon(2e-2));
  CHECK(m.var_q == Approx(0.3 + c * c * 0.3 + S.qq).epsilon(2e-2));

  // Same state through the periodic boundary keeps the same mass.
  FokkerPlanckOptions per;
  per.q_boundary = QBoundary::periodic;
  CHECK(evolve_fokker_planck(w0, 0.5, dt, P, per).integral() == Approx(1.0).epsilon(1e-10));

  const auto series = evolve_fokker_planck_series(w0, {0.0, 0.5, 1.5}, dt, P);
  REQUIRE(series.size() == 3);
  CHECK(l1_distance(series[0], w0) == 0.0);
  // Different step partitions agree to integrator accuracy.
  CHECK(l1_distance(series[2], w) < 1e-4);
  CHECK_THROWS_AS(evolve_fokker_planck_series(w0, {1.0, 0.5}, dt, P), DomainError);

  auto bad = w0.values();
  bad[100] = std::nan("");
  CHECK_THROWS_AS(step_fokker_planck(WignerGrid(q, p, bad), dt, P), DivergenceError);
}

TEST_CASE("master equation keeps the density operator Hermitian with unit trace") {
  const QbmParams P{1, 0.5, 1};
  const Axis x(-6, 6, 49);
  Eigen::VectorXcd psi(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    psi(Eigen::Index(i)) = std::exp(std::complex<double>(-(x[i] - 0.5) * (x[i] - 0.5), 0.7 * x[i]));
  const auto rho0 = DensityMatrix::from_wavefunction(x, psi);
  const double dt = master_equation_max_dt(x, P);
  CHECK(dt > 0.0);
  CHECK_THROWS_AS(step_master_equation(rho0, 10 * dt, P), StepSizeError);
  const auto rho = evolve_master_equation(rho0, 0.2, dt, P);
  CHECK(rho.trace() == Approx(1.0).epsilon(1e-6));
  CHECK(rho.hermiticity_error() < 1e-14);
  // The bath turns the pure state into a mixture.
  const double dx = x.step();
  auto purity = [dx](const DensityMatrix& r) { return r.kernel().cwiseAbs2().sum() * dx * dx; };
  CHECK(purity(rho0) == Approx(1.0).epsilon(1e-12));
  CHECK(purity(rho) < 0.99);
}

TEST_CASE("diffusion fit") {
  const QbmParams P{1, 1, 1};
  const double D = diffusion_coefficient(P);
  CHECK(D == Approx(0.5));
  std::vector<double> t{3, 4, 5, 6, 7}, v;
  for (double s : t) v.push_back(2 * D * s + 0.3);
  const auto f = fit_diffusion(t, v, P);
  CHECK(f.D_fit == Approx(D).epsilon(1e-13));
  CHECK(f.relative_error < 1e-12);
  CHECK(f.t_start == 3.0);
  CHECK(f.t_end == 7.0);

  CHECK_THROWS_AS(fit_diffusion({3, 4, 5}, {1, 2, 3}, P), FitQualityError);
  CHECK_THROWS_AS(fit_diffusion({1, 4, 5, 6}, {1, 2, 3, 4}, P), DomainError);
  CHECK_THROWS_AS(fit_diffusion({3, 4, 5, 6}, {1, 2, 2, 4}, P), FitQualityError);
  CHECK_THROWS_AS(fit_diffusion({3, 4, 4, 6}, {1, 2, 3, 4}, P), FitQualityError);
}

TEST_CASE("constitutive relation holds only after relaxation") {
  const QbmParams P{1, 1, 1};
  const Axis q(-20, 20, 321), p(-6, 6, 97);
  const auto w0 = gaussian_wigner(q, p, 0, 1.0, 0.25, 1.0, 0.3);
  CHECK(constitutive_check(w0, P).relative_sup > 0.5);
  const auto late = constitutive_check(propagate_analytic(w0, 10.0, P), P);
  CHECK(late.relative_sup < 2e-2);
  CHECK(late.residual.size() == q.size());
}
