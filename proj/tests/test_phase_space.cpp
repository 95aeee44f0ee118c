#include <cmath>
#include <numbers>

#include <doctest.h>

#include "dhh/phase_space.hpp"

using namespace dhh;
using doctest::Approx;

TEST_CASE("axis weights and hat integrals") {
  const Axis a(-1.0, 3.0, 9);
  CHECK(a.step() == Approx(0.5));
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += a.weight(i);
  CHECK(total == Approx(a.length()).epsilon(1e-14));

  // Full-range hat integrals are the trapezoid weights.
  const auto full = a.hat_integrals(a.min(), a.max());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(full[i] == Approx(a.weight(i)).epsilon(1e-14));

  // Integrating the interpolant of f(x) = x over [0.2, 1.7] is exact for linear f.
  const auto part = a.hat_integrals(0.2, 1.7);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * part[i];
  CHECK(s == Approx(0.5 * (1.7 * 1.7 - 0.2 * 0.2)).epsilon(1e-13));

  CHECK_THROWS_AS(Axis(1.0, 1.0, 4), GridError);
  CHECK_THROWS_AS(Axis(0.0, 1.0, 1), GridError);
}

TEST_CASE("grid needs at least eight nodes per axis") {
  CHECK_THROWS_AS(WignerGrid::zeros(Axis(0, 1, 7), Axis(0, 1, 16)), GridError);
  CHECK_THROWS_AS(WignerGrid(Axis(0, 1, 8), Axis(0, 1, 8), std::vector<double>(10)), GridError);
}

TEST_CASE("gaussian moments and marginals") {
  const Axis q(-12, 12, 241), p(-8, 8, 161);
  const auto w = gaussian_wigner(q, p, 0.7, -0.3, 1.5, 0.8, 0.4);
  CHECK(w.integral() == Approx(1.0).epsilon(1e-9));
  const auto m = moments(w);
  CHECK(m.mean_q == Approx(0.7).epsilon(1e-8));
  CHECK(m.mean_p == Approx(-0.3).epsilon(1e-8));
  CHECK(m.var_q == Approx(1.5).epsilon(1e-6));
  CHECK(m.var_p == Approx(0.8).epsilon(1e-6));
  CHECK(m.cov_qp == Approx(0.4).epsilon(1e-6));

  const auto fq = position_marginal(w);
  CHECK(fq.integral() == Approx(1.0).epsilon(1e-9));
  CHECK(fq.mean() == Approx(0.7).epsilon(1e-8));
  // Marginal of the bivariate Gaussian at its mean.
  CHECK(fq.value_at(0.7) == Approx(1.0 / std::sqrt(2.0 * std::numbers::pi * 1.5)).epsilon(1e-6));
  CHECK(fq.value_at(100.0) == 0.0);
  CHECK(fq.mass_between(-100, 100) == Approx(1.0).epsilon(1e-9));
  CHECK(momentum_marginal(w).variance() == Approx(0.8).epsilon(1e-6));
}

TEST_CASE("normalize rescales and rejects zero mass") {
  const Axis q(-4, 4, 33), p(-4, 4, 33);
  auto w = WignerGrid::sample(q, p, [](double x, double y) { return 3.0 * std::exp(-x * x - y * y); });
  CHECK(normalize(w).integral() == Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(normalize(WignerGrid::zeros(q, p)), DegenerateStateError);
}

TEST_CASE("l1 and sup distances") {
  const Axis q(-6, 6, 49), p(-6, 6, 49);
  const auto a = gaussian_wigner(q, p, 0, 0, 1, 1);
  const auto b = gaussian_wigner(q, p, 0.5, 0, 1, 1);
  CHECK(l1_distance(a, a) == 0.0);
  CHECK(l1_distance(a, b) == Approx(l1_distance(b, a)));
  CHECK(l1_distance(a, b) > 0.1);
  CHECK_THROWS_AS(l1_distance(a, gaussian_wigner(q, Axis(-5, 5, 49), 0, 0, 1, 1)), GridError);
  CHECK(sup_distance(position_marginal(a), position_marginal(a)) == 0.0);
}

TEST_CASE("pure gaussian wavefunction maps to the minimum-uncertainty Wigner function") {
  // psi ~ exp(-x^2/(4 s^2) + i k x) has W = (1/pi) exp(-x^2/(2 s^2) - 2 s^2 (p - k)^2).
  const double s = 1.0, k = 0.5;
  const Axis x(-10, 10, 101);
  Eigen::VectorXcd psi(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    psi(Eigen::Index(i)) = std::exp(std::complex<double>(-x[i] * x[i] / (4 * s * s), k * x[i]));
  const auto rho = DensityMatrix::from_wavefunction(x, psi);
  CHECK(rho.trace() == Approx(1.0).epsilon(1e-12));
  CHECK(rho.hermiticity_error() < 1e-15);

  const auto w = density_to_wigner(rho, 128);
  const auto [qa, pa] = conjugate_wigner_axes(x, 128);
  CHECK(w.q() == qa);
  CHECK(w.p() == pa);
  CHECK(qa.size() == 2 * x.size() - 1);
  CHECK(pa.step() == Approx(std::numbers::pi / (128 * x.step())));

  double worst = 0.0;
  for (std::size_t i = 0; i < w.n_q(); ++i)
    for (std::size_t j = 0; j < w.n_p(); ++j) {
      const double q = qa[i], pp = pa[j];
      const double exact = std::exp(-q * q / (2 * s * s) - 2 * s * s * (pp - k) * (pp - k)) / std::numbers::pi;
      worst = std::max(worst, std::abs(w(i, j) - exact));
    }
  CHECK(worst < 1e-6);
  const auto m = moments(w);
  CHECK(m.var_q == Approx(s * s).epsilon(1e-4));
  CHECK(m.var_p == Approx(1.0 / (4 * s * s)).epsilon(1e-4));
  CHECK(m.mean_p == Approx(k).epsilon(1e-6));
}

TEST_CASE("density to Wigner and back is the identity") {
  const Axis x(-6, 6, 41);
  Eigen::VectorXcd a(x.size()), b(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    a(Eigen::Index(i)) = std::exp(std::complex<double>(-(x[i] - 1) * (x[i] - 1), 0.3 * x[i]));
    b(Eigen::Index(i)) = std::exp(std::complex<double>(-(x[i] + 1.5) * (x[i] + 1.5) / 2, -0.2 * x[i]));
  }
  const auto ra = DensityMatrix::from_wavefunction(x, a);
  const auto rb = DensityMatrix::from_wavefunction(x, b);
  const DensityMatrix mixed(x, 0.7 * ra.kernel() + 0.3 * rb.kernel());
  const auto w = density_to_wigner(mixed);
  CHECK(w.integral() == Approx(1.0).epsilon(1e-6));
  const auto back = wigner_to_density(w);
  CHECK((back.kernel() - mixed.kernel()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(back.trace() == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("wigner to density rejects unresolvable grids") {
  // Even q node count has no interleaved x lattice.
  const auto even = gaussian_wigner(Axis(-5, 5, 40), Axis(-5, 5, 32), 0, 0, 1, 1);
  CHECK_THROWS_AS(wigner_to_density(even), GridError);
  // Momentum support far beyond the conjugate Nyquist range of the q lattice.
  const Axis q(-5, 5, 21), p(-60, 60, 64);
  const auto fast = gaussian_wigner(q, p, 0, 40, 1, 1);
  CHECK_THROWS_AS(wigner_to_density(fast), ResolutionError);
}
