#include <algorithm>
#include <cmath>
#include <string>

#include "dhh/qbm_propagator.hpp"

namespace dhh {

namespace {

using Mat = Eigen::MatrixXcd;

// Second difference along rows (x index), zero outside the lattice.
Mat d2_rows(const Mat& R) {
  const Eigen::Index n = R.rows();
  Mat out = -2.0 * R;
  out.topRows(n - 1) += R.bottomRows(n - 1);
  out.bottomRows(n - 1) += R.topRows(n - 1);
  return out;
}

Mat d2_cols(const Mat& R) {
  const Eigen::Index n = R.cols();
  Mat out = -2.0 * R;
  out.leftCols(n - 1) += R.rightCols(n - 1);
  out.rightCols(n - 1) += R.leftCols(n - 1);
  return out;
}

// Central difference along rows, undivided: R(k+1,l) - R(k-1,l).
Mat d1_rows(const Mat& R) {
  const Eigen::Index n = R.rows();
  Mat out = Mat::Zero(n, R.cols());
  out.topRows(n - 1) += R.bottomRows(n - 1);
  out.bottomRows(n - 1) -= R.topRows(n - 1);
  return out;
}

Mat d1_cols(const Mat& R) {
  const Eigen::Index n = R.cols();
  Mat out = Mat::Zero(R.rows(), n);
  out.leftCols(n - 1) += R.rightCols(n - 1);
  out.rightCols(n - 1) -= R.leftCols(n - 1);
  return out;
}

}  // namespace

Eigen::MatrixXcd master_generator(const DensityMatrix& rho, const QbmParams& params) {
  params.validate();
  const auto& R = rho.kernel();
  const Eigen::Index n = R.rows();
  const double h = rho.x().step();
  const std::complex<double> ikin(0.0, 1.0 / (2.0 * params.M * h * h));
  Mat G = ikin * (d2_rows(R) - d2_cols(R));
  const Mat drift = (d1_rows(R) - d1_cols(R)) / (2.0 * h);
  const double dec = 2.0 * params.M * params.gamma * params.kT;
  for (Eigen::Index l = 0; l < n; ++l)
    for (Eigen::Index k = 0; k < n; ++k) {
      const double r = double(k - l) * h;
      G(k, l) -= params.gamma * r * drift(k, l) + dec * r * r * R(k, l);
    }
  return G;
}

double master_equation_max_dt(const Axis& x, const QbmParams& params) {
  params.validate();
  const double h = x.step();
  const double L = x.length();
  const double kin = 4.0 / (params.M * h * h);
  const double dis = 2.0 * params.gamma * L / h;
  const double dec = 2.0 * params.M * params.gamma * params.kT * L * L;
  return 2.5 / (kin + dis + dec);
}

DensityMatrix step_master_equation(const DensityMatrix& rho, double dt, const QbmParams& params) {
  const double dmax = master_equation_max_dt(rho.x(), params);
  if (!(dt > 0.0) || dt > dmax * (1.0 + 1e-12))
    throw StepSizeError("dt = " + std::to_string(dt) + " violates the RK4 bound " + std::to_string(dmax));
  const Axis& x = rho.x();
  const Mat& R = rho.kernel();
  auto f = [&](const Mat& S) { return master_generator(DensityMatrix(x, S), params); };
  const Mat k1 = f(R);
  const Mat k2 = f(R + 0.5 * dt * k1);
  const Mat k3 = f(R + 0.5 * dt * k2);
  const Mat k4 = f(R + dt * k3);
  Mat next = R + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  next = 0.5 * (next + next.adjoint()).eval();
  if (!next.allFinite()) throw DivergenceError("master equation state became non-finite");
  return DensityMatrix(x, std::move(next));
}

DensityMatrix evolve_master_equation(const DensityMatrix& rho0, double t, double dt, const QbmParams& params) {
  if (t < 0.0) throw DomainError("evolve_master_equation needs t >= 0");
  if (t == 0.0) return rho0;
  const auto n = static_cast<std::size_t>(std::ceil(t / dt - 1e-9));
  const double h = t / double(n);
  DensityMatrix rho = rho0;
  for (std::size_t k = 0; k < n; ++k) rho = step_master_equation(rho, h, params);
  return rho;
}

}  // namespace dhh
