#include "dhh/qbm_propagator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

namespace dhh {

namespace {

double gauss(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// Catmull-Rom interpolation on a uniform table; zero outside.
double cubic_at(const std::vector<double>& f, double u) {
  const auto n = static_cast<long>(f.size());
  if (u < 0.0 || u > double(n - 1)) return 0.0;
  long k = static_cast<long>(std::floor(u));
  if (k >= n - 1) k = n - 2;
  const double s = u - double(k);
  auto at = [&](long i) { return (i < 0 || i >= n) ? 0.0 : f[static_cast<std::size_t>(i)]; };
  const double p0 = at(k - 1), p1 = at(k), p2 = at(k + 1), p3 = at(k + 2);
  return p1 + 0.5 * s * (p2 - p0 + s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + s * (3.0 * (p1 - p2) + p3 - p0)));
}

// Limited Lax-Wendroff correction: MC limiter applied to the upwind and local jumps.
inline double mc_slope(double r, double s) {
  if (r * s <= 0.0) return 0.0;
  const double m = std::min({2.0 * std::abs(r), 0.5 * std::abs(r + s), 2.0 * std::abs(s)});
  return s > 0.0 ? m : -m;
}

inline double bernoulli(double w) { return w == 0.0 ? 1.0 : w / std::expm1(w); }

void check_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw DivergenceError("Fokker-Planck state became non-finite");
}

// Operator-split Kramers integrator on a fixed grid and step size.
class KramersStepper {
 public:
  KramersStepper(const WignerGrid& w, double dt, const QbmParams& params, const FokkerPlanckOptions& opts)
      : q_(w.q()), p_(w.p()), nq_(w.n_q()), np_(w.n_p()), dt_(dt), opts_(opts) {
    const double dmax = fokker_planck_max_dt(w, params);
    if (!(dt > 0.0) || dt > dmax * (1.0 + 1e-12))
      throw StepSizeError("dt = " + std::to_string(dt) + " violates the stability bound " + std::to_string(dmax));
    velocity_.resize(np_);
    for (std::size_t j = 0; j < np_; ++j) velocity_[j] = p_[j] / params.M;
    build_momentum_sector(params);
    flux_.resize((nq_ + 1) * np_);
    scratch_.resize(np_);
  }

  void advect(std::vector<double>& W, double h) const {
    const double dq = q_.step();
    const bool periodic = opts_.q_boundary == QBoundary::periodic;
    const long n = static_cast<long>(nq_);
    auto row = [&](long i) -> long {
      if (periodic) return ((i % n) + n) % n;
      return std::clamp(i, 0L, n - 1);
    };
    for (long k = 0; k <= n; ++k) {
      double* F = &flux_[static_cast<std::size_t>(k) * np_];
      if (!periodic && (k == 0 || k == n)) {
        std::fill(F, F + np_, 0.0);
        continue;
      }
      const double* Wm2 = &W[static_cast<std::size_t>(row(k - 2)) * np_];
      const double* Wm1 = &W[static_cast<std::size_t>(row(k - 1)) * np_];
      const double* W0 = &W[static_cast<std::size_t>(row(k)) * np_];
      const double* Wp1 = &W[static_cast<std::size_t>(row(k + 1)) * np_];
      for (std::size_t j = 0; j < np_; ++j) {
        const double v = velocity_[j];
        const double nu = std::abs(v) * h / dq;
        const double jump = W0[j] - Wm1[j];
        if (v >= 0.0) {
          F[j] = v * (Wm1[j] + 0.5 * (1.0 - nu) * mc_slope(Wm1[j] - Wm2[j], jump));
        } else {
          F[j] = v * (W0[j] - 0.5 * (1.0 - nu) * mc_slope(Wp1[j] - W0[j], jump));
        }
      }
    }
    const double c = h / dq;
    for (std::size_t i = 0; i < nq_; ++i) {
      double* Wi = &W[i * np_];
      const double* Fl = &flux_[i * np_];
      const double* Fr = &flux_[(i + 1) * np_];
      for (std::size_t j = 0; j < np_; ++j) Wi[j] -= c * (Fr[j] - Fl[j]);
    }
  }

  // Crank-Nicolson on the Chang-Cooper tridiagonal operator, row by row.
  void momentum(std::vector<double>& W) const {
    auto& d = scratch_;
    for (std::size_t i = 0; i < nq_; ++i) {
      double* x = &W[i * np_];
      for (std::size_t j = 0; j < np_; ++j) {
        double r = (1.0 + 0.5 * dt_ * diag_[j]) * x[j];
        if (j > 0) r += 0.5 * dt_ * lower_[j] * x[j - 1];
        if (j + 1 < np_) r += 0.5 * dt_ * upper_[j] * x[j + 1];
        d[j] = r;
      }
      // Forward sweep uses precomputed factors of (I - dt/2 L).
      for (std::size_t j = 1; j < np_; ++j) d[j] -= mult_[j] * d[j - 1];
      x[np_ - 1] = d[np_ - 1] / piv_[np_ - 1];
      for (std::size_t j = np_ - 1; j-- > 0;) x[j] = (d[j] + 0.5 * dt_ * upper_[j] * x[j + 1]) / piv_[j];
    }
  }

  double dt() const { return dt_; }

 private:
  void build_momentum_sector(const QbmParams& params) {
    const double D = 2.0 * params.M * params.gamma * params.kT;
    const double dp = p_.step();
    const double c = D / (dp * dp);
    lower_.assign(np_, 0.0);
    diag_.assign(np_, 0.0);
    upper_.assign(np_, 0.0);
    for (std::size_t j = 0; j + 1 < np_; ++j) {
      const double pm = 0.5 * (p_[j] + p_[j + 1]);
      const double w = pm * dp / (params.M * params.kT);
      const double bp = bernoulli(w), bm = bernoulli(-w);
      upper_[j] += c * bm;
      diag_[j] -= c * bp;
      lower_[j + 1] += c * bp;
      diag_[j + 1] -= c * bm;
    }
    mult_.assign(np_, 0.0);
    piv_.assign(np_, 0.0);
    const double h = 0.5 * dt_;
    piv_[0] = 1.0 - h * diag_[0];
    for (std::size_t j = 1; j < np_; ++j) {
      mult_[j] = (-h * lower_[j]) / piv_[j - 1];
      piv_[j] = (1.0 - h * diag_[j]) - mult_[j] * (-h * upper_[j - 1]);
    }
  }

  Axis q_, p_;
  std::size_t nq_, np_;
  double dt_;
  FokkerPlanckOptions opts_;
  std::vector<double> velocity_;
  std::vector<double> lower_, diag_, upper_, mult_, piv_;
  mutable std::vector<double> flux_;
  mutable std::vector<double> scratch_;
};

void warn_if_boundary_mass(const WignerGrid& w, const FokkerPlanckOptions& opts, Diagnostics* diag) {
  if (!diag) return;
  double peak = 0.0, edge = 0.0;
  for (std::size_t i = 0; i < w.n_q(); ++i)
    for (std::size_t j = 0; j < w.n_p(); ++j) {
      const double a = std::abs(w(i, j));
      peak = std::max(peak, a);
      const bool q_edge = opts.q_boundary == QBoundary::zero_flux && (i == 0 || i + 1 == w.n_q());
      if (q_edge || j == 0 || j + 1 == w.n_p()) edge = std::max(edge, a);
    }
  if (edge > 1e-6 * peak)
    diag->warn("Fokker-Planck state reaches the grid boundary (edge/peak = " + std::to_string(edge / peak) + ")");
}

}  // namespace

void QbmParams::validate() const {
  if (!(M > 0.0) || !std::isfinite(M)) throw DomainError("M must be positive");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be positive");
  if (!(kT > 0.0) || !std::isfinite(kT)) throw DomainError("kT must be positive");
}

ClassicalPoint classical_path(double q0, double p0, double t, const QbmParams& params) {
  params.validate();
  if (t < 0.0) throw DomainError("classical_path needs t >= 0");
  const double g2 = 2.0 * params.gamma;
  return {q0 + p0 * (-std::expm1(-g2 * t)) / (params.M * g2), p0 * std::exp(-g2 * t)};
}

PropagatorCoefficients longtime_coefficients(const QbmParams& params, double t, Diagnostics* diag) {
  params.validate();
  if (!(t > 0.0)) throw DomainError("longtime_coefficients needs t > 0");
  if (params.gamma * t < 3.0) {
    const std::string msg = "gamma t = " + std::to_string(params.gamma * t) + " is below the asymptotic regime (3)";
    if (!diag) throw DomainError(msg);
    diag->warn(msg);
  }
  return {1.0 / (2.0 * params.M * params.kT), params.M * params.gamma / (2.0 * params.kT * t),
          -1.0 / (2.0 * params.kT * t), t};
}

KernelCovariance kernel_covariance(const QbmParams& params, double t) {
  params.validate();
  if (t < 0.0) throw DomainError("kernel_covariance needs t >= 0");
  const double lam = 2.0 * params.gamma;
  const double Dp = 2.0 * params.M * params.gamma * params.kT;
  const double u = lam * t;
  const double e1 = -std::expm1(-u);
  const double e2 = -std::expm1(-2.0 * u);
  // lam * [t - (2/lam)(1 - e^{-u}) + (1/(2 lam))(1 - e^{-2u})]
  const double bracket = u < 1e-2 ? u * u * u * (1.0 / 3.0 - u / 4.0 + 7.0 * u * u / 60.0)
                                  : u - 2.0 * e1 + 0.5 * e2;
  KernelCovariance s;
  s.pp = (Dp / lam) * e2;
  s.qp = Dp / (params.M * lam * lam) * e1 * e1;
  s.qq = 2.0 * Dp / (params.M * params.M * lam * lam * lam) * bracket;
  return s;
}

KernelCovariance covariance_from_coefficients(const PropagatorCoefficients& c) {
  const double det = 4.0 * c.alpha * c.beta - c.epsilon * c.epsilon;
  if (!(c.alpha > 0.0 && c.beta > 0.0 && det > 0.0)) throw DomainError("coefficients are not normalizable");
  return {2.0 * c.alpha / det, -c.epsilon / det, 2.0 * c.beta / det};
}

PropagatorCoefficients coefficients_from_covariance(const KernelCovariance& s, double t) {
  const double det = s.qq * s.pp - s.qp * s.qp;
  if (!(s.qq > 0.0 && s.pp > 0.0 && det > 0.0)) throw DomainError("covariance is not positive definite");
  return {s.qq / (2.0 * det), s.pp / (2.0 * det), -s.qp / det, t};
}

WignerGrid propagate_analytic(const WignerGrid& w0, double t, const QbmParams& params, KernelMode mode,
                              Diagnostics* diag) {
  params.validate();
  if (t < 0.0) throw DomainError("propagate_analytic needs t >= 0");
  if (mode == KernelMode::exact && t == 0.0) return normalize(w0);

  const KernelCovariance S = mode == KernelMode::exact
                                 ? kernel_covariance(params, t)
                                 : covariance_from_coefficients(longtime_coefficients(params, t, diag));
  const Axis& qa = w0.q();
  const Axis& pa = w0.p();
  const std::size_t nq = qa.size(), np = pa.size();
  const double dq = qa.step(), dp = pa.step();

  const double kappa = S.qp / S.pp;
  const double s2 = S.qq - kappa * S.qp;
  if (S.pp < dp * dp || s2 < dq * dq)
    throw ResolutionError("kernel is narrower than the grid spacing at t = " + std::to_string(t) +
                          "; use evolve_fokker_planck for short times");

  const double a = std::exp(-2.0 * params.gamma * t);
  const double c = -std::expm1(-2.0 * params.gamma * t) / (2.0 * params.M * params.gamma);

  // Sampled q-kernel on lattice offsets.
  const long half = static_cast<long>(std::ceil(9.0 * std::sqrt(s2) / dq));
  std::vector<double> gk(static_cast<std::size_t>(2 * half + 1));
  for (long m = -half; m <= half; ++m) gk[static_cast<std::size_t>(m + half)] = dq * gauss(double(m) * dq, s2);

  std::vector<double> result(nq * np, 0.0);
  std::vector<double> column(nq);
  std::vector<double> table;
  std::vector<double> pk(np);

  for (std::size_t j0 = 0; j0 < np; ++j0) {
    const double p0 = pa[j0];
    double colmax = 0.0;
    for (std::size_t i0 = 0; i0 < nq; ++i0) {
      column[i0] = qa.weight(i0) / dq * w0(i0, j0);
      colmax = std::max(colmax, std::abs(column[i0]));
    }
    if (colmax == 0.0) continue;

    // z = q - c p0 - kappa (p - a p0) spans the q range shifted by these extremes.
    const double sh1 = c * p0 + kappa * (pa.min() - a * p0);
    const double sh2 = c * p0 + kappa * (pa.max() - a * p0);
    const long lo = static_cast<long>(std::floor(-std::max(sh1, sh2) / dq)) - 2;
    const long hi = static_cast<long>(nq) - 1 + static_cast<long>(std::ceil(-std::min(sh1, sh2) / dq)) + 2;
    table.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);
    for (long k = lo; k <= hi; ++k) {
      double acc = 0.0;
      const long i_lo = std::max(0L, k - half), i_hi = std::min(static_cast<long>(nq) - 1, k + half);
      for (long i0 = i_lo; i0 <= i_hi; ++i0)
        acc += gk[static_cast<std::size_t>(k - i0 + half)] * column[static_cast<std::size_t>(i0)];
      table[static_cast<std::size_t>(k - lo)] = acc;
    }

    const double wp = pa.weight(j0);
    for (std::size_t j = 0; j < np; ++j) pk[j] = wp * gauss(pa[j] - a * p0, S.pp);
    for (std::size_t j = 0; j < np; ++j) {
      if (pk[j] < 1e-300) continue;
      const double shift = c * p0 + kappa * (pa[j] - a * p0);
      const double u0 = -shift / dq - double(lo);
      double* out = &result[j];
      for (std::size_t i = 0; i < nq; ++i) out[i * np] += pk[j] * cubic_at(table, u0 + double(i));
    }
  }

  WignerGrid w(qa, pa, std::move(result));
  const double m0 = w0.integral();
  const double m1 = w.integral();
  const double loss = std::abs(m1 / m0 - 1.0);
  if (loss > 1e-5)
    throw ResolutionError("propagated state leaves the grid (relative mass change " + std::to_string(loss) + ")");
  if (loss > 1e-7) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", loss);
    warn(diag, std::string("propagate_analytic: relative mass change ") + buf);
  }
  return normalize(w);
}

double fokker_planck_max_dt(const WignerGrid& w, const QbmParams& params) {
  params.validate();
  const double pmax = std::max(std::abs(w.p().min()), std::abs(w.p().max()));
  const double adv = w.q().step() * params.M / pmax;
  const double dif = w.p().step() * w.p().step() / (2.0 * params.M * params.gamma * params.kT);
  const double rel = 1.0 / (4.0 * params.gamma);
  return 0.4 * std::min({adv, dif, rel});
}

WignerGrid step_fokker_planck(const WignerGrid& w, double dt, const QbmParams& params,
                              const FokkerPlanckOptions& opts) {
  KramersStepper st(w, dt, params, opts);
  std::vector<double> v = w.values();
  st.advect(v, 0.5 * dt);
  st.momentum(v);
  st.advect(v, 0.5 * dt);
  check_finite(v);
  return WignerGrid(w.q(), w.p(), std::move(v));
}

std::vector<WignerGrid> evolve_fokker_planck_series(const WignerGrid& w0, const std::vector<double>& times,
                                                    double dt, const QbmParams& params,
                                                    const FokkerPlanckOptions& opts, Diagnostics* diag) {
  params.validate();
  std::vector<WignerGrid> out;
  out.reserve(times.size());
  std::vector<double> v = w0.values();
  double now = 0.0;
  for (double target : times) {
    if (target < now) throw DomainError("snapshot times must be non-decreasing and >= 0");
    const double span = target - now;
    if (span > 0.0) {
      const auto n = static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
      KramersStepper st(w0, span / double(n), params, opts);
      // Adjacent half advections are fused into full steps.
      st.advect(v, 0.5 * st.dt());
      for (std::size_t k = 0; k < n; ++k) {
        st.momentum(v);
        st.advect(v, k + 1 < n ? st.dt() : 0.5 * st.dt());
        if ((k & 63) == 63) check_finite(v);
      }
      check_finite(v);
      now = target;
    }
    out.emplace_back(w0.q(), w0.p(), v);
  }
  if (!out.empty()) warn_if_boundary_mass(out.back(), opts, diag);
  return out;
}

WignerGrid evolve_fokker_planck(const WignerGrid& w0, double t, double dt, const QbmParams& params,
                                const FokkerPlanckOptions& opts, Diagnostics* diag) {
  auto s = evolve_fokker_planck_series(w0, {t}, dt, params, opts, diag);
  return std::move(s.front());
}

double diffusion_coefficient(const QbmParams& params) {
  params.validate();
  return params.kT / (2.0 * params.M * params.gamma);
}

DiffusionFit fit_diffusion(const std::vector<double>& times, const std::vector<double>& var_q,
                           const QbmParams& params) {
  params.validate();
  if (times.size() != var_q.size()) throw FitQualityError("times and variances differ in length");
  if (times.size() < 4) throw FitQualityError("diffusion fit needs at least 4 samples");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (params.gamma * times[i] < 3.0) throw DomainError("diffusion fit samples must satisfy gamma t >= 3");
    if (i > 0 && !(times[i] > times[i - 1])) throw FitQualityError("sample times must be strictly increasing");
    if (i > 0 && !(var_q[i] > var_q[i - 1])) throw FitQualityError("variance series is not monotone increasing");
  }
  const double n = double(times.size());
  double tm = 0.0, vm = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    tm += times[i];
    vm += var_q[i];
  }
  tm /= n;
  vm /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    sxy += (times[i] - tm) * (var_q[i] - vm);
    sxx += (times[i] - tm) * (times[i] - tm);
  }
  DiffusionFit f;
  f.D_fit = 0.5 * sxy / sxx;
  f.D_theory = diffusion_coefficient(params);
  f.relative_error = std::abs(f.D_fit - f.D_theory) / f.D_theory;
  f.t_start = times.front();
  f.t_end = times.back();
  return f;
}

DiffusionFit fit_diffusion(const std::vector<double>& times, const std::vector<Marginal>& marginals,
                           const QbmParams& params) {
  std::vector<double> v;
  v.reserve(marginals.size());
  for (const auto& m : marginals) {
    if (m.kind != AxisKind::position) throw FitQualityError("diffusion fit needs position marginals");
    v.push_back(m.variance());
  }
  return fit_diffusion(times, v, params);
}

ConstitutiveResidual constitutive_check(const WignerGrid& w, const QbmParams& params) {
  params.validate();
  const Marginal f = position_marginal(w);
  const std::size_t nq = w.n_q();
  const double dq = w.q().step();
  const double coef = params.kT / (2.0 * params.gamma);
  ConstitutiveResidual r;
  r.q = w.q();
  r.current.assign(nq, 0.0);
  r.gradient_term.assign(nq, 0.0);
  r.residual.assign(nq, 0.0);
  double s_cur = 0.0, s_grad = 0.0, s_res = 0.0;
  for (std::size_t i = 0; i < nq; ++i) {
    double g = 0.0;
    for (std::size_t j = 0; j < w.n_p(); ++j) g += w.p().weight(j) * w.p()[j] * w(i, j);
    double df;
    if (i == 0)
      df = (-3.0 * f.samples[0] + 4.0 * f.samples[1] - f.samples[2]) / (2.0 * dq);
    else if (i + 1 == nq)
      df = (3.0 * f.samples[nq - 1] - 4.0 * f.samples[nq - 2] + f.samples[nq - 3]) / (2.0 * dq);
    else
      df = (f.samples[i + 1] - f.samples[i - 1]) / (2.0 * dq);
    r.current[i] = g;
    r.gradient_term[i] = coef * df;
    r.residual[i] = g + coef * df;
    s_cur = std::max(s_cur, std::abs(g));
    s_grad = std::max(s_grad, std::abs(coef * df));
    s_res = std::max(s_res, std::abs(r.residual[i]));
  }
  const double scale = std::max(s_cur, s_grad);
  r.relative_sup = scale > 0.0 ? s_res / scale : 0.0;
  return r;
}

}  // namespace dhh
