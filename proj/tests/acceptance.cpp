// One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "dhh/ensemble_stats.hpp"
#include "dhh/histories.hpp"
#include "dhh/io.hpp"
#include "dhh/local_equilibrium.hpp"
#include "dhh/qbm_propagator.hpp"
#include "dhh/scenario.hpp"

using namespace dhh;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

int failures = 0;

void criterion(int id, double budget_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = s < budget_seconds;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("CRITERION %2d %s  %s  [%.2f s, budget %.0f s%s]\n", id, pass ? "PASS" : "FAIL", o.detail.c_str(), s,
              budget_seconds, in_time ? "" : ", over budget");
  std::fflush(stdout);
}

RunReport run_default(ScenarioKind k) {
  RunOptions o;
  o.write_artifacts = false;
  return run_scenario(default_config(k), o);
}

const Metric& metric(const RunReport& r, const char* name) {
  const Metric* m = r.find(name);
  if (!m) throw Error(std::string("missing metric ") + name);
  return *m;
}

std::string show(const Metric& m) {
  std::string s = m.name + "=" + fmt(m.value);
  if (m.threshold) s += (m.pass ? " ok" : " FAILED") + std::string(" (threshold ") + fmt(*m.threshold) + ")";
  return s;
}

// Random projector family: spectral windows of a random observable cut at random quantiles.
ProjectorFamily random_family(std::size_t d, std::mt19937_64& rng) {
  const auto A = Observable::from_hermitian(random_hermitian(d, rng));
  std::vector<double> ev(A.eigenvalues().data(), A.eigenvalues().data() + A.eigenvalues().size());
  std::sort(ev.begin(), ev.end());
  std::uniform_int_distribution<std::size_t> members(2, std::min<std::size_t>(4, d));
  const std::size_t m = members(rng);
  std::vector<double> cuts{-1e300};
  for (std::size_t k = 1; k < m; ++k) cuts.push_back(0.5 * (ev[k * d / m - 1] + ev[k * d / m]));
  cuts.push_back(1e300);
  ProjectorFamily fam;
  for (std::size_t k = 0; k < m; ++k)
    fam.push_back({"w" + std::to_string(k), window_projector(A, std::nextafter(cuts[k], 1e300), cuts[k + 1])});
  return fam;
}

}  // namespace

int main() {
  const auto diff_cfg = default_config(ScenarioKind::diffusion);
  const auto& dtol = diff_cfg.tolerances;

  criterion(1, 30.0, [&] {
    const auto r = run_default(ScenarioKind::diffusion);
    const auto& fp = metric(r, "D_fit_relative_error");
    const auto& an = metric(r, "D_fit_analytic_relative_error");
    return Outcome{fp.pass && an.pass, "D_fit(FP)=" + fmt(metric(r, "D_fit").value) + " " + show(fp) +
                                           "; D_fit(analytic)=" + fmt(metric(r, "D_fit_analytic").value) + " " +
                                           show(an)};
  });

  criterion(2, 30.0, [] {
    const auto r = run_default(ScenarioKind::maxwellization);
    const auto& m = metric(r, "maxwell_sup_distance");
    return Outcome{m.pass, show(m)};
  });

  criterion(3, 120.0, [] {
    const auto r = run_default(ScenarioKind::oracle_compare);
    const auto& a = metric(r, "l1_analytic_vs_fokker_planck");
    const auto& m = metric(r, "l1_master_vs_fokker_planck");
    return Outcome{a.pass && m.pass, show(a) + "; " + show(m)};
  });

  criterion(4, 10.0, [&] {
    const auto& p = diff_cfg.physics;
    const auto& g = diff_cfg.grid;
    const QbmParams P{p.number("M"), p.number("gamma"), p.number("kT")};
    const auto w0 = gaussian_wigner(Axis(g.number("q_min"), g.number("q_max"), g.count("n_q")),
                                    Axis(g.number("p_min"), g.number("p_max"), g.count("n_p")), 0.0, 0.0,
                                    p.number("var_q0"), p.number("var_p0"), 0.0);
    const double range = p.number("bin_range");
    const auto bins = static_cast<std::size_t>(std::llround(2.0 * range / p.number("bin_width")));
    const auto window = SmearingWindow::uniform(-range, range, bins);
    double worst = 0.0;
    for (double t : {p.number("t_start"), p.number("t_end")}) {
      const ProductEnsemble ens(1, propagate_analytic(w0, t, P));
      worst = std::max(worst, constitutive_residual(ens, window, P).relative_sup);
    }
    const double tol = dtol.number("constitutive_rel_sup");
    return Outcome{worst < tol, "binned relative sup residual at gamma t in {3, 10} = " + fmt(worst) + " < " + fmt(tol)};
  });

  criterion(5, 1.0, [] {
    const auto cfg = default_config(ScenarioKind::variance_scaling);
    const auto& p = cfg.physics;
    const Axis q(cfg.grid.number("q_min"), cfg.grid.number("q_max"), cfg.grid.count("n_q"));
    Marginal m{AxisKind::position, q, {}};
    for (std::size_t i = 0; i < q.size(); ++i) m.samples.push_back(std::exp(-0.5 * q[i] * q[i] / p.number("var_q0")));
    const auto window = SmearingWindow::uniform(p.number("window_lo"), p.number("window_hi"), p.count("bins"));
    double worst = 0.0;
    std::vector<double> lx, ly;
    for (double N : p.list("N")) {
      const ProductEnsemble ens(static_cast<std::size_t>(N), m);
      const auto rel = relative_fluctuation(ens, window);
      double mean = 0.0;
      for (std::size_t b = 0; b < window.bins(); ++b) {
        // Oracle: binomial variance N p (1 - p) over the squared mean (N p)^2.
        const double pb = m.mass_between(window.edges[b], window.edges[b + 1]) / m.integral();
        const double oracle = N * pb * (1.0 - pb) / (N * pb * N * pb);
        worst = std::max(worst, std::abs(rel.value[b] - oracle) / oracle);
        mean += rel.value[b];
      }
      lx.push_back(std::log(N));
      ly.push_back(std::log(mean));
    }
    double sxy = 0, sxx = 0, mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i] / double(lx.size()), my += ly[i] / double(ly.size());
    for (std::size_t i = 0; i < lx.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
    const double slope = sxy / sxx;
    const bool pass = worst < cfg.tolerances.number("fluctuation_rel") &&
                      std::abs(slope + 1.0) <= cfg.tolerances.number("slope_abs");
    return Outcome{pass, "max relative deviation from (1-p)/(Np) = " + fmt(worst) + ", log-log slope = " +
                             io::format_number(slope)};
  });

  criterion(6, 60.0, [] {
    const auto cfg = default_config(ScenarioKind::variance_scaling);
    std::mt19937_64 rng(*cfg.seed);
    double worst = 0.0;
    for (std::size_t B = 2; B <= 4; ++B)
      for (std::size_t N = 1; N <= 8; ++N) {
        const CVector psi = random_state(B, rng);
        const ToyHilbert h(B, N);
        HistorySpec hs;
        hs.slots.push_back({0.0, {occupation_family(h)}});
        const auto prob = history_probabilities(product_state(psi, N), hs);
        const auto comps = compositions(N, B);
        for (std::size_t c = 0; c < comps.size(); ++c) {
          // Multinomial oracle evaluated directly.
          double lg = std::lgamma(double(N) + 1.0), pr = 1.0;
          for (std::size_t b = 0; b < B; ++b) {
            lg -= std::lgamma(comps[c][b] + 1.0);
            pr *= std::pow(std::norm(psi(Eigen::Index(b))), comps[c][b]);
          }
          worst = std::max(worst, std::abs(std::exp(lg) * pr - prob[c]));
        }
      }
    const double tol = cfg.tolerances.number("multinomial_abs");
    return Outcome{worst < tol, "max |P_exact - multinomial| over N<=8, B<=4 = " + fmt(worst) + " < " + fmt(tol)};
  });

  criterion(7, 300.0, [] {
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<std::size_t> dims(2, 10), slots(2, 3), kind(0, 2);
    std::uniform_real_distribution<double> time(0.05, 1.5);
    double worst = -1.0;
    std::size_t configs = 0, pairs = 0;
    for (int trial = 0; trial < 120; ++trial) {
      const std::size_t mode = kind(rng);
      HistorySpec hs;
      CMatrix rho;
      std::optional<CVector> pure;
      const std::size_t ns = slots(rng);
      if (mode == 2) {
        // Distinguishable particles with position dephasing.
        const ToyHilbert h(2, 3);
        hs.evolution.one_body_hamiltonian = random_hermitian(2, rng);
        hs.evolution.space = h;
        hs.evolution.dephasing_rate = 0.5;
        const CVector a = random_state(2, rng);
        CMatrix r1 = 0.8 * a * a.adjoint();
        r1 += 0.2 * CMatrix::Identity(2, 2) / 2.0;
        rho = product_density(r1, 3);
        double t = 0.0;
        for (std::size_t k = 0; k < ns; ++k) {
          t += time(rng);
          hs.slots.push_back({t, {occupation_family(h)}});
        }
      } else {
        const std::size_t d = dims(rng);
        hs.evolution.hamiltonian = random_hermitian(d, rng);
        const CVector a = random_state(d, rng), b = random_state(d, rng);
        if (mode == 0) {
          pure = a;
        } else {
          rho = 0.6 * a * a.adjoint() + 0.4 * b * b.adjoint();
        }
        double t = 0.0;
        for (std::size_t k = 0; k < ns; ++k) {
          t += time(rng);
          hs.slots.push_back({t, {random_family(d, rng)}});
        }
      }
      const auto D = pure ? decoherence_functional(*pure, hs) : decoherence_functional(rho, hs);
      const auto b = check_dh_bound(D);
      worst = std::max(worst, b.max_excess);
      pairs += b.pairs_checked;
      ++configs;
    }
    // Two-time scenario runs contribute their own bound checks.
    for (auto k : {ScenarioKind::ehrenfest, ScenarioKind::conserved_decoherence}) {
      const auto r = run_default(k);
      const char* name = k == ScenarioKind::ehrenfest ? "two_time_bound_excess" : "bound_max_excess";
      worst = std::max(worst, metric(r, name).value);
    }
    return Outcome{worst <= 1e-10, std::to_string(configs) + " randomized configs, " + std::to_string(pairs) +
                                       " pairs; max(|D|^2 - p p') = " + fmt(worst) + " <= 1e-10"};
  });

  criterion(8, 10.0, [] {
    const auto r = run_default(ScenarioKind::conserved_decoherence);
    const auto& a = metric(r, "max_offdiagonal_two_time");
    const auto& b = metric(r, "max_offdiagonal_three_time");
    return Outcome{a.pass && b.pass, show(a) + "; " + show(b)};
  });

  criterion(9, 120.0, [] {
    const auto r = run_default(ScenarioKind::histories_nscaling);
    const auto& rate = metric(r, "decay_rate");
    const auto& ratio = metric(r, "epsilon_ratio");
    return Outcome{rate.pass && ratio.pass, "overlap=" + fmt(metric(r, "overlap").value) + " eps(1)=" +
                                                fmt(metric(r, "epsilon_1").value) + " eps(8)=" +
                                                fmt(metric(r, "epsilon_N_max").value) + "; r " + show(rate) +
                                                "; " + show(ratio)};
  });

  // Criteria sharing a scenario run are timed with the first of them.
  std::optional<RunReport> ehrenfest_run;
  auto ehrenfest = [&]() -> const RunReport& {
    if (!ehrenfest_run) ehrenfest_run = run_default(ScenarioKind::ehrenfest);
    return *ehrenfest_run;
  };
  criterion(10, 60.0, [&] {
    const auto& a = metric(ehrenfest(), "asymptotic_relative_error");
    const auto& b = metric(ehrenfest(), "argmax_offset_cells");
    const double n = metric(ehrenfest(), "instances_passing").value;
    return Outcome{a.pass && b.pass && n == 20.0, fmt(n) + "/20 instances; worst " + show(a) + "; worst " + show(b)};
  });

  criterion(11, 300.0, [&] {
    const auto& a = metric(ehrenfest(), "multi_time_argmax_offset_cells");
    const auto& p = metric(ehrenfest(), "complement_p");
    const auto& q = metric(ehrenfest(), "complement_p_bar");
    const auto& d = metric(ehrenfest(), "complement_bound_excess");
    return Outcome{a.pass && p.pass && q.pass && d.pass, show(a) + "; " + show(p) + "; " + show(q) + "; " + show(d) +
                                                             " (run shared with criterion 10)"};
  });

  std::optional<RunReport> lep_run;
  auto lep = [&]() -> const RunReport& {
    if (!lep_run) lep_run = run_default(ScenarioKind::local_equilibrium_peaking);
    return *lep_run;
  };
  criterion(12, 120.0, [&] {
    const auto& f = metric(lep(), "peaking_fraction");
    const auto& e = metric(lep(), "epsilon");
    return Outcome{f.pass && e.pass, show(f) + "; " + show(e)};
  });

  criterion(13, 60.0, [&] {
    const auto& r = metric(lep(), "continuity_convergence_ratio");
    return Outcome{r.pass, "coarse " + fmt(metric(lep(), "continuity_residual_coarse").value) + ", fine " +
                               fmt(metric(lep(), "continuity_residual_fine").value) + "; " + show(r) +
                               " (run shared with criterion 12)"};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
