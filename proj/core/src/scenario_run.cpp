#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <numeric>
#include <random>

#include <json.hpp>

#include "dhh/ensemble_stats.hpp"
#include "dhh/histories.hpp"
#include "dhh/io.hpp"
#include "dhh/local_equilibrium.hpp"
#include "dhh/qbm_propagator.hpp"
#include "dhh/scenario.hpp"

namespace dhh {

namespace {

namespace fs = std::filesystem;

const char* comparison_symbol(Comparison c) {
  switch (c) {
    case Comparison::less: return "<";
    case Comparison::less_equal: return "<=";
    case Comparison::greater: return ">";
    case Comparison::greater_equal: return ">=";
  }
  return "?";
}

bool compare(double v, double t, Comparison c) {
  switch (c) {
    case Comparison::less: return v < t;
    case Comparison::less_equal: return v <= t;
    case Comparison::greater: return v > t;
    case Comparison::greater_equal: return v >= t;
  }
  return false;
}

class Context {
 public:
  Context(const ScenarioConfig& c, const RunOptions& o, RunReport& r) : cfg(c), opts(o), report(r) {}

  const ScenarioConfig& cfg;
  const RunOptions& opts;
  RunReport& report;
  Diagnostics diag;

  const ParamTable& physics() const { return cfg.physics; }
  const ParamTable& grid() const { return cfg.grid; }

  void check(const std::string& name, double value, const std::string& tolerance, Comparison c) {
    const double t = cfg.tolerances.number(tolerance);
    report.metrics.push_back({name, value, t, c, std::isfinite(value) && compare(value, t, c)});
  }
  void info(const std::string& name, double value) { report.metrics.push_back({name, value, std::nullopt}); }

  void emit(const std::string& file, const std::string& content) {
    if (!opts.write_artifacts) return;
    io::write_atomic(cfg.output_dir / file, content);
    report.artifacts.push_back(file);
  }
  void emit_grid(const WignerGrid& w, const std::string& stem) {
    if (!opts.write_artifacts) return;
    io::write_wigner(w, cfg.output_dir, stem);
    report.artifacts.push_back(stem + ".csv");
    report.artifacts.push_back(stem + ".json");
  }

  std::mt19937_64 rng() const { return std::mt19937_64(cfg.seed.value_or(0)); }
};

QbmParams qbm(const ParamTable& p) { return {p.number("M"), p.number("gamma"), p.number("kT")}; }

Axis axis(const ParamTable& g, const std::string& lo, const std::string& hi, const std::string& n) {
  return Axis(g.number(lo), g.number(hi), g.count(n));
}

double step_or_bound(const ParamTable& g, const WignerGrid& w, const QbmParams& P) {
  const double dt = g.number("dt");
  return dt > 0.0 ? dt : fokker_planck_max_dt(w, P);
}

// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

double max_offdiagonal(const DecoherenceMatrix& D) {
  double m = 0.0;
  for (Eigen::Index a = 0; a < D.D.rows(); ++a)
    for (Eigen::Index b = 0; b < D.D.cols(); ++b)
      if (a != b) m = std::max(m, std::abs(D.D(a, b)));
  return m;
}

void run_diffusion(Context& cx) {
  const auto& p = cx.physics();
  const QbmParams P = qbm(p);
  const auto w0 = gaussian_wigner(axis(cx.grid(), "q_min", "q_max", "n_q"), axis(cx.grid(), "p_min", "p_max", "n_p"),
                                  0.0, 0.0, p.number("var_q0"), p.number("var_p0"), 0.0);
  const double dt = step_or_bound(cx.grid(), w0, P);
  const std::size_t n = p.count("samples");
  std::vector<double> times;
  for (std::size_t k = 0; k < n; ++k)
    times.push_back(p.number("t_start") + (p.number("t_end") - p.number("t_start")) * double(k) / double(n - 1));

  const auto fp = evolve_fokker_planck_series(w0, times, dt, P, {}, &cx.diag);
  std::vector<io::MomentRow> rows_fp, rows_an;
  std::vector<double> var_fp, var_an;
  WignerGrid last = w0;
  for (std::size_t k = 0; k < n; ++k) {
    rows_fp.push_back(io::moment_row(times[k], fp[k]));
    var_fp.push_back(rows_fp.back().m.var_q);
    last = propagate_analytic(w0, times[k], P, KernelMode::exact, &cx.diag);
    rows_an.push_back(io::moment_row(times[k], last));
    var_an.push_back(rows_an.back().m.var_q);
  }
  const auto fit_fp = fit_diffusion(times, var_fp, P);
  const auto fit_an = fit_diffusion(times, var_an, P);
  cx.info("dt", dt);
  cx.info("D_theory", fit_fp.D_theory);
  cx.info("D_fit", fit_fp.D_fit);
  cx.check("D_fit_relative_error", fit_fp.relative_error, "diffusion_fp_rel", Comparison::less);
  cx.info("D_fit_analytic", fit_an.D_fit);
  cx.check("D_fit_analytic_relative_error", fit_an.relative_error, "diffusion_analytic_rel", Comparison::less);

  const double range = p.number("bin_range");
  const auto bins = static_cast<std::size_t>(std::llround(2.0 * range / p.number("bin_width")));
  const ProductEnsemble ens(1, last);
  const auto con = constitutive_residual(ens, SmearingWindow::uniform(-range, range, bins), P);
  cx.check("constitutive_relative_sup", con.relative_sup, "constitutive_rel_sup", Comparison::less);

  cx.emit("time_series_fokker_planck.csv", io::time_series_csv(rows_fp));
  cx.emit("time_series_analytic.csv", io::time_series_csv(rows_an));
  cx.emit("momentum_density.csv", io::density_field_csv(con.momentum));
  cx.emit("number_density.csv", io::density_field_csv(mean_number_density(ens, SmearingWindow::uniform(-range, range, bins))));
  cx.emit("constitutive_residual.csv", io::density_field_csv(con.residual));
  cx.emit_grid(fp.back(), "wigner_fokker_planck_final");
}

void run_maxwellization(Context& cx) {
  const auto& p = cx.physics();
  const QbmParams P = qbm(p);
  const auto w0 = gaussian_wigner(axis(cx.grid(), "q_min", "q_max", "n_q"), axis(cx.grid(), "p_min", "p_max", "n_p"),
                                  0.0, p.number("mean_p0"), p.number("var_q0"), p.number("var_p0"), 0.0);
  const double dt = step_or_bound(cx.grid(), w0, P);
  const auto w = evolve_fokker_planck(w0, p.number("t"), dt, P, {}, &cx.diag);
  const Marginal mp = momentum_marginal(w);
  const double mass = mp.integral();
  double z = 0.0;
  std::vector<double> maxwell(mp.axis.size());
  for (std::size_t j = 0; j < mp.axis.size(); ++j) {
    maxwell[j] = std::exp(-mp.axis[j] * mp.axis[j] / (2.0 * P.M * P.kT));
    z += mp.axis.weight(j) * maxwell[j];
  }
  double sup = 0.0;
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < mp.axis.size(); ++j) {
    const double a = mp.samples[j] / mass, b = maxwell[j] / z;
    sup = std::max(sup, std::abs(a - b));
    rows.push_back({mp.axis[j], a, b});
  }
  cx.info("dt", dt);
  cx.info("mean_p_final", mp.mean());
  cx.info("var_p_final", mp.variance());
  cx.check("maxwell_sup_distance", sup, "maxwell_sup", Comparison::less);
  cx.emit("momentum_marginal.csv", io::csv_table({"p", "density", "maxwell"}, rows));
  cx.emit_grid(w, "wigner_final");
}

void run_oracle_compare(Context& cx) {
  const auto& p = cx.physics();
  const auto& g = cx.grid();
  const QbmParams P = qbm(p);
  const auto w0 = gaussian_wigner(axis(g, "q_min", "q_max", "n_q"), axis(g, "p_min", "p_max", "n_p"), 0.0, 0.0,
                                  p.number("var_q0"), p.number("var_p0"), 0.0);
  const double ta = p.number("t_analytic");
  const auto wa = propagate_analytic(w0, ta, P, KernelMode::exact, &cx.diag);
  const auto wf = evolve_fokker_planck(w0, ta, step_or_bound(g, w0, P), P, {}, &cx.diag);
  cx.check("l1_analytic_vs_fokker_planck", l1_distance(wa, wf), "oracle_l1_analytic", Comparison::less);

  const Axis x = axis(g, "x_min", "x_max", "n_x");
  const auto [qa, pa] = conjugate_wigner_axes(x, g.count("n_p_master"));
  const auto v0 = gaussian_wigner(qa, pa, 0.0, 0.0, p.number("var_q0"), p.number("var_p0"), 0.0);
  const auto rho0 = wigner_to_density(v0, &cx.diag);
  const double tm = p.number("t_master");
  const double mdt = g.number("master_dt");
  const auto rho = evolve_master_equation(rho0, tm, mdt, P);
  const auto wm = density_to_wigner(rho, g.count("n_p_master"));
  const auto vf = evolve_fokker_planck(v0, tm, std::min(mdt, fokker_planck_max_dt(v0, P)), P, {}, &cx.diag);
  cx.info("master_trace", rho.trace());
  cx.info("master_hermiticity_error", rho.hermiticity_error());
  cx.check("l1_master_vs_fokker_planck", l1_distance(wm, vf), "oracle_l1_master", Comparison::less);

  cx.emit_grid(wa, "wigner_analytic");
  cx.emit_grid(wf, "wigner_fokker_planck");
  cx.emit_grid(wm, "wigner_master");
  cx.emit_grid(vf, "wigner_fokker_planck_conjugate");
}

void run_variance_scaling(Context& cx) {
  const auto& p = cx.physics();
  const Axis q = axis(cx.grid(), "q_min", "q_max", "n_q");
  Marginal m{AxisKind::position, q, {}};
  const double mu = p.number("mean_q0"), var = p.number("var_q0");
  for (std::size_t i = 0; i < q.size(); ++i) m.samples.push_back(std::exp(-0.5 * (q[i] - mu) * (q[i] - mu) / var));
  const auto window = SmearingWindow::uniform(p.number("window_lo"), p.number("window_hi"), p.count("bins"));

  std::vector<double> logN, logF;
  double worst = 0.0;
  std::vector<std::vector<double>> rows;
  std::optional<ProductEnsemble> first;
  for (double Nd : p.list("N")) {
    if (Nd != std::floor(Nd)) throw ValidationError("physics.N", "N entries must be integers");
    const ProductEnsemble ens(static_cast<std::size_t>(Nd), m);
    if (!first) first = ens;
    const auto rel = relative_fluctuation(ens, window);
    double mean_rel = 0.0;
    for (std::size_t b = 0; b < window.bins(); ++b) {
      // Independent path: mass of the interpolated marginal inside the bin.
      const double pb = ens.position().mass_between(window.edges[b], window.edges[b + 1]);
      const double theory = (1.0 - pb) / (Nd * pb);
      worst = std::max(worst, std::abs(rel.value[b] - theory) / theory);
      mean_rel += rel.value[b] / double(window.bins());
      rows.push_back({Nd, window.center(b), pb, rel.value[b], theory});
    }
    logN.push_back(std::log(Nd));
    logF.push_back(std::log(mean_rel));
    cx.emit("occupation_N" + std::to_string(static_cast<long long>(Nd)) + ".csv",
            io::density_field_csv(number_density_variance(ens, window)));
  }
  cx.check("fluctuation_max_relative_deviation", worst, "fluctuation_rel", Comparison::less);
  const double s = slope(logN, logF);
  cx.info("loglog_slope", s);
  cx.check("loglog_slope_error", std::abs(s + 1.0), "slope_abs", Comparison::less_equal);
  cx.emit("relative_fluctuation.csv", io::csv_table({"N", "bin_center", "p", "relative_fluctuation", "theory"}, rows));

  auto rng = cx.rng();
  double dev = 0.0;
  std::vector<std::vector<double>> mrows;
  for (std::size_t B = 2; B <= p.count("exact_B_max"); ++B)
    for (std::size_t N = 1; N <= p.count("exact_N_max"); ++N) {
      const CVector psi = random_state(B, rng);
      const ToyHilbert h(B, N);
      HistorySpec hs;
      hs.slots.push_back({0.0, {occupation_family(h)}});
      const auto prob = history_probabilities(product_state(psi, N), hs, &cx.diag);
      std::vector<double> pb(B);
      for (std::size_t b = 0; b < B; ++b) pb[b] = std::norm(psi(Eigen::Index(b)));
      const auto md = multinomial_distribution(N, pb, {p.count("exact_N_max"), p.count("exact_B_max")});
      const auto comps = compositions(N, B);
      double d = 0.0;
      for (std::size_t c = 0; c < comps.size(); ++c)
        for (std::size_t k = 0; k < md.outcomes.size(); ++k)
          if (md.outcomes[k] == comps[c]) d = std::max(d, std::abs(md.probability[k] - prob[c]));
      dev = std::max(dev, d);
      mrows.push_back({double(B), double(N), d});
    }
  cx.check("multinomial_max_abs_deviation", dev, "multinomial_abs", Comparison::less);
  cx.emit("multinomial_check.csv", io::csv_table({"B", "N", "max_abs_deviation"}, mrows));

  const auto smp = sample_occupations(*first, window, p.count("draws"), rng);
  double zmax = 0.0;
  for (std::size_t b = 0; b < smp.mean.size(); ++b) {
    if (smp.mean_stderr[b] <= 0.0) continue;
    zmax = std::max(zmax, std::abs(smp.mean[b] - double(smp.N) * smp.bin_probability[b]) / smp.mean_stderr[b]);
  }
  cx.check("sampling_max_z", zmax, "sampling_z", Comparison::less);
}

void run_histories_nscaling(Context& cx) {
  const auto& p = cx.physics();
  auto amplitudes = [](const std::vector<double>& pr) {
    CVector v(2);
    v << std::sqrt(pr[0]), std::sqrt(pr[1]);
    return CVector(v / v.norm());
  };
  const CVector psi = amplitudes(p.list("psi")), chi = amplitudes(p.list("chi"));
  const double sigma = p.number("sigma");
  const std::complex<double> w(1.0 / std::sqrt(2.0), 0.0);
  cx.info("overlap", std::abs(chi.dot(psi)));

  std::vector<double> Ns, logs, eps;
  std::vector<std::vector<double>> rows;
  double excess = 0.0;
  const std::size_t nmax = p.count("N_max");
  for (std::size_t N = 1; N <= nmax; ++N) {
    const ToyHilbert h(2, N);
    const auto state = superposition_state(psi, chi, N, w, w);
    const double n = double(N);
    ProjectorFamily fam;
    fam.push_back({"psi-branch", gaussian_occupation_projector(
                                     h, {n * std::norm(psi(0)), n * std::norm(psi(1))}, sigma)});
    fam.push_back({"chi-branch", gaussian_occupation_projector(
                                     h, {n * std::norm(chi(0)), n * std::norm(chi(1))}, sigma)});
    HistorySpec hs;
    hs.slots.push_back({0.0, {fam}});
    const auto D = decoherence_functional(state, hs, &cx.diag);
    const double e = consistency_epsilon(D, &cx.diag);
    excess = std::max(excess, check_dh_bound(D).max_excess);
    Ns.push_back(n);
    eps.push_back(e);
    logs.push_back(std::log(e));
    rows.push_back({n, e, D.D(0, 0).real(), D.D(1, 1).real(), std::abs(D.D(0, 1))});
    if (N == nmax) cx.emit("decoherence_N" + std::to_string(N) + ".json", io::decoherence_json(D, e));
  }
  const double r = std::exp(slope(Ns, logs));
  cx.info("epsilon_1", eps.front());
  cx.info("epsilon_N_max", eps.back());
  cx.check("decay_rate", r, "decay_rate_max", Comparison::less);
  cx.check("epsilon_ratio", eps.back() / eps.front(), "decay_ratio_max", Comparison::less);
  cx.info("bound_max_excess", excess);
  cx.emit("epsilon_vs_N.csv", io::csv_table({"N", "epsilon", "p_psi", "p_chi", "abs_D_offdiag"}, rows));
}

void run_ehrenfest(Context& cx) {
  const auto& p = cx.physics();
  const std::size_t d = p.count("dim");
  const double ratio = p.number("sigma_ratio");
  auto rng = cx.rng();
  const CMatrix H0 = CMatrix::Zero(Eigen::Index(d), Eigen::Index(d));
  const double asym_tol = cx.cfg.tolerances.number("asymptotic_rel");
  const double cell_tol = cx.cfg.tolerances.number("argmax_cells");

  double worst_rel = 0.0, worst_cells = 0.0;
  std::size_t passing = 0;
  std::vector<std::vector<double>> rows;
  const std::size_t instances = p.count("instances");
  for (std::size_t i = 0; i < instances; ++i) {
    const auto A = Observable::from_hermitian(random_hermitian(d, rng));
    const CVector v = random_state(d, rng);
    const CMatrix rho = v * v.adjoint();
    const double mean = A.expectation(rho), spread = std::sqrt(A.variance(rho));
    const double sigma = ratio * spread;
    double rel = 0.0;
    const double region = p.number("peak_region_sigmas") * sigma;
    for (int k = -20; k <= 20; ++k) {
      const double c = mean + region * k / 20.0;
      const double ex = single_time_prob_exact(rho, A, c, sigma);
      const double as = single_time_prob_asymptotic(rho, A, c, sigma);
      rel = std::max(rel, std::abs(ex - as) / ex);
      rows.push_back({double(i), c, ex, as});
    }
    const auto am = argmax_scan(rho, A, {0.0}, sigma, H0, &cx.diag);
    const double cells = std::abs(am.centers[0] - mean) / am.spacing;
    worst_rel = std::max(worst_rel, rel);
    worst_cells = std::max(worst_cells, cells);
    if (rel < asym_tol && cells <= cell_tol) ++passing;
  }
  cx.check("sigma_over_spread", ratio, "sigma_over_spread_min", Comparison::greater_equal);
  if (ratio < cx.cfg.tolerances.number("sigma_over_spread_min"))
    cx.report.warnings.push_back("precondition sigma >> Delta A violated: sigma/Delta A = " + io::format_number(ratio));
  cx.check("asymptotic_relative_error", worst_rel, "asymptotic_rel", Comparison::less);
  cx.check("argmax_offset_cells", worst_cells, "argmax_cells", Comparison::less_equal);
  cx.info("instances_passing", double(passing));
  cx.emit("single_time.csv", io::csv_table({"instance", "center", "exact", "asymptotic"}, rows));

  // Multi-time instance drawn after the single-time ones.
  const auto A = Observable::from_hermitian(random_hermitian(d, rng));
  const CMatrix H = random_hermitian(d, rng);
  const CVector v = random_state(d, rng);
  const CMatrix rho = v * v.adjoint();
  const auto& times = p.list("times");
  const auto tr = heisenberg_trajectory(rho, A, times, H);
  const double spread = *std::max_element(tr.spread.begin(), tr.spread.end());
  const double sigma = ratio * spread;
  const auto am = argmax_scan(rho, A, times, sigma, H, &cx.diag);
  double cells = 0.0;
  std::vector<std::vector<double>> mrows;
  for (std::size_t k = 0; k < times.size(); ++k) {
    cells = std::max(cells, std::abs(am.centers[k] - tr.mean[k]) / am.spacing);
    mrows.push_back({times[k], tr.mean[k], tr.spread[k], am.centers[k]});
  }
  cx.check("multi_time_argmax_offset_cells", cells, "argmax_cells", Comparison::less_equal);
  const auto cp = complement_pair_consistency(rho, A, times, sigma, p.number("tube_half_width_sigmas") * sigma, H);
  cx.check("complement_p", cp.p, "complement_p_min", Comparison::greater);
  cx.check("complement_p_bar", cp.p_bar, "complement_pbar_max", Comparison::less);
  cx.check("complement_bound_excess", std::norm(cp.D_off) - cp.p * cp.p_bar, "bound_slack", Comparison::less_equal);

  // Two-time coarse-grained histories of the same instance: three spectral windows per time.
  if (times.size() >= 2) {
    HistorySpec hs;
    hs.evolution.hamiltonian = H;
    for (std::size_t k = 0; k < 2; ++k) {
      const double m = tr.mean[k], s = tr.spread[k];
      ProjectorFamily fam;
      fam.push_back({"below", window_projector(A, -1e300, m - s, &cx.diag)});
      fam.push_back({"near", window_projector(A, std::nextafter(m - s, 1e300), m + s, &cx.diag)});
      fam.push_back({"above", window_projector(A, std::nextafter(m + s, 1e300), 1e300, &cx.diag)});
      hs.slots.push_back({times[k], {fam}});
    }
    const auto D = decoherence_functional(rho, hs, &cx.diag);
    cx.check("two_time_bound_excess", check_dh_bound(D).max_excess, "bound_slack", Comparison::less_equal);
    cx.emit("decoherence_two_time.json", io::decoherence_json(D, consistency_epsilon(D, &cx.diag)));
  }
  cx.emit("multi_time.csv", io::csv_table({"t", "mean", "spread", "argmax_center"}, mrows));
}

void run_conserved_decoherence(Context& cx) {
  const auto& p = cx.physics();
  const std::size_t d = p.count("dim"), K = p.count("distinct_values");
  const auto& times = p.list("times");
  auto rng = cx.rng();
  std::normal_distribution<double> normal(0.0, 1.0);
  double off2 = 0.0, off3 = 0.0, excess = 0.0;
  for (std::size_t inst = 0; inst < p.count("instances"); ++inst) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(random_hermitian(d, rng));
    const CMatrix V = es.eigenvectors();
    Eigen::VectorXd a(static_cast<Eigen::Index>(d)), h(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a(i) = double(std::size_t(i) % K);
      h(i) = normal(rng);
    }
    const CMatrix Am = V * a.cast<std::complex<double>>().asDiagonal() * V.adjoint();
    const CMatrix H = V * h.cast<std::complex<double>>().asDiagonal() * V.adjoint();
    const auto A = Observable::from_hermitian(Am);
    ProjectorFamily fam;
    for (std::size_t k = 0; k < K; ++k)
      fam.push_back({"a=" + std::to_string(k), window_projector(A, double(k) - 0.5, double(k) + 0.5, &cx.diag)});
    const CVector v1 = random_state(d, rng), v2 = random_state(d, rng);
    const CMatrix rho = 0.7 * v1 * v1.adjoint() + 0.3 * v2 * v2.adjoint();
    for (std::size_t n : {std::size_t{2}, std::size_t{3}}) {
      HistorySpec hs;
      hs.evolution.hamiltonian = H;
      for (std::size_t k = 0; k < n; ++k) hs.slots.push_back({times[k], {fam}});
      const auto D = decoherence_functional(rho, hs, &cx.diag);
      (n == 2 ? off2 : off3) = std::max(n == 2 ? off2 : off3, max_offdiagonal(D));
      excess = std::max(excess, check_dh_bound(D).max_excess);
      if (inst == 0)
        cx.emit("decoherence_" + std::to_string(n) + "_time.json", io::decoherence_json(D, consistency_epsilon(D, &cx.diag)));
    }
  }
  cx.check("max_offdiagonal_two_time", off2, "offdiag_max", Comparison::less);
  cx.check("max_offdiagonal_three_time", off3, "offdiag_max", Comparison::less);
  cx.check("bound_max_excess", excess, "bound_slack", Comparison::less_equal);
}

// Sup-norm of the number-density continuity residual for one resolution.
double continuity_sup(Context& cx, std::size_t n_q, double bin_width, double dt, std::vector<HydroFields>* series_out,
                      std::vector<ContinuityResidual>* res_out) {
  const auto& p = cx.physics();
  const auto& g = cx.grid();
  LocalEquilibriumProfile prof;
  prof.q = Axis(g.number("q_min"), g.number("q_max"), n_q);
  prof.m = p.number("m");
  const double amp = p.number("bump_amplitude"), width = p.number("bump_width");
  for (std::size_t i = 0; i < n_q; ++i) {
    prof.f.push_back(1.0 + amp * std::exp(-0.5 * prof.q[i] * prof.q[i] / (width * width)));
    prof.u.push_back(0.0);
    prof.kT.push_back(p.number("kT"));
  }
  const auto w1 = build_w1(prof, axis(g, "p_min", "p_max", "n_p"), &cx.diag);
  const double span = g.number("q_max") - g.number("q_min");
  const auto bins = static_cast<std::size_t>(std::llround(span / bin_width));
  const auto window = SmearingWindow::uniform(g.number("q_min"), g.number("q_max"), bins);
  const auto frames = static_cast<std::size_t>(std::llround(p.number("t_end") / dt));
  std::vector<HydroFields> series;
  for (std::size_t k = 0; k <= frames; ++k) {
    const double t = double(k) * dt;
    auto h = hydro_averages(evolve_free(w1, t, prof.m, true), p.count("N"), window, prof.m);
    h.t = t;
    series.push_back(std::move(h));
  }
  const auto res = continuity_residual(series, prof.m);
  double sup = 0.0;
  for (const auto& r : res)
    for (double x : r.n) sup = std::max(sup, std::abs(x));
  if (series_out) *series_out = series;
  if (res_out) *res_out = res;
  return sup;
}

void run_local_equilibrium(Context& cx) {
  const auto& p = cx.physics();
  LatticeProfile lp;
  lp.beta = p.list("beta");
  lp.mu_bar = p.list("mu_bar");
  lp.u = p.list("u");
  lp.m = p.number("m");
  lp.spacing = p.number("spacing");
  PeakingOptions opt;
  opt.N = p.count("N");
  opt.t1 = p.number("t1");
  opt.t2 = p.number("t2");
  opt.tolerance = p.number("occupation_tolerance");
  const auto r = local_equilibrium_peaking(lp, opt, &cx.diag);
  cx.check("peaking_fraction", r.fraction_within_tolerance, "peaking_fraction_min", Comparison::greater_equal);
  cx.check("epsilon", r.epsilon, "epsilon_max", Comparison::less);
  cx.check("bound_max_excess", r.bound.max_excess, "bound_slack", Comparison::less_equal);
  cx.info("quantized_trajectory_fraction", r.fraction_on_quantized_trajectory);
  cx.info("probability_sum", r.probability_sum);
  cx.info("max_offdiagonal", r.max_offdiagonal);
  cx.emit("decoherence.json", io::decoherence_json(r.D, r.epsilon));
  std::vector<std::vector<double>> mrows;
  for (std::size_t b = 0; b < r.mean_t1.size(); ++b) mrows.push_back({double(b), r.mean_t1[b], r.mean_t2[b]});
  cx.emit("mean_occupation.csv", io::csv_table({"bin", "mean_t1", "mean_t2"}, mrows));

  const auto& g = cx.grid();
  const std::size_t nq = g.count("n_q");
  std::vector<HydroFields> series;
  std::vector<ContinuityResidual> res;
  const double coarse = continuity_sup(cx, nq, g.number("bin_width"), g.number("dt"), &series, &res);
  const double fine = continuity_sup(cx, 2 * (nq - 1) + 1, 0.5 * g.number("bin_width"), 0.5 * g.number("dt"), nullptr, nullptr);
  cx.info("continuity_residual_coarse", coarse);
  cx.info("continuity_residual_fine", fine);
  cx.check("continuity_convergence_ratio", coarse / fine, "continuity_ratio_min", Comparison::greater_equal);
  cx.emit("hydro_fields.csv", io::hydro_csv(series, res));
}

}  // namespace

ScenarioError::ScenarioError(std::string scenario, const std::string& what)
    : Error("scenario " + scenario + ": " + what), scenario_(std::move(scenario)) {}

bool RunReport::passed() const {
  return std::all_of(metrics.begin(), metrics.end(), [](const Metric& m) { return m.pass; });
}

const Metric* RunReport::find(std::string_view name) const {
  for (const auto& m : metrics)
    if (m.name == name) return &m;
  return nullptr;
}

std::string RunReport::to_json() const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario;
  j["params"] = nlohmann::ordered_json::parse(params_json);
  auto ms = nlohmann::ordered_json::array();
  for (const auto& m : metrics) {
    nlohmann::ordered_json e;
    e["name"] = m.name;
    e["value"] = std::isfinite(m.value) ? nlohmann::ordered_json(m.value) : nlohmann::ordered_json(nullptr);
    if (m.threshold) {
      e["threshold"] = *m.threshold;
      e["comparison"] = comparison_symbol(m.comparison);
      e["pass"] = m.pass;
    }
    ms.push_back(e);
  }
  j["metrics"] = ms;
  j["pass"] = passed();
  j["warnings"] = warnings;
  j["notes"] = notes;
  j["artifacts"] = artifacts;
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

RunReport run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  config.validate();
  const auto& info = scenario_info(config.scenario);
  RunReport report;
  report.scenario = info.name;
  report.params_json = config_echo(config);
  const auto start = std::chrono::steady_clock::now();
  Context cx(config, options, report);
  try {
    switch (config.scenario) {
      case ScenarioKind::diffusion: run_diffusion(cx); break;
      case ScenarioKind::maxwellization: run_maxwellization(cx); break;
      case ScenarioKind::oracle_compare: run_oracle_compare(cx); break;
      case ScenarioKind::variance_scaling: run_variance_scaling(cx); break;
      case ScenarioKind::histories_nscaling: run_histories_nscaling(cx); break;
      case ScenarioKind::ehrenfest: run_ehrenfest(cx); break;
      case ScenarioKind::conserved_decoherence: run_conserved_decoherence(cx); break;
      case ScenarioKind::local_equilibrium_peaking: run_local_equilibrium(cx); break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ScenarioError(info.name, e.what());
  }
  for (auto& w : cx.diag.warnings) report.warnings.push_back(std::move(w));
  for (auto& n : cx.diag.notes) report.notes.push_back(std::move(n));
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (options.write_artifacts) io::write_atomic(config.output_dir / "report.json", report.to_json());
  return report;
}

std::vector<RunReport> run_batch(const std::vector<ScenarioConfig>& configs, const RunOptions& options) {
  std::vector<std::future<RunReport>> jobs;
  for (const auto& c : configs) jobs.push_back(std::async(std::launch::async, [&c, &options] { return run_scenario(c, options); }));
  std::vector<RunReport> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

}  // namespace dhh
