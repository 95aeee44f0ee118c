#include "dhh/ensemble_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dhh {

namespace {

double window_weight(const SmearingWindow& w, std::size_t b, double q) {
  const double d = (q - w.center(b)) / w.width(b);
  return std::exp(-std::numbers::pi * d * d);
}

// Per-bin integral of samples g(q_i) against the window.
std::vector<double> bin_integrals(const Axis& axis, const std::vector<double>& g, const SmearingWindow& w) {
  std::vector<double> out(w.bins(), 0.0);
  for (std::size_t b = 0; b < w.bins(); ++b) {
    double s = 0.0;
    if (w.shape == WindowShape::top_hat) {
      const auto hw = axis.hat_integrals(w.edges[b], w.edges[b + 1]);
      for (std::size_t i = 0; i < axis.size(); ++i) s += hw[i] * g[i];
    } else {
      for (std::size_t i = 0; i < axis.size(); ++i) s += axis.weight(i) * window_weight(w, b, axis[i]) * g[i];
    }
    out[b] = s;
  }
  return out;
}

DensityField make_field(const SmearingWindow& w) {
  DensityField f;
  for (std::size_t b = 0; b < w.bins(); ++b) {
    f.center.push_back(w.center(b));
    f.width.push_back(w.width(b));
  }
  return f;
}

std::vector<double> padded_probabilities(const ProductEnsemble& ens, const SmearingWindow& window, bool& padded) {
  window.validate();
  if (window.shape != WindowShape::top_hat) throw DomainError("occupation statistics need a top-hat window");
  auto p = window_averages(ens.position(), window).first;
  double total = 0.0;
  for (double& x : p) {
    x = std::max(x, 0.0);
    total += x;
  }
  padded = total < 1.0 - 1e-12;
  if (padded) p.push_back(1.0 - total);
  return p;
}

void compositions(std::size_t remaining, std::size_t k, std::vector<int>& cur,
                  std::vector<std::vector<int>>& out) {
  if (k + 1 == cur.size()) {
    cur[k] = static_cast<int>(remaining);
    out.push_back(cur);
    return;
  }
  for (std::size_t n = remaining + 1; n-- > 0;) {
    cur[k] = static_cast<int>(n);
    compositions(remaining - n, k + 1, cur, out);
  }
}

}  // namespace

SmearingWindow SmearingWindow::uniform(double lo, double hi, std::size_t bins, WindowShape shape) {
  if (bins == 0 || !(lo < hi)) throw DomainError("uniform window needs lo < hi and at least one bin");
  SmearingWindow w;
  w.shape = shape;
  for (std::size_t b = 0; b <= bins; ++b) w.edges.push_back(lo + (hi - lo) * double(b) / double(bins));
  return w;
}

void SmearingWindow::validate() const {
  if (edges.size() < 2) throw DomainError("window needs at least one bin");
  for (std::size_t b = 0; b + 1 < edges.size(); ++b)
    if (!(edges[b] < edges[b + 1])) throw DomainError("window edges must be strictly increasing");
}

ProductEnsemble::ProductEnsemble(std::size_t N, const WignerGrid& one_particle)
    : N_(N), position_(), w_(normalize(one_particle)) {
  if (N == 0) throw DomainError("ensemble needs N >= 1");
  position_ = position_marginal(*w_);
}

ProductEnsemble::ProductEnsemble(std::size_t N, Marginal position) : N_(N), position_(std::move(position)) {
  if (N == 0) throw DomainError("ensemble needs N >= 1");
  if (position_.kind != AxisKind::position) throw DomainError("ensemble needs a position marginal");
  const double m = position_.integral();
  if (!(m > 0.0)) throw DegenerateStateError("one-particle marginal has zero mass");
  for (double& x : position_.samples) x /= m;
}

const WignerGrid& ProductEnsemble::phase_space() const {
  if (!w_) throw DomainError("ensemble was built from a position marginal only");
  return *w_;
}

std::vector<double> OccupationDistribution::mean() const {
  std::vector<double> m(bin_probability.size(), 0.0);
  for (std::size_t k = 0; k < outcomes.size(); ++k)
    for (std::size_t b = 0; b < m.size(); ++b) m[b] += probability[k] * outcomes[k][b];
  return m;
}

std::vector<double> OccupationDistribution::variance() const {
  const auto m = mean();
  std::vector<double> v(m.size(), 0.0);
  for (std::size_t k = 0; k < outcomes.size(); ++k)
    for (std::size_t b = 0; b < m.size(); ++b) {
      const double d = outcomes[k][b] - m[b];
      v[b] += probability[k] * d * d;
    }
  return v;
}

WindowAverages window_averages(const Marginal& f, const SmearingWindow& window) {
  window.validate();
  WindowAverages a;
  a.first = bin_integrals(f.axis, f.samples, window);
  if (window.shape == WindowShape::top_hat) {
    a.second = a.first;
  } else {
    a.second.assign(window.bins(), 0.0);
    for (std::size_t b = 0; b < window.bins(); ++b)
      for (std::size_t i = 0; i < f.axis.size(); ++i) {
        const double phi = window_weight(window, b, f.axis[i]);
        a.second[b] += f.axis.weight(i) * phi * phi * f.samples[i];
      }
  }
  return a;
}

DensityField mean_number_density(const ProductEnsemble& ens, const SmearingWindow& window) {
  const auto a = window_averages(ens.position(), window);
  DensityField f = make_field(window);
  for (double x : a.first) f.value.push_back(double(ens.N()) * x);
  return f;
}

DensityField number_density_variance(const ProductEnsemble& ens, const SmearingWindow& window) {
  const auto a = window_averages(ens.position(), window);
  const double N = double(ens.N());
  DensityField f = make_field(window);
  for (std::size_t b = 0; b < window.bins(); ++b) {
    f.value.push_back(N * a.first[b]);
    f.variance.push_back(N * (a.second[b] - a.first[b] * a.first[b]));
  }
  return f;
}

DensityField relative_fluctuation(const ProductEnsemble& ens, const SmearingWindow& window) {
  const auto a = window_averages(ens.position(), window);
  const double N = double(ens.N());
  DensityField f = make_field(window);
  for (std::size_t b = 0; b < window.bins(); ++b) {
    if (!(a.first[b] > 0.0))
      throw UndefinedFluctuationError("bin " + std::to_string(b) + " has zero one-particle mass");
    f.value.push_back((a.second[b] - a.first[b] * a.first[b]) / (N * a.first[b] * a.first[b]));
  }
  return f;
}

OccupationDistribution multinomial_distribution(std::size_t N, const std::vector<double>& p, EnumerationCap cap) {
  if (N > cap.max_N || p.size() > cap.max_bins)
    throw EnumerationCapError("exact enumeration limited to N <= " + std::to_string(cap.max_N) + " and " +
                              std::to_string(cap.max_bins) + " bins; use sample_occupations");
  if (p.empty()) throw DomainError("multinomial needs at least one bin");
  OccupationDistribution d;
  d.N = N;
  d.bin_probability = p;
  std::vector<int> cur(p.size(), 0);
  compositions(N, 0, cur, d.outcomes);
  double logN = std::lgamma(double(N) + 1.0);
  for (const auto& n : d.outcomes) {
    double pr = 1.0;
    double lc = logN;
    for (std::size_t b = 0; b < p.size(); ++b) {
      pr *= std::pow(p[b], n[b]);
      lc -= std::lgamma(double(n[b]) + 1.0);
    }
    d.probability.push_back(std::round(std::exp(lc)) * pr);
  }
  return d;
}

OccupationDistribution occupation_distribution(const ProductEnsemble& ens, const SmearingWindow& window,
                                               EnumerationCap cap) {
  bool padded = false;
  const auto p = padded_probabilities(ens, window, padded);
  auto d = multinomial_distribution(ens.N(), p, cap);
  d.has_elsewhere_bin = padded;
  return d;
}

OccupationSample sample_occupations(const ProductEnsemble& ens, const SmearingWindow& window, std::size_t draws,
                                    std::mt19937_64& rng) {
  if (draws < 2) throw DomainError("sampling needs at least 2 draws");
  bool padded = false;
  const auto p = padded_probabilities(ens, window, padded);
  OccupationSample s;
  s.N = ens.N();
  s.draws = draws;
  s.bin_probability = p;
  s.has_elsewhere_bin = padded;
  const std::size_t K = p.size();
  std::vector<double> sum(K, 0.0), sum2(K, 0.0);
  for (std::size_t d = 0; d < draws; ++d) {
    long left = static_cast<long>(ens.N());
    double mass_left = 1.0;
    for (std::size_t b = 0; b < K; ++b) {
      long n = 0;
      if (b + 1 == K) {
        n = left;
      } else if (left > 0 && p[b] > 0.0) {
        const double q = std::clamp(p[b] / mass_left, 0.0, 1.0);
        std::binomial_distribution<long> bin(left, q);
        n = bin(rng);
      }
      left -= n;
      mass_left -= p[b];
      sum[b] += double(n);
      sum2[b] += double(n) * double(n);
    }
  }
  const double D = double(draws);
  for (std::size_t b = 0; b < K; ++b) {
    const double m = sum[b] / D;
    const double v = (sum2[b] - D * m * m) / (D - 1.0);
    s.mean.push_back(m);
    s.variance.push_back(v);
    s.mean_stderr.push_back(std::sqrt(std::max(v, 0.0) / D));
  }
  return s;
}

DensityField mean_momentum_density(const ProductEnsemble& ens, const SmearingWindow& window) {
  window.validate();
  const WignerGrid& w = ens.phase_space();
  std::vector<double> current(w.n_q(), 0.0);
  for (std::size_t i = 0; i < w.n_q(); ++i)
    for (std::size_t j = 0; j < w.n_p(); ++j) current[i] += w.p().weight(j) * w.p()[j] * w(i, j);
  const auto g = bin_integrals(w.q(), current, window);
  DensityField f = make_field(window);
  for (double x : g) f.value.push_back(double(ens.N()) * x);
  return f;
}

BinnedConstitutive constitutive_residual(const ProductEnsemble& ens, const SmearingWindow& window,
                                         const QbmParams& params) {
  params.validate();
  BinnedConstitutive r;
  r.momentum = mean_momentum_density(ens, window);
  const DensityField n = mean_number_density(ens, window);
  const std::size_t B = window.bins();
  if (B < 3) throw DomainError("constitutive residual needs at least 3 bins");
  const double coef = params.kT / (2.0 * params.gamma);
  r.gradient_term = make_field(window);
  r.residual = make_field(window);
  double s_g = 0.0, s_d = 0.0, s_r = 0.0;
  const auto& x = n.center;
  const auto& v = n.value;
  for (std::size_t b = 0; b < B; ++b) {
    double d;
    if (b == 0)
      d = (v[1] - v[0]) / (x[1] - x[0]);
    else if (b + 1 == B)
      d = (v[B - 1] - v[B - 2]) / (x[B - 1] - x[B - 2]);
    else
      d = (v[b + 1] - v[b - 1]) / (x[b + 1] - x[b - 1]);
    const double gt = coef * d;
    r.gradient_term.value.push_back(gt);
    r.residual.value.push_back(r.momentum.value[b] + gt);
    s_g = std::max(s_g, std::abs(r.momentum.value[b]));
    s_d = std::max(s_d, std::abs(gt));
    s_r = std::max(s_r, std::abs(r.momentum.value[b] + gt));
  }
  const double scale = std::max(s_g, s_d);
  r.relative_sup = scale > 0.0 ? s_r / scale : 0.0;
  return r;
}

double mean_phase_space_density(const ProductEnsemble& ens, const PhaseSpaceCell& cell) {
  const WignerGrid& w = ens.phase_space();
  if (cell.q_lo < w.q().min() || cell.q_hi > w.q().max() || cell.p_lo < w.p().min() || cell.p_hi > w.p().max() ||
      !(cell.q_lo < cell.q_hi) || !(cell.p_lo < cell.p_hi))
    throw DomainError("phase-space cell must lie within the grid extents");
  return double(ens.N()) * w.cell_integral(cell.q_lo, cell.q_hi, cell.p_lo, cell.p_hi);
}

}  // namespace dhh
