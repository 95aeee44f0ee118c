#include "dhh/histories.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

namespace dhh {

namespace {

using cd = std::complex<double>;

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

CMatrix kron_power(const CMatrix& a, std::size_t N) {
  CMatrix out = a;
  for (std::size_t k = 1; k < N; ++k) out = kron(out, a);
  return out;
}

CVector kron_power(const CVector& v, std::size_t N) {
  CVector out = v;
  for (std::size_t k = 1; k < N; ++k) {
    CVector next(out.size() * v.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) next.segment(i * v.size(), v.size()) = out(i) * v;
    out = std::move(next);
  }
  return out;
}

double gauss(double x, double sigma) {
  return std::exp(-0.5 * x * x / (sigma * sigma)) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

CMatrix unitary_from_hamiltonian(const CMatrix& H, double dt) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(H);
  const auto& lam = es.eigenvalues();
  CVector ph(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) ph(i) = std::polar(1.0, -lam(i) * dt);
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

// Apply the one-particle matrix u to every particle of a product-space vector.
CVector apply_product(const CMatrix& u, std::size_t B, std::size_t N, const CVector& v) {
  CVector cur = v;
  CVector next(v.size());
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 1; k < N; ++k) inner *= B;
  for (std::size_t k = 0; k < N; ++k) {
    next.setZero();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t bp = 0; bp < B; ++bp) {
          const cd c = u(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(bp));
          if (c == cd(0.0)) continue;
          const std::size_t dst = (o * B + b) * inner, src = (o * B + bp) * inner;
          for (std::size_t i = 0; i < inner; ++i)
            next(static_cast<Eigen::Index>(dst + i)) += c * cur(static_cast<Eigen::Index>(src + i));
        }
    std::swap(cur, next);
    outer *= B;
    if (inner > 1) inner /= B;
  }
  return cur;
}

double max_abs(const CMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

// Slot members after combining families.
struct Slot {
  double t;
  std::vector<LabeledProjector> members;
  bool all_diagonal;
};

std::vector<Slot> combine_slots(const HistorySpec& hs, std::size_t dim) {
  if (hs.slots.empty()) throw ConfigError("history needs at least one time");
  std::vector<Slot> out;
  double prev = -1.0;
  for (std::size_t s = 0; s < hs.slots.size(); ++s) {
    const auto& slot = hs.slots[s];
    if (slot.t < 0.0 || (s > 0 && !(slot.t > prev))) throw ConfigError("history times must be >= 0 and strictly increasing");
    prev = slot.t;
    if (slot.families.empty()) throw ConfigError("slot " + std::to_string(s) + " has no projector family");
    for (const auto& fam : slot.families) {
      if (fam.empty()) throw ConfigError("slot " + std::to_string(s) + " has an empty family");
      for (const auto& m : fam)
        if (m.op.dim() != dim) throw ConfigError("projector '" + m.label + "' has the wrong dimension");
    }
    // Commutation check across families.
    for (std::size_t f = 0; f < slot.families.size(); ++f)
      for (std::size_t g = f + 1; g < slot.families.size(); ++g)
        for (const auto& P : slot.families[f])
          for (const auto& Q : slot.families[g]) {
            const bool same_frame = !P.op.dense_matrix && !Q.op.dense_matrix && P.op.frame == Q.op.frame;
            if (same_frame) continue;
            const CMatrix a = P.op.dense(), b = Q.op.dense();
            const double c = max_abs(a * b - b * a);
            if (c > hs.commutation_tolerance * max_abs(a) * max_abs(b))
              throw ConfigError("slot " + std::to_string(s) + ": projectors '" + P.label + "' and '" + Q.label +
                                "' do not commute (sup-norm commutator " + std::to_string(c) + ")");
          }
    std::vector<LabeledProjector> members = slot.families[0];
    for (std::size_t f = 1; f < slot.families.size(); ++f) {
      std::vector<LabeledProjector> next;
      for (const auto& P : members)
        for (const auto& Q : slot.families[f]) {
          LabeledProjector r;
          r.label = P.label + "&" + Q.label;
          if (!P.op.dense_matrix && !Q.op.dense_matrix && P.op.frame == Q.op.frame) {
            r.op.frame = P.op.frame;
            r.op.weights = P.op.weights.cwiseProduct(Q.op.weights);
          } else {
            r.op.dense_matrix = P.op.dense() * Q.op.dense();
          }
          next.push_back(std::move(r));
        }
      members = std::move(next);
    }
    bool diag = std::all_of(members.begin(), members.end(), [](const auto& m) { return m.op.position_diagonal(); });
    out.push_back({slot.t, std::move(members), diag});
  }
  return out;
}

void fill_labels(const std::vector<Slot>& slots, DecoherenceMatrix& dm) {
  std::size_t total = 1;
  for (const auto& s : slots) total *= s.members.size();
  dm.labels.resize(total);
  dm.paths.resize(total);
  for (std::size_t h = 0; h < total; ++h) {
    std::size_t rem = h;
    std::vector<std::size_t> path(slots.size());
    for (std::size_t k = slots.size(); k-- > 0;) {
      path[k] = rem % slots[k].members.size();
      rem /= slots[k].members.size();
    }
    std::ostringstream os;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      if (k) os << " ";
      os << "t" << k + 1 << ":" << slots[k].members[path[k]].label;
    }
    dm.labels[h] = os.str();
    dm.paths[h] = std::move(path);
  }
  dm.D = CMatrix::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
}

Eigen::MatrixXd dephasing_factors(const ToyHilbert& h, double rate, double dt, const std::vector<double>& pos_in) {
  std::vector<double> pos = pos_in;
  if (pos.empty())
    for (std::size_t b = 0; b < h.B(); ++b) pos.push_back(double(b));
  if (pos.size() != h.B()) throw ConfigError("bin_positions must have B entries");
  const auto d = static_cast<Eigen::Index>(h.dim());
  Eigen::MatrixXd E(d, d);
  for (Eigen::Index c = 0; c < d; ++c)
    for (Eigen::Index cp = 0; cp < d; ++cp) {
      double s = 0.0;
      for (std::size_t k = 0; k < h.N(); ++k) {
        const double x = pos[h.digit(std::size_t(c), k)] - pos[h.digit(std::size_t(cp), k)];
        s += x * x;
      }
      E(c, cp) = std::exp(-rate * dt * s);
    }
  return E;
}

// Interval propagation for the density-operator path.
struct Interval {
  CMatrix U;                 // full interval unitary (no dephasing)
  CMatrix U_sub;             // substep unitary (dephasing)
  Eigen::MatrixXd E;         // substep dephasing factors
  std::size_t substeps = 0;  // 0 means pure unitary

  CMatrix evolve(const CMatrix& X) const {
    if (substeps == 0) return U * X * U.adjoint();
    CMatrix Y = X;
    for (std::size_t s = 0; s < substeps; ++s) {
      Y = U_sub * Y * U_sub.adjoint();
      Y = Y.cwiseProduct(E.cast<cd>());
    }
    return Y;
  }
};

std::vector<Interval> build_intervals(const std::vector<Slot>& slots, const Evolution& ev, std::size_t dim) {
  std::vector<Interval> iv(slots.size());
  double prev = 0.0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double span = slots[k].t - prev;
    prev = slots[k].t;
    if (ev.dephasing_rate > 0.0 && span > 0.0) {
      if (!ev.space) throw ConfigError("dephasing needs the product space to be set");
      const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil(span / ev.dephasing_dt - 1e-9)));
      const double h = span / double(m);
      iv[k].substeps = m;
      iv[k].U_sub = ev.propagator(h, dim);
      iv[k].E = dephasing_factors(*ev.space, ev.dephasing_rate, h, ev.bin_positions);
    } else {
      iv[k].U = ev.propagator(span, dim);
    }
  }
  return iv;
}

CMatrix sandwich(const Operator& P, const CMatrix& Y, const Operator& Q) {
  if (P.position_diagonal() && Q.position_diagonal())
    return P.weights.cast<cd>().asDiagonal() * Y * Q.weights.cast<cd>().asDiagonal();
  return P.dense() * Y * Q.dense();
}

}  // namespace

ToyHilbert::ToyHilbert(std::size_t B, std::size_t N, std::size_t cap) : B_(B), N_(N), dim_(1) {
  if (B < 1 || N < 1) throw DomainError("ToyHilbert needs B >= 1 and N >= 1");
  for (std::size_t k = 0; k < N; ++k) {
    if (dim_ > cap / B) throw DimensionCapError("B^N exceeds the dimension cap " + std::to_string(cap));
    dim_ *= B;
  }
}

std::size_t ToyHilbert::digit(std::size_t c, std::size_t k) const {
  for (std::size_t j = k + 1; j < N_; ++j) c /= B_;
  return c % B_;
}

std::vector<int> ToyHilbert::occupation(std::size_t c) const {
  std::vector<int> n(B_, 0);
  for (std::size_t k = 0; k < N_; ++k) {
    ++n[c % B_];
    c /= B_;
  }
  return n;
}

Observable Observable::diagonal(Eigen::VectorXd values) {
  Observable o;
  o.values_ = std::move(values);
  return o;
}

Observable Observable::from_hermitian(const CMatrix& a) {
  if (a.rows() != a.cols()) throw DomainError("observable must be square");
  if (max_abs(a - a.adjoint()) > 1e-10 * std::max(1.0, max_abs(a))) throw DomainError("observable must be Hermitian");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(a);
  Observable o;
  o.frame_ = std::make_shared<const CMatrix>(es.eigenvectors());
  o.values_ = es.eigenvalues();
  return o;
}

Observable Observable::one_body(const ToyHilbert& h, const CMatrix& a) {
  if (a.rows() != static_cast<Eigen::Index>(h.B()) || a.cols() != a.rows())
    throw DomainError("one-body matrix must be B x B");
  if (h.dim() > kDenseCap) throw DimensionCapError("one-body observable frame exceeds the dense cap");
  if (max_abs(a - a.adjoint()) > 1e-10 * std::max(1.0, max_abs(a))) throw DomainError("observable must be Hermitian");
  Observable o;
  o.values_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h.dim()));
  // Diagonal one-particle matrices keep the product basis as frame.
  if (max_abs(a - CMatrix(a.diagonal().asDiagonal())) == 0.0) {
    for (std::size_t c = 0; c < h.dim(); ++c)
      for (std::size_t k = 0; k < h.N(); ++k) {
        const auto b = static_cast<Eigen::Index>(h.digit(c, k));
        o.values_(static_cast<Eigen::Index>(c)) += a(b, b).real();
      }
    return o;
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(a);
  for (std::size_t c = 0; c < h.dim(); ++c)
    for (std::size_t k = 0; k < h.N(); ++k)
      o.values_(static_cast<Eigen::Index>(c)) += es.eigenvalues()(static_cast<Eigen::Index>(h.digit(c, k)));
  const CMatrix& v = es.eigenvectors();
  o.frame_ = std::make_shared<const CMatrix>(kron_power(v, h.N()));
  return o;
}

CMatrix Observable::dense() const {
  if (!frame_) return values_.cast<cd>().asDiagonal();
  return (*frame_) * values_.cast<cd>().asDiagonal() * frame_->adjoint();
}

double Observable::expectation(const CMatrix& rho) const { return (dense() * rho).trace().real(); }

double Observable::variance(const CMatrix& rho) const {
  const CMatrix a = dense();
  const double m = (a * rho).trace().real();
  return std::max(0.0, (a * a * rho).trace().real() - m * m);
}

std::size_t Operator::dim() const {
  if (dense_matrix) return static_cast<std::size_t>(dense_matrix->rows());
  return static_cast<std::size_t>(weights.size());
}

CMatrix Operator::dense() const {
  if (dense_matrix) return *dense_matrix;
  if (!frame) return weights.cast<cd>().asDiagonal();
  return (*frame) * weights.cast<cd>().asDiagonal() * frame->adjoint();
}

CVector Operator::apply(const CVector& v) const {
  if (dense_matrix) return (*dense_matrix) * v;
  if (!frame) return weights.cast<cd>().cwiseProduct(v);
  return (*frame) * (weights.cast<cd>().cwiseProduct(frame->adjoint() * v));
}

CMatrix Evolution::propagator(double dt, std::size_t dim) const {
  const auto d = static_cast<Eigen::Index>(dim);
  if (dt == 0.0) return CMatrix::Identity(d, d);
  if (hamiltonian) {
    if (hamiltonian->rows() != d) throw ConfigError("Hamiltonian dimension mismatch");
    return unitary_from_hamiltonian(*hamiltonian, dt);
  }
  if (one_body_hamiltonian) {
    if (!space) throw ConfigError("one-body Hamiltonian needs the product space");
    if (space->dim() != dim) throw ConfigError("Hamiltonian dimension mismatch");
    return kron_power(unitary_from_hamiltonian(*one_body_hamiltonian, dt), space->N());
  }
  return CMatrix::Identity(d, d);
}

StateVector product_state(const CVector& psi, std::size_t N, std::size_t cap) {
  ToyHilbert h(static_cast<std::size_t>(psi.size()), N, cap);
  if (std::abs(psi.norm() - 1.0) > 1e-10) throw DomainError("one-particle state must be normalized");
  return kron_power(psi, N);
}

StateVector superposition_state(const CVector& psi, const CVector& chi, std::size_t N, cd w_psi, cd w_chi,
                                std::size_t cap) {
  if (psi.size() != chi.size()) throw DomainError("one-particle states differ in dimension");
  CVector s = w_psi * product_state(psi, N, cap) + w_chi * product_state(chi, N, cap);
  const double n = s.norm();
  if (!(n > 0.0)) throw DegenerateStateError("superposition has zero norm");
  return s / n;
}

DensityOperator product_density(const CMatrix& rho1, std::size_t N, std::size_t cap) {
  ToyHilbert h(static_cast<std::size_t>(rho1.rows()), N, cap);
  return kron_power(rho1, N);
}

DensityOperator pure_density(const StateVector& psi) { return psi * psi.adjoint(); }

Observable number_density_operator(const ToyHilbert& h, std::size_t b) {
  if (b >= h.B()) throw DomainError("bin index out of range");
  Eigen::VectorXd v(static_cast<Eigen::Index>(h.dim()));
  for (std::size_t c = 0; c < h.dim(); ++c) v(static_cast<Eigen::Index>(c)) = h.occupation(c)[b];
  return Observable::diagonal(std::move(v));
}

Observable momentum_density_operator(const ToyHilbert& h, std::size_t b, const CMatrix& p1) {
  if (b >= h.B()) throw DomainError("bin index out of range");
  CMatrix pi = CMatrix::Zero(p1.rows(), p1.cols());
  pi(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)) = 1.0;
  return Observable::one_body(h, 0.5 * (pi * p1 + p1 * pi));
}

Observable energy_density_operator(const ToyHilbert& h, std::size_t b, const CMatrix& p1, double m) {
  if (b >= h.B()) throw DomainError("bin index out of range");
  CMatrix pi = CMatrix::Zero(p1.rows(), p1.cols());
  pi(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)) = 1.0;
  const CMatrix T = p1 * p1 / (2.0 * m);
  return Observable::one_body(h, 0.5 * (pi * T + T * pi));
}

namespace {

// Fourier-diagonal lattice operator with per-mode symbol f(k).
CMatrix fourier_operator(std::size_t B, const std::function<double(long, double)>& symbol, double spacing) {
  const auto n = static_cast<Eigen::Index>(B);
  CMatrix F(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index m = 0; m < n; ++m)
      F(j, m) = std::polar(1.0 / std::sqrt(double(B)), 2.0 * std::numbers::pi * double(j * m) / double(B));
  Eigen::VectorXd s(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const long sm = m <= n / 2 ? long(m) : long(m) - long(n);  // signed mode index
    const double k = 2.0 * std::numbers::pi * double(sm) / (double(B) * spacing);
    s(m) = symbol(sm, k);
  }
  CMatrix out = F * s.cast<cd>().asDiagonal() * F.adjoint();
  return 0.5 * (out + out.adjoint());
}

}  // namespace

CMatrix lattice_momentum(std::size_t B, double spacing) {
  return fourier_operator(
      B, [B](long sm, double k) { return (B % 2 == 0 && std::size_t(std::abs(sm)) * 2 == B) ? 0.0 : k; }, spacing);
}

CMatrix lattice_kinetic(std::size_t B, double m, double spacing) {
  return fourier_operator(B, [m](long, double k) { return k * k / (2.0 * m); }, spacing);
}

Operator gaussian_quasi_projector(const Observable& A, double center, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  Operator P;
  P.frame = A.frame();
  P.weights = A.eigenvalues().unaryExpr([&](double l) { return gauss(l - center, sigma); });
  return P;
}

Operator window_projector(const Observable& A, double lo, double hi, Diagnostics* diag) {
  if (!(lo < hi)) throw DomainError("window interval must be nondegenerate");
  Operator P;
  P.frame = A.frame();
  const double tol = 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
  P.weights = A.eigenvalues().unaryExpr([&](double l) { return (l >= lo - tol && l <= hi + tol) ? 1.0 : 0.0; });
  if (P.weights.sum() == 0.0)
    warn(diag, "window [" + std::to_string(lo) + ", " + std::to_string(hi) + "] contains no eigenvalue");
  return P;
}

Operator occupation_projector(const ToyHilbert& h, const std::vector<int>& target) {
  if (target.size() != h.B()) throw DomainError("occupation vector must have B entries");
  long s = 0;
  for (int x : target) {
    if (x < 0) throw DomainError("occupations must be non-negative");
    s += x;
  }
  if (s != static_cast<long>(h.N())) throw DomainError("occupation vector must sum to N");
  Operator P;
  P.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h.dim()));
  for (std::size_t c = 0; c < h.dim(); ++c)
    if (h.occupation(c) == target) P.weights(static_cast<Eigen::Index>(c)) = 1.0;
  return P;
}

Operator gaussian_occupation_projector(const ToyHilbert& h, const std::vector<double>& center, double sigma) {
  if (center.size() != h.B()) throw DomainError("center vector must have B entries");
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  Operator P;
  P.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(h.dim()));
  for (std::size_t c = 0; c < h.dim(); ++c) {
    const auto n = h.occupation(c);
    for (std::size_t b = 0; b < h.B(); ++b) P.weights(static_cast<Eigen::Index>(c)) *= gauss(n[b] - center[b], sigma);
  }
  return P;
}

Operator smooth_window(const Observable& A, double center, double half_width, double sigma) {
  if (!(sigma > 0.0) || !(half_width >= 0.0)) throw DomainError("smooth window needs sigma > 0, half_width >= 0");
  Operator P;
  P.frame = A.frame();
  P.weights = A.eigenvalues().unaryExpr([&](double a) {
    return normal_cdf((center + half_width - a) / sigma) - normal_cdf((center - half_width - a) / sigma);
  });
  return P;
}

std::vector<std::vector<int>> compositions(std::size_t N, std::size_t B) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(B, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t rem, std::size_t k) {
    if (k + 1 == B) {
      cur[k] = static_cast<int>(rem);
      out.push_back(cur);
      return;
    }
    for (std::size_t n = rem + 1; n-- > 0;) {
      cur[k] = static_cast<int>(n);
      rec(rem - n, k + 1);
    }
  };
  rec(N, 0);
  return out;
}

std::string occupation_label(const std::vector<int>& n) {
  std::ostringstream os;
  os << "(";
  for (std::size_t b = 0; b < n.size(); ++b) os << (b ? "," : "") << n[b];
  os << ")";
  return os.str();
}

ProjectorFamily occupation_family(const ToyHilbert& h) {
  ProjectorFamily fam;
  for (const auto& n : compositions(h.N(), h.B())) fam.push_back({occupation_label(n), occupation_projector(h, n)});
  return fam;
}

DecoherenceMatrix decoherence_functional(const DensityOperator& rho, const HistorySpec& hs, Diagnostics* diag) {
  const auto dim = static_cast<std::size_t>(rho.rows());
  if (rho.cols() != rho.rows()) throw DomainError("density operator must be square");
  if (dim > kDenseCap) throw DimensionCapError("density-operator path limited to dimension " + std::to_string(kDenseCap));
  const auto slots = combine_slots(hs, dim);
  const auto iv = build_intervals(slots, hs.evolution, dim);
  DecoherenceMatrix dm;
  fill_labels(slots, dm);
  const std::size_t n = slots.size();

  std::vector<std::size_t> stride(n, 1);
  for (std::size_t k = n - 1; k-- > 0;) stride[k] = stride[k + 1] * slots[k + 1].members.size();

  // Column gathers of the last interval's unitary for the support of each member of slot n-2.
  const bool fast_last = n >= 2 && slots[n - 1].all_diagonal && slots[n - 2].all_diagonal && iv[n - 1].substeps == 0;
  std::vector<std::vector<Eigen::Index>> support;
  std::vector<CMatrix> ucols;
  if (fast_last) {
    for (const auto& m : slots[n - 2].members) {
      std::vector<Eigen::Index> s;
      for (Eigen::Index c = 0; c < m.op.weights.size(); ++c)
        if (m.op.weights(c) != 0.0) s.push_back(c);
      CMatrix cols(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(s.size()));
      for (std::size_t j = 0; j < s.size(); ++j) cols.col(static_cast<Eigen::Index>(j)) = iv[n - 1].U.col(s[j]);
      support.push_back(std::move(s));
      ucols.push_back(std::move(cols));
    }
  }

  auto finish = [&](std::size_t ia, std::size_t ib, const Eigen::VectorXcd* ydiag, const CMatrix* Y) {
    const auto& mem = slots[n - 1].members;
    for (std::size_t a = 0; a < mem.size(); ++a)
      for (std::size_t b = 0; b < mem.size(); ++b) {
        cd v;
        if (ydiag) {
          v = (mem[a].op.weights.cwiseProduct(mem[b].op.weights)).cast<cd>().dot(*ydiag);
          // dot conjugates its first argument; weights are real.
        } else {
          v = (mem[b].op.dense() * mem[a].op.dense() * (*Y)).trace();
        }
        dm.D(static_cast<Eigen::Index>(ia + a), static_cast<Eigen::Index>(ib + b)) = v;
      }
  };

  std::function<void(std::size_t, const CMatrix&, std::size_t, std::size_t)> rec =
      [&](std::size_t k, const CMatrix& Y, std::size_t ia, std::size_t ib) {
        if (k == n - 1) {
          if (slots[k].all_diagonal) {
            const Eigen::VectorXcd yd = Y.diagonal();
            finish(ia, ib, &yd, nullptr);
          } else {
            finish(ia, ib, nullptr, &Y);
          }
          return;
        }
        const auto& mem = slots[k].members;
        for (std::size_t a = 0; a < mem.size(); ++a)
          for (std::size_t b = 0; b < mem.size(); ++b) {
            const std::size_t na = ia + a * stride[k], nb = ib + b * stride[k];
            if (fast_last && k == n - 2) {
              const auto& sa = support[a];
              const auto& sb = support[b];
              if (sa.empty() || sb.empty()) continue;
              CMatrix blk(static_cast<Eigen::Index>(sa.size()), static_cast<Eigen::Index>(sb.size()));
              for (std::size_t i = 0; i < sa.size(); ++i)
                for (std::size_t j = 0; j < sb.size(); ++j)
                  blk(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                      mem[a].op.weights(sa[i]) * Y(sa[i], sb[j]) * mem[b].op.weights(sb[j]);
              const CMatrix left = ucols[a] * blk;
              const Eigen::VectorXcd yd = left.cwiseProduct(ucols[b].conjugate()).rowwise().sum();
              finish(na, nb, &yd, nullptr);
            } else {
              rec(k + 1, iv[k + 1].evolve(sandwich(mem[a].op, Y, mem[b].op)), na, nb);
            }
          }
      };
  rec(0, iv[0].evolve(rho), 0, 0);
  (void)diag;
  return dm;
}

namespace {

// Branch vectors of every history (columns), pure-state path.
CMatrix branch_vectors(const StateVector& psi, const std::vector<Slot>& slots, const Evolution& ev) {
  if (ev.dephasing_rate > 0.0) throw ConfigError("dephasing requires the density-operator path");
  const auto dim = static_cast<std::size_t>(psi.size());
  std::vector<std::function<CVector(const CVector&)>> step;
  double prev = 0.0;
  for (const auto& s : slots) {
    const double span = s.t - prev;
    prev = s.t;
    if (span == 0.0 || (!ev.hamiltonian && !ev.one_body_hamiltonian)) {
      step.emplace_back([](const CVector& v) { return v; });
    } else if (ev.hamiltonian) {
      CMatrix U = ev.propagator(span, dim);
      step.emplace_back([U](const CVector& v) { return CVector(U * v); });
    } else {
      if (!ev.space || ev.space->dim() != dim) throw ConfigError("one-body Hamiltonian needs a matching space");
      CMatrix u = unitary_from_hamiltonian(*ev.one_body_hamiltonian, span);
      const std::size_t B = ev.space->B(), N = ev.space->N();
      step.emplace_back([u, B, N](const CVector& v) { return apply_product(u, B, N, v); });
    }
  }
  std::size_t total = 1;
  for (const auto& s : slots) total *= s.members.size();
  CMatrix out(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(total));
  std::size_t col = 0;
  std::function<void(std::size_t, const CVector&)> rec = [&](std::size_t k, const CVector& v) {
    const CVector w = step[k](v);
    for (const auto& m : slots[k].members) {
      CVector b = m.op.apply(w);
      if (k + 1 == slots.size())
        out.col(static_cast<Eigen::Index>(col++)) = b;
      else
        rec(k + 1, b);
    }
  };
  rec(0, psi);
  return out;
}

}  // namespace

DecoherenceMatrix decoherence_functional(const StateVector& psi, const HistorySpec& hs, Diagnostics* diag) {
  const auto slots = combine_slots(hs, static_cast<std::size_t>(psi.size()));
  DecoherenceMatrix dm;
  fill_labels(slots, dm);
  const CMatrix L = branch_vectors(psi, slots, hs.evolution);
  dm.D = (L.adjoint() * L).transpose();
  (void)diag;
  return dm;
}

std::vector<double> history_probabilities(const StateVector& psi, const HistorySpec& hs, Diagnostics* diag) {
  const auto slots = combine_slots(hs, static_cast<std::size_t>(psi.size()));
  const CMatrix L = branch_vectors(psi, slots, hs.evolution);
  std::vector<double> p(static_cast<std::size_t>(L.cols()));
  for (Eigen::Index j = 0; j < L.cols(); ++j) p[static_cast<std::size_t>(j)] = L.col(j).squaredNorm();
  (void)diag;
  return p;
}

double consistency_epsilon(const DecoherenceMatrix& dm, Diagnostics* diag) {
  const Eigen::VectorXd p = dm.probabilities();
  // Below this floor p carries only round-off and the ratio is noise.
  const double floor = kProbabilityFloor * std::max(p.cwiseAbs().sum(), 0.0);
  double eps = 0.0;
  std::size_t skipped = 0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (!(p(a) > floor)) {
      ++skipped;
      continue;
    }
    for (Eigen::Index b = 0; b < p.size(); ++b) {
      if (a == b || !(p(b) > floor)) continue;
      eps = std::max(eps, std::abs(dm.D(a, b)) / std::sqrt(p(a) * p(b)));
    }
  }
  if (skipped) note(diag, std::to_string(skipped) + " histories with negligible probability excluded from epsilon");
  return eps;
}

BoundReport check_dh_bound(const DecoherenceMatrix& dm, double slack) {
  const Eigen::VectorXd p = dm.probabilities();
  BoundReport r;
  r.max_excess = -std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < p.size(); ++a)
    for (Eigen::Index b = 0; b < p.size(); ++b) {
      const double ex = std::norm(dm.D(a, b)) - p(a) * p(b);
      ++r.pairs_checked;
      if (ex > r.max_excess) {
        r.max_excess = ex;
        r.worst_a = std::size_t(a);
        r.worst_b = std::size_t(b);
      }
    }
  r.holds = r.max_excess <= slack;
  return r;
}

DensityOperator apply_dephasing(const DensityOperator& rho, const ToyHilbert& h, double rate, double dt,
                                const std::vector<double>& bin_positions) {
  if (rate < 0.0) throw DomainError("dephasing rate must be >= 0");
  if (static_cast<std::size_t>(rho.rows()) != h.dim()) throw DomainError("density operator dimension mismatch");
  if (rate == 0.0 || dt == 0.0) return rho;
  return rho.cwiseProduct(dephasing_factors(h, rate, dt, bin_positions).cast<cd>());
}

double single_time_prob_exact(const CMatrix& rho, const Observable& A, double center, double sigma) {
  return (gaussian_quasi_projector(A, center, sigma).dense() * rho).trace().real();
}

double single_time_prob_asymptotic(const CMatrix& rho, const Observable& A, double center, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  const double m = A.expectation(rho);
  const double s2 = sigma * sigma + A.variance(rho);
  return std::exp(-0.5 * (m - center) * (m - center) / s2) / std::sqrt(2.0 * std::numbers::pi * s2);
}

Trajectory heisenberg_trajectory(const CMatrix& rho, const Observable& A, const std::vector<double>& times,
                                 const CMatrix& H) {
  Trajectory tr;
  for (double t : times) {
    const CMatrix U = unitary_from_hamiltonian(H, t);
    const CMatrix r = U * rho * U.adjoint();
    tr.mean.push_back(A.expectation(r));
    tr.spread.push_back(std::sqrt(A.variance(r)));
  }
  return tr;
}

namespace {

void check_times(const std::vector<double>& times) {
  if (times.empty()) throw DomainError("at least one time is required");
  for (std::size_t k = 0; k < times.size(); ++k)
    if (times[k] < 0.0 || (k > 0 && !(times[k] > times[k - 1])))
      throw DomainError("times must be >= 0 and strictly increasing");
}

void warn_width(const CMatrix& rho, const Observable& A, const std::vector<double>& times, double sigma,
                const CMatrix& H, Diagnostics* diag) {
  if (!diag) return;
  const auto tr = heisenberg_trajectory(rho, A, times, H);
  const double s = *std::max_element(tr.spread.begin(), tr.spread.end());
  if (sigma < 3.0 * s)
    diag->warn("sigma = " + std::to_string(sigma) + " is not large compared with max Delta A = " + std::to_string(s));
}

}  // namespace

double multi_time_prob(const CMatrix& rho, const Observable& A, const std::vector<double>& times,
                       const std::vector<double>& centers, double sigma, const CMatrix& H, Diagnostics* diag) {
  check_times(times);
  if (centers.size() != times.size()) throw DomainError("one center per time is required");
  warn_width(rho, A, times, sigma, H, diag);
  CMatrix X = rho;
  double prev = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const CMatrix U = unitary_from_hamiltonian(H, times[k] - prev);
    prev = times[k];
    const CMatrix P = gaussian_quasi_projector(A, centers[k], sigma).dense();
    X = P * (U * X * U.adjoint()) * P;
  }
  return X.trace().real();
}

ArgmaxResult argmax_scan(const CMatrix& rho, const Observable& A, const std::vector<double>& times, double sigma,
                         const CMatrix& H, Diagnostics* diag) {
  check_times(times);
  if (times.size() > 4) throw DomainError("argmax_scan supports at most 4 times");
  warn_width(rho, A, times, sigma, H, diag);
  constexpr int kHalf = 40;
  const double h = sigma / 10.0;
  ArgmaxResult res;
  res.spacing = h;
  res.trajectory = heisenberg_trajectory(rho, A, times, H);
  const std::size_t n = times.size();
  std::vector<CMatrix> U(n);
  std::vector<std::vector<CMatrix>> P(n);
  double prev = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    U[k] = unitary_from_hamiltonian(H, times[k] - prev);
    prev = times[k];
    for (int m = -kHalf; m <= kHalf; ++m) {
      CMatrix p = gaussian_quasi_projector(A, res.trajectory.mean[k] + m * h, sigma).dense();
      P[k].push_back(k + 1 == n ? CMatrix(p * p) : p);
    }
  }
  std::vector<int> best(n, 0), cur(n, 0);
  res.probability = -1.0;
  std::function<void(std::size_t, const CMatrix&)> rec = [&](std::size_t k, const CMatrix& X) {
    const CMatrix Y = U[k] * X * U[k].adjoint();
    for (int m = 0; m <= 2 * kHalf; ++m) {
      cur[k] = m;
      if (k + 1 == n) {
        const double pr = (P[k][std::size_t(m)] * Y).trace().real();
        if (pr > res.probability) {
          res.probability = pr;
          best = cur;
        }
      } else {
        rec(k + 1, P[k][std::size_t(m)] * Y * P[k][std::size_t(m)]);
      }
    }
  };
  rec(0, rho);
  for (std::size_t k = 0; k < n; ++k) res.centers.push_back(res.trajectory.mean[k] + (best[k] - kHalf) * h);
  return res;
}

ComplementPair complement_pair_consistency(const CMatrix& rho, const Observable& A, const std::vector<double>& times,
                                           double sigma, double tube_width, const CMatrix& H) {
  check_times(times);
  const auto tr = heisenberg_trajectory(rho, A, times, H);
  const auto d = rho.rows();
  CMatrix C = CMatrix::Identity(d, d);
  double prev = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const CMatrix U = unitary_from_hamiltonian(H, times[k] - prev);
    prev = times[k];
    C = smooth_window(A, tr.mean[k], tube_width, sigma).dense() * U * C;
  }
  C = unitary_from_hamiltonian(H, times.back()).adjoint() * C;
  const CMatrix Cb = CMatrix::Identity(d, d) - C;
  ComplementPair r;
  r.p = (C * rho * C.adjoint()).trace().real();
  r.p_bar = (Cb * rho * Cb.adjoint()).trace().real();
  r.D_off = (C * rho * Cb.adjoint()).trace();
  r.bound_holds = std::norm(r.D_off) <= r.p * r.p_bar + 1e-10;
  return r;
}

CMatrix random_hermitian(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(d);
  CMatrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = cd(g(rng), g(rng));
  return 0.5 * (a + a.adjoint());
}

CVector random_state(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CVector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = cd(g(rng), g(rng));
  return v / v.norm();
}

}  // namespace dhh
