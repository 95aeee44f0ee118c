#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "dhh/phase_space.hpp"
#include "dhh/qbm_propagator.hpp"

namespace dhh {

enum class WindowShape {
  top_hat,   // indicator of [edge_b, edge_{b+1})
  gaussian,  // exp(-pi (q - center_b)^2 / width_b^2), whose integral is width_b
};

/// Ordered, disjoint bins over q.
struct SmearingWindow {
  std::vector<double> edges;
  WindowShape shape = WindowShape::top_hat;

  static SmearingWindow uniform(double lo, double hi, std::size_t bins, WindowShape shape = WindowShape::top_hat);

  std::size_t bins() const { return edges.empty() ? 0 : edges.size() - 1; }
  double center(std::size_t b) const { return 0.5 * (edges[b] + edges[b + 1]); }
  double width(std::size_t b) const { return edges[b + 1] - edges[b]; }
  void validate() const;
};

/// N independent particles sharing one one-particle state.
class ProductEnsemble {
 public:
  ProductEnsemble(std::size_t N, const WignerGrid& one_particle);
  ProductEnsemble(std::size_t N, Marginal position);

  std::size_t N() const { return N_; }
  const Marginal& position() const { return position_; }
  bool has_phase_space() const { return w_.has_value(); }
  /// Throws DomainError when built from a position marginal only.
  const WignerGrid& phase_space() const;

 private:
  std::size_t N_;
  Marginal position_;
  std::optional<WignerGrid> w_;
};

/// Per-bin field; variance is empty when not computed.
struct DensityField {
  std::vector<double> center;
  std::vector<double> width;
  std::vector<double> value;
  std::vector<double> variance;
};

struct BinnedConstitutive {
  DensityField momentum;       // <g> per bin
  DensityField gradient_term;  // (kT/2gamma) d<n>/dx per bin
  DensityField residual;       // sum of the two
  double relative_sup = 0.0;
};

struct PhaseSpaceCell {
  double q_lo, q_hi, p_lo, p_hi;
};

/// Exact multinomial law over occupation vectors. When the window does not cover all
/// one-particle mass, a final "elsewhere" bin is appended.
struct OccupationDistribution {
  std::size_t N = 0;
  std::vector<double> bin_probability;
  bool has_elsewhere_bin = false;
  std::vector<std::vector<int>> outcomes;
  std::vector<double> probability;

  std::vector<double> mean() const;
  std::vector<double> variance() const;
};

struct OccupationSample {
  std::size_t N = 0;
  std::size_t draws = 0;
  std::vector<double> bin_probability;
  bool has_elsewhere_bin = false;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> mean_stderr;
};

struct EnumerationCap {
  std::size_t max_N = 12;
  std::size_t max_bins = 6;
};

/// One-particle window averages <delta_V> and <delta_V^2> per bin.
struct WindowAverages {
  std::vector<double> first;
  std::vector<double> second;
};
WindowAverages window_averages(const Marginal& f, const SmearingWindow& window);

DensityField mean_number_density(const ProductEnsemble& ens, const SmearingWindow& window);
/// N (<delta^2> - <delta>^2) per bin; the mean is carried in value.
DensityField number_density_variance(const ProductEnsemble& ens, const SmearingWindow& window);
/// (1/N) (<delta^2> - <delta>^2) / <delta>^2 per bin; zero-mass bins throw UndefinedFluctuationError.
DensityField relative_fluctuation(const ProductEnsemble& ens, const SmearingWindow& window);

OccupationDistribution occupation_distribution(const ProductEnsemble& ens, const SmearingWindow& window,
                                               EnumerationCap cap = {});
OccupationDistribution multinomial_distribution(std::size_t N, const std::vector<double>& bin_probability,
                                                EnumerationCap cap = {});
OccupationSample sample_occupations(const ProductEnsemble& ens, const SmearingWindow& window, std::size_t draws,
                                    std::mt19937_64& rng);

DensityField mean_momentum_density(const ProductEnsemble& ens, const SmearingWindow& window);
BinnedConstitutive constitutive_residual(const ProductEnsemble& ens, const SmearingWindow& window,
                                         const QbmParams& params);

double mean_phase_space_density(const ProductEnsemble& ens, const PhaseSpaceCell& cell);

}  // namespace dhh
