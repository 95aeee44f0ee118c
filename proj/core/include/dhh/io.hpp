#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dhh/ensemble_stats.hpp"
#include "dhh/histories.hpp"
#include "dhh/local_equilibrium.hpp"
#include "dhh/phase_space.hpp"

namespace dhh::io {

/// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// Shortest text that round-trips the double exactly.
std::string format_number(double x);

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows);

/// First line: axis metadata as key=value pairs; then n_q rows of n_p values.
std::string wigner_csv(const WignerGrid& w);
WignerGrid parse_wigner_csv(const std::string& text);
/// Writes <stem>.csv and <stem>.json; the descriptor holds extents, shape and the data file name.
void write_wigner(const WignerGrid& w, const std::filesystem::path& dir, const std::string& stem);

struct MomentRow {
  double t = 0.0;
  PhaseSpaceMoments m;
  double mass_in_domain = 0.0;
};
MomentRow moment_row(double t, const WignerGrid& w);
std::string time_series_csv(const std::vector<MomentRow>& rows);

std::string density_field_csv(const DensityField& f);
std::string marginal_csv(const Marginal& m);

/// {labels, real, imag, probabilities, epsilon}.
std::string decoherence_json(const DecoherenceMatrix& D, double epsilon);

std::string hydro_csv(const std::vector<HydroFields>& series, const std::vector<ContinuityResidual>& residuals);

}  // namespace dhh::io
