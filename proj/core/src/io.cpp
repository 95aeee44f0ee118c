#include "dhh/io.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace dhh::io {

namespace fs = std::filesystem;

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_number(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
  std::string s;
  for (std::size_t k = 0; k < header.size(); ++k) s += (k ? "," : "") + header[k];
  s += '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw Error("csv row width does not match the header");
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) s += ',';
      s += format_number(row[k]);
    }
    s += '\n';
  }
  return s;
}

std::string wigner_csv(const WignerGrid& w) {
  std::string s = "q_min=" + format_number(w.q().min()) + ",q_max=" + format_number(w.q().max()) +
                  ",n_q=" + std::to_string(w.n_q()) + ",p_min=" + format_number(w.p().min()) +
                  ",p_max=" + format_number(w.p().max()) + ",n_p=" + std::to_string(w.n_p()) + "\n";
  for (std::size_t i = 0; i < w.n_q(); ++i) {
    for (std::size_t j = 0; j < w.n_p(); ++j) {
      if (j) s += ',';
      s += format_number(w(i, j));
    }
    s += '\n';
  }
  return s;
}

WignerGrid parse_wigner_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty grid file");
  double qmin = 0, qmax = 0, pmin = 0, pmax = 0;
  std::size_t nq = 0, np = 0;
  int seen = 0;
  std::istringstream hs(line);
  std::string item;
  while (std::getline(hs, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ParseError("grid header entry without '=': " + item);
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    if (key == "q_min") qmin = std::stod(val);
    else if (key == "q_max") qmax = std::stod(val);
    else if (key == "n_q") nq = std::stoul(val);
    else if (key == "p_min") pmin = std::stod(val);
    else if (key == "p_max") pmax = std::stod(val);
    else if (key == "n_p") np = std::stoul(val);
    else throw ParseError("unknown grid header key " + key);
    ++seen;
  }
  if (seen != 6) throw ParseError("grid header needs q_min, q_max, n_q, p_min, p_max, n_p");
  std::vector<double> v;
  v.reserve(nq * np);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t cols = 0;
    while (std::getline(ls, item, ',')) {
      v.push_back(std::stod(item));
      ++cols;
    }
    if (cols != np) throw ParseError("grid row " + std::to_string(row + 2) + " has " + std::to_string(cols) + " values");
    ++row;
  }
  if (row != nq) throw ParseError("grid body has " + std::to_string(row) + " rows, expected " + std::to_string(nq));
  return WignerGrid(Axis(qmin, qmax, nq), Axis(pmin, pmax, np), std::move(v));
}

void write_wigner(const WignerGrid& w, const fs::path& dir, const std::string& stem) {
  write_atomic(dir / (stem + ".csv"), wigner_csv(w));
  nlohmann::ordered_json d;
  d["extents"] = {{"q", {w.q().min(), w.q().max()}}, {"p", {w.p().min(), w.p().max()}}};
  d["shape"] = {w.n_q(), w.n_p()};
  d["layout"] = "row-major, rows indexed by q";
  d["data_file"] = stem + ".csv";
  write_atomic(dir / (stem + ".json"), d.dump(2) + "\n");
}

MomentRow moment_row(double t, const WignerGrid& w) { return {t, moments(w), w.integral()}; }

std::string time_series_csv(const std::vector<MomentRow>& rows) {
  std::vector<std::vector<double>> body;
  for (const auto& r : rows)
    body.push_back({r.t, r.m.mean_q, r.m.mean_p, r.m.var_q, r.m.var_p, r.m.cov_qp, r.mass_in_domain});
  return csv_table({"t", "mean_q", "mean_p", "var_q", "var_p", "cov_qp", "mass_in_domain"}, body);
}

std::string density_field_csv(const DensityField& f) {
  const bool var = !f.variance.empty();
  std::vector<std::string> header{"bin_center", "bin_width", "value"};
  if (var) header.push_back("variance");
  std::vector<std::vector<double>> body;
  for (std::size_t b = 0; b < f.value.size(); ++b) {
    body.push_back({f.center[b], f.width[b], f.value[b]});
    if (var) body.back().push_back(f.variance[b]);
  }
  return csv_table(header, body);
}

std::string marginal_csv(const Marginal& m) {
  std::vector<std::vector<double>> body;
  for (std::size_t i = 0; i < m.axis.size(); ++i) body.push_back({m.axis[i], m.samples[i]});
  return csv_table({m.kind == AxisKind::position ? "q" : "p", "density"}, body);
}

std::string decoherence_json(const DecoherenceMatrix& D, double epsilon) {
  nlohmann::ordered_json j;
  j["labels"] = D.labels;
  const auto n = D.D.rows();
  auto re = nlohmann::json::array(), im = nlohmann::json::array();
  for (Eigen::Index a = 0; a < n; ++a) {
    auto rr = nlohmann::json::array(), ii = nlohmann::json::array();
    for (Eigen::Index b = 0; b < n; ++b) {
      rr.push_back(D.D(a, b).real());
      ii.push_back(D.D(a, b).imag());
    }
    re.push_back(rr);
    im.push_back(ii);
  }
  j["real"] = re;
  j["imag"] = im;
  const Eigen::VectorXd p = D.probabilities();
  j["probabilities"] = std::vector<double>(p.data(), p.data() + p.size());
  j["epsilon"] = epsilon;
  return j.dump(2) + "\n";
}

std::string hydro_csv(const std::vector<HydroFields>& series, const std::vector<ContinuityResidual>& residuals) {
  if (!residuals.empty() && residuals.size() != series.size())
    throw Error("residual series must match the field series");
  std::vector<std::vector<double>> body;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < series.size(); ++k)
    for (std::size_t b = 0; b < series[k].n.size(); ++b) {
      const bool r = !residuals.empty();
      body.push_back({series[k].t, double(b), series[k].n[b], series[k].g[b], series[k].h[b],
                      r ? residuals[k].n[b] : nan, r ? residuals[k].g[b] : nan, r ? residuals[k].h[b] : nan});
    }
  return csv_table({"t", "bin", "n", "g", "h", "residual_n", "residual_g", "residual_h"}, body);
}

}  // namespace dhh::io
