#include <filesystem>
#include <limits>
#include <random>

#include <doctest.h>
#include <json.hpp>

#include "dhh/io.hpp"

using namespace dhh;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("dhh_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("numbers round-trip through text") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, i % 40 - 20);
    CHECK(std::stod(io::format_number(x)) == x);
  }
  CHECK(io::format_number(0.5) == "0.5");
  CHECK(io::format_number(3.0) == "3");
  CHECK(io::format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("Wigner CSV round-trip is bit exact") {
  const Axis q(-3, 3, 13), p(-2.5, 2.5, 11);
  const auto w = gaussian_wigner(q, p, 0.1, -0.2, 0.7, 0.9, 0.1);
  const auto text = io::wigner_csv(w);
  CHECK(text.rfind("q_min=-3,q_max=3,n_q=13,p_min=-2.5,p_max=2.5,n_p=11\n", 0) == 0);
  const auto back = io::parse_wigner_csv(text);
  CHECK(back.q() == q);
  CHECK(back.p() == p);
  CHECK(back.values() == w.values());
  CHECK(io::wigner_csv(back) == text);
  CHECK_THROWS(io::parse_wigner_csv("q_min=0\n1,2\n"));
}

TEST_CASE("artifacts are written atomically with a descriptor") {
  const auto dir = scratch_dir("io");
  const Axis q(-3, 3, 9), p(-3, 3, 9);
  io::write_wigner(gaussian_wigner(q, p, 0, 0, 1, 1), dir, "w");
  CHECK(fs::exists(dir / "w.csv"));
  const auto meta = nlohmann::json::parse(io::read_file(dir / "w.json"));
  CHECK(meta["data_file"] == "w.csv");
  CHECK(meta["shape"][0] == 9);
  for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().extension() != ".tmp");

  io::write_atomic(dir / "x.txt", "first");
  io::write_atomic(dir / "x.txt", "second");
  CHECK(io::read_file(dir / "x.txt") == "second");
  fs::remove_all(dir);
}

TEST_CASE("tabular outputs") {
  CHECK(io::csv_table({"a", "b"}, {{1, 2.5}, {3, -4}}) == "a,b\n1,2.5\n3,-4\n");

  const Axis q(-8, 8, 65), p(-6, 6, 49);
  const auto w = gaussian_wigner(q, p, 0.5, 0, 1, 1);
  const auto row = io::moment_row(2.0, w);
  CHECK(row.t == 2.0);
  const auto ts = io::time_series_csv({row});
  CHECK(ts.rfind("t,mean_q,mean_p,var_q,var_p,cov_qp,mass_in_domain\n", 0) == 0);

  DensityField f{{0.5}, {1.0}, {2.0}, {}};
  CHECK(io::density_field_csv(f) == "bin_center,bin_width,value\n0.5,1,2\n");
  f.variance = {0.25};
  CHECK(io::density_field_csv(f) == "bin_center,bin_width,value,variance\n0.5,1,2,0.25\n");

  DecoherenceMatrix D;
  D.labels = {"a", "b"};
  D.D = CMatrix::Identity(2, 2) * 0.5;
  D.D(0, 1) = {0.1, 0.2};
  D.D(1, 0) = {0.1, -0.2};
  const auto j = nlohmann::json::parse(io::decoherence_json(D, 0.2));
  CHECK(j["labels"].size() == 2);
  CHECK(j["imag"][0][1].get<double>() == 0.2);
  CHECK(j["probabilities"][1].get<double>() == 0.5);
  CHECK(j["epsilon"].get<double>() == 0.2);

  HydroFields h;
  h.t = 0.0;
  h.center = {0.0};
  h.width = {1.0};
  h.n = {1}, h.g = {2}, h.h = {3}, h.energy_flux = {4};
  const auto hc = io::hydro_csv({h}, {});
  CHECK(hc.rfind("t,bin,n,g,h,residual_n,residual_g,residual_h\n", 0) == 0);
  CHECK(hc.find("nan") != std::string::npos);
}
