#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <unistd.h>

#include "dotinv/harness.hpp"
#include "dotinv/io.hpp"

using namespace dotinv;

namespace {
// Downsized experiment for fast mechanics tests.
ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.mesh.nx = spec.mesh.ny = 21;
  spec.n_src = spec.n_det = 6;
  spec.pals_grid = 2;
  spec.repeats = 2;
  spec.max_iterations = 120;
  return spec;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("dotinv_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};
} // namespace

TEST_CASE("kite anomaly has the expected gross geometry") {
  AnomalySpec a;
  CHECK(inside_kite(a, a.center_x, a.center_y));
  CHECK_FALSE(inside_kite(a, 0.05, 0.05));
  CHECK_FALSE(inside_kite(a, 0.95, 0.95));
}

TEST_CASE("truth field is two-valued up to the inhomogeneity") {
  ExperimentSpec spec = small_spec();
  Eigen::VectorXd mu = truth_field(spec, 1);
  const PalsModel pals = spec.pals();
  const double lo = pals.mu_out * (1.0 - spec.inhomogeneity_amplitude);
  const double hi = pals.mu_in * (1.0 + spec.inhomogeneity_amplitude);
  CHECK(mu.minCoeff() >= lo - 1e-12);
  CHECK(mu.maxCoeff() <= hi + 1e-12);
  // Both phases are present.
  CHECK(mu.minCoeff() < 0.01);
  CHECK(mu.maxCoeff() > 0.1);
  // Deterministic in the seed.
  CHECK(truth_field(spec, 1) == mu);
  CHECK(truth_field(spec, 2) != mu);
}

TEST_CASE("generated data: noise level identity and determinism") {
  ExperimentSpec spec = small_spec();
  FomSystem sys = spec.assemble_system();
  ObservationData data = generate_data(sys, spec, 5);
  const Eigen::VectorXd mu = truth_field(spec, 5);
  Eigen::MatrixXcd M = frequency_response(sys, 0.0, mu);
  const double measured = (data.D.data - M).norm();
  CHECK(std::abs(measured - data.noise_norm) <= 1e-12 * M.norm());
  CHECK(data.noise_norm ==
        doctest::Approx((spec.noise_permille / 1000.0) * M.norm()));
  // Ledger was reset: data generation is free.
  CHECK(sys.ledger.total() > 0); // the check above charged solves
  sys.ledger.reset();

  FomSystem sys2 = spec.assemble_system();
  ObservationData again = generate_data(sys2, spec, 5);
  CHECK(again.D.data == data.D.data);
  CHECK(sys2.ledger.total() == 0);

  // Vanishing noise level: D converges to M.
  ExperimentSpec quiet = spec;
  quiet.noise_permille = 1e-9;
  FomSystem sys3 = spec.assemble_system();
  ObservationData clean = generate_data(sys3, quiet, 5);
  CHECK((clean.D.data - M).norm() <= 1e-11 * M.norm());
}

TEST_CASE("percentiles: single sample collapses all columns") {
  auto p = percentiles({42});
  for (long v : p)
    CHECK(v == 42);
  auto q = percentiles({5, 1, 9, 3, 7});
  CHECK(q[0] == 1);
  CHECK(q[2] == 5);
  CHECK(q[4] == 9);
}

TEST_CASE("method row bookkeeping on a downsized experiment") {
  ExperimentSpec spec = small_spec();
  spec.repeats = 1;
  TempDir tmp;
  RowStats stats = run_method_row(spec, {"1pt-resid-xp", ModelMode::Rom1Point,
                                         UpdateKind::ResidualDriven,
                                         UpdateLocation::ProposedPoint},
                                  tmp.path.string());
  CHECK(stats.runs == 1);
  // repeats = 1: all percentile columns equal.
  for (int i = 1; i < 5; ++i) {
    CHECK(stats.total[i] == stats.total[0]);
    CHECK(stats.amortized[i] == stats.amortized[0]);
  }
  // Amortized = total - offline context for each run.
  const InversionResult &r = stats.results[0];
  long offline = r.ledger_counts.count(context::offline)
                     ? r.ledger_counts.at(context::offline)
                     : 0;
  CHECK(r.solves_amortized == r.solves_total - offline);
  // Per-run artifacts exist.
  namespace fs = std::filesystem;
  const fs::path run = tmp.path / "1pt-resid-xp" / "run0";
  CHECK(fs::exists(run / "history.csv"));
  CHECK(fs::exists(run / "ledger.txt"));
  CHECK(fs::exists(run / "p_final.txt"));
  CHECK(fs::exists(run / "reconstruction.grid"));
}

TEST_CASE("reconstruction export: bit-exact truth and bounded field") {
  ExperimentSpec spec = small_spec();
  spec.repeats = 1;
  const uint64_t seed = splitmix64(spec.master_seed + 0);
  FomSystem sys = spec.assemble_system();
  ObservationData data = generate_data(sys, spec, seed);
  const PalsModel pals = spec.pals();
  const Eigen::VectorXd p0 = initial_parameters(pals, spec.mesh, spec.pals_grid);
  InversionConfig config = row_config(
      spec, {"fom", ModelMode::FullOrder, UpdateKind::None,
             UpdateLocation::ProposedPoint},
      seed);
  InversionResult result = run_inversion(sys, pals, data, p0, config);

  TempDir tmp;
  const double err =
      export_reconstruction(spec, result, seed, tmp.path.string());
  int nx = 0, ny = 0;
  Eigen::VectorXd truth_back =
      read_grid((tmp.path / "truth.grid").string(), nx, ny);
  CHECK(nx == spec.mesh.nx);
  CHECK(truth_back == truth_field(spec, seed));

  Eigen::VectorXd recon =
      read_grid((tmp.path / "reconstruction.grid").string(), nx, ny);
  CHECK(recon.minCoeff() >= pals.mu_out - 1e-12);
  CHECK(recon.maxCoeff() <= pals.mu_in + 1e-12);

  // The optimized field beats the initial condition against the truth.
  InversionResult initial;
  initial.p = p0;
  const double err0 =
      export_reconstruction(spec, initial, seed, (tmp.path / "init").string());
  CHECK(err < err0);
}

TEST_CASE("grid file round trip") {
  TempDir tmp;
  Eigen::VectorXd v = Eigen::VectorXd::Random(12);
  const std::string path = (tmp.path / "grid.txt").string();
  write_grid(path, v, 4, 3);
  int nx = 0, ny = 0;
  Eigen::VectorXd back = read_grid(path, nx, ny);
  CHECK(nx == 4);
  CHECK(ny == 3);
  CHECK((back - v).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_THROWS(write_grid(path, v, 5, 3));
  CHECK_THROWS(read_grid((tmp.path / "missing").string(), nx, ny));
}

TEST_CASE("basis checkpoint round trip") {
  TempDir tmp;
  RomBasis basis;
  Eigen::MatrixXd cols = Eigen::MatrixXd::Random(30, 4);
  extend_orthonormal(basis.V, cols);
  const std::string path = (tmp.path / "basis.bin").string();
  save_basis(path, basis);
  RomBasis back = load_basis(path);
  CHECK(back.one_sided == basis.one_sided);
  CHECK(back.V == basis.V);
  std::ofstream((tmp.path / "junk.bin").string()) << "not a checkpoint";
  CHECK_THROWS(load_basis((tmp.path / "junk.bin").string()));
}

TEST_CASE("history and ledger files are written with headers") {
  TempDir tmp;
  std::vector<IterationRecord> history(2);
  history[0].iteration = 0;
  history[0].f = 1.5;
  history[1].iteration = 1;
  history[1].f_est = 3.0;
  const std::string hpath = (tmp.path / "history.csv").string();
  write_history_csv(hpath, history);
  std::ifstream is(hpath);
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "iteration,f,f_est,radius,step_norm,accepted,model_rejected,"
        "basis_added,rom_dim,solves_total");

  const std::string lpath = (tmp.path / "ledger.txt").string();
  write_ledger(lpath, {{"function-eval", 10}, {"offline", 4}}, 14, 10);
  std::ifstream ls(lpath);
  std::string all((std::istreambuf_iterator<char>(ls)),
                  std::istreambuf_iterator<char>());
  CHECK(all.find("function-eval 10") != std::string::npos);
  CHECK(all.find("total 14") != std::string::npos);
  CHECK(all.find("amortized 10") != std::string::npos);
}
