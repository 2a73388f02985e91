#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dotinv/driver.hpp"
#include "dotinv/io.hpp"

namespace dotinv {

// Pixel-basis target anomaly: a kite-shaped blob that is not exactly
// representable in the PaLS basis. Defined in fractional coordinates of
// the domain.
struct AnomalySpec {
  double center_x = 0.55;
  double center_y = 0.55;
  double size = 0.16; // fractional half-width
};

inline bool inside_kite(const AnomalySpec &a, double fx, double fy) {
  // Invert the kite curve (cos t + 0.65 cos 2t, 1.5 sin t) by polygon test.
  constexpr int kSamples = 256;
  std::array<double, kSamples> px, py;
  for (int k = 0; k < kSamples; ++k) {
    const double t = 2.0 * M_PI * k / kSamples;
    px[k] = a.center_x + a.size * (std::cos(t) + 0.65 * std::cos(2 * t) - 0.65);
    py[k] = a.center_y + a.size * 1.35 * std::sin(t);
  }
  bool in = false;
  for (int k = 0, m = kSamples - 1; k < kSamples; m = k++) {
    if (((py[k] > fy) != (py[m] > fy)) &&
        (fx < (px[m] - px[k]) * (fy - py[k]) / (py[m] - py[k]) + px[k]))
      in = !in;
  }
  return in;
}

struct MethodRow {
  std::string label;
  ModelMode mode = ModelMode::FullOrder;
  UpdateKind kind = UpdateKind::None;
  UpdateLocation location = UpdateLocation::ProposedPoint;
};

inline std::vector<MethodRow> default_method_rows() {
  return {
      {"fom", ModelMode::FullOrder, UpdateKind::None, UpdateLocation::ProposedPoint},
      {"3pt-none", ModelMode::Rom3Point, UpdateKind::None, UpdateLocation::ProposedPoint},
      {"3pt-interp-xp", ModelMode::Rom3Point, UpdateKind::Interpolatory,
       UpdateLocation::ProposedPoint},
      {"3pt-resid-xp", ModelMode::Rom3Point, UpdateKind::ResidualDriven,
       UpdateLocation::ProposedPoint},
      {"1pt-resid-xp", ModelMode::Rom1Point, UpdateKind::ResidualDriven,
       UpdateLocation::ProposedPoint},
  };
}

// Desk-scale default experiment: 51x51 mesh, 16 sources and detectors,
// 9 CSRBFs (36 parameters), a single omega = 0 frequency, 11 repeats.
struct ExperimentSpec {
  MeshConfig mesh;
  int n_src = 16;
  int n_det = 16;
  int pals_grid = 3;
  AnomalySpec truth;
  double inhomogeneity_amplitude = 0.05;
  double noise_permille = 1.0;
  int repeats = 11;
  uint64_t master_seed = 20240811;
  int n_samples = 17;
  double threshold = 10.0;
  double epsilon_trunc = 1.0 / 20.0;
  int max_iterations = 300;
  std::vector<MethodRow> rows = default_method_rows();

  PalsModel pals() const {
    PalsModel model;
    model.n_bumps = pals_grid * pals_grid;
    return model;
  }

  FomSystem assemble_system() const {
    return assemble(mesh,
                    PlacementSpec::evenly_spaced(PlacementSpec::Edge::Top, n_src),
                    PlacementSpec::evenly_spaced(PlacementSpec::Edge::Bottom, n_det));
  }
};

// Pixel-basis truth absorption field with the small inhomogeneity mixed in.
inline Eigen::VectorXd truth_field(const ExperimentSpec &spec, uint64_t seed) {
  const MeshConfig &mesh = spec.mesh;
  const PalsModel pals = spec.pals();
  Eigen::VectorXd mu(mesh.n());
  std::mt19937_64 eng(splitmix64(seed ^ 0x7274687521ULL));
  std::uniform_real_distribution<double> pert(-spec.inhomogeneity_amplitude,
                                              spec.inhomogeneity_amplitude);
  for (int j = 0; j < mesh.ny; ++j)
    for (int i = 0; i < mesh.nx; ++i) {
      const double fx = mesh.x(i) / mesh.extent_x;
      const double fy = mesh.y(j) / mesh.extent_y;
      const double base = inside_kite(spec.truth, fx, fy) ? pals.mu_in : pals.mu_out;
      mu[mesh.index(i, j)] = base * (1.0 + pert(eng));
    }
  return mu;
}

// Synthetic measurements: forward problem on the pixel-basis truth plus
// white noise scaled to the requested permille level. The recorded noise
// norm equals the measured ||D - M||_F by construction.
inline ObservationData generate_data(const FomSystem &sys, const ExperimentSpec &spec,
                                     uint64_t seed) {
  const Eigen::VectorXd mu = truth_field(spec, seed);
  ObservationData data;
  data.D.n_src = sys.n_src();
  data.D.n_omega = sys.n_omega();
  data.D.data.resize(sys.n_det(), sys.n_src() * sys.n_omega());
  for (int j = 0; j < sys.n_omega(); ++j)
    data.D.block(j) = frequency_response(sys, sys.frequencies[j], mu);
  const double m_norm = data.D.data.norm();
  std::mt19937_64 eng(splitmix64(seed ^ 0x6e6f697365ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXcd noise(data.D.data.rows(), data.D.data.cols());
  const bool real = sys.all_real();
  for (long c = 0; c < noise.cols(); ++c)
    for (long r = 0; r < noise.rows(); ++r)
      noise(r, c) = real ? std::complex<double>(gauss(eng), 0.0)
                         : std::complex<double>(gauss(eng), gauss(eng));
  data.noise_norm = (spec.noise_permille / 1000.0) * m_norm;
  noise *= data.noise_norm / noise.norm();
  data.D.data += noise;
  sys.ledger.reset(); // data generation is not part of any method's budget
  sys.clear_cache();
  return data;
}

struct RowStats {
  std::string label;
  // min, 25th, median, 75th, max
  std::array<long, 5> total{};
  std::array<long, 5> amortized{};
  int converged = 0;
  int runs = 0;
  bool flagged = false; // non-convergent in a majority of repeats
  std::vector<InversionResult> results;
};

inline std::array<long, 5> percentiles(std::vector<long> v) {
  std::sort(v.begin(), v.end());
  const auto at = [&](double q) {
    return v[static_cast<size_t>(std::lround(q * (v.size() - 1)))];
  };
  return {at(0.0), at(0.25), at(0.5), at(0.75), at(1.0)};
}

inline InversionConfig row_config(const ExperimentSpec &spec, const MethodRow &row,
                                  uint64_t seed) {
  InversionConfig config;
  config.mode = row.mode;
  config.policy.kind = row.kind;
  config.policy.location = row.location;
  config.policy.epsilon_trunc = spec.epsilon_trunc;
  config.threshold = spec.threshold;
  config.n_samples = spec.n_samples;
  config.max_iterations = spec.max_iterations;
  config.seed = seed;
  return config;
}

inline RowStats run_method_row(const ExperimentSpec &spec, const MethodRow &row,
                               const std::string &outdir = "") {
  RowStats stats;
  stats.label = row.label;
  stats.runs = spec.repeats;
  const PalsModel pals = spec.pals();
  std::vector<long> totals, amortizeds;
  for (int rep = 0; rep < spec.repeats; ++rep) {
    const uint64_t seed = splitmix64(spec.master_seed + 1000003ULL * rep);
    FomSystem sys = spec.assemble_system();
    ObservationData data = generate_data(sys, spec, seed);
    const Eigen::VectorXd p0 = initial_parameters(pals, spec.mesh, spec.pals_grid);
    InversionResult result =
        run_inversion(sys, pals, data, p0, row_config(spec, row, seed));
    totals.push_back(result.solves_total);
    amortizeds.push_back(result.solves_amortized);
    if (result.converged)
      ++stats.converged;
    if (!outdir.empty()) {
      namespace fs = std::filesystem;
      const fs::path dir = fs::path(outdir) / row.label / ("run" + std::to_string(rep));
      fs::create_directories(dir);
      write_history_csv((dir / "history.csv").string(), result.history);
      write_ledger((dir / "ledger.txt").string(), result.ledger_counts,
                   result.solves_total, result.solves_amortized);
      write_vector((dir / "p_final.txt").string(), result.p);
      write_grid((dir / "reconstruction.grid").string(),
                 absorption_field(pals, result.p, spec.mesh), spec.mesh.nx,
                 spec.mesh.ny);
    }
    stats.results.push_back(std::move(result));
  }
  stats.total = percentiles(totals);
  stats.amortized = percentiles(amortizeds);
  stats.flagged = 2 * stats.converged < stats.runs;
  return stats;
}

inline std::vector<RowStats> run_matrix(const ExperimentSpec &spec,
                                        const std::string &outdir = "") {
  std::vector<RowStats> table;
  for (const auto &row : spec.rows)
    table.push_back(run_method_row(spec, row, outdir));
  if (!outdir.empty()) {
    std::ofstream os((std::filesystem::path(outdir) / "table.csv").string());
    os << "label,total_min,total_p25,total_median,total_p75,total_max,"
          "amortized_min,amortized_p25,amortized_median,amortized_p75,"
          "amortized_max,converged,runs,flagged\n";
    for (const auto &s : table) {
      os << s.label;
      for (long v : s.total)
        os << "," << v;
      for (long v : s.amortized)
        os << "," << v;
      os << "," << s.converged << "," << s.runs << "," << (s.flagged ? 1 : 0)
         << "\n";
    }
  }
  return table;
}

// Reconstruction bundle: truth and reconstructed absorption fields plus a
// relative field error summary.
inline double export_reconstruction(const ExperimentSpec &spec,
                                    const InversionResult &result, uint64_t seed,
                                    const std::string &outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  const Eigen::VectorXd truth = truth_field(spec, seed);
  const Eigen::VectorXd recon =
      absorption_field(spec.pals(), result.p, spec.mesh);
  write_grid((fs::path(outdir) / "truth.grid").string(), truth, spec.mesh.nx,
             spec.mesh.ny);
  write_grid((fs::path(outdir) / "reconstruction.grid").string(), recon,
             spec.mesh.nx, spec.mesh.ny);
  const double err = (recon - truth).norm() / truth.norm();
  std::ofstream os((fs::path(outdir) / "error.txt").string());
  os << "relative_field_error " << err << "\n";
  return err;
}

} // namespace dotinv
