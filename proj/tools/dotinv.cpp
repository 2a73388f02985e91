// Command-line front end: synthetic data generation, single inversions,
// method-comparison matrices, and table reporting.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dotinv/harness.hpp"
#include "dotinv/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dotinv;

namespace {

std::string default_out_root() {
  if (const char *env = std::getenv("DOTINV_OUT"))
    return env;
  return "out";
}

// Declarative key-value config (JSON) merged under the CLI flags.
void apply_config_file(ExperimentSpec &spec, const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw CLI::ValidationError("--config", "cannot open " + path);
  json cfg = json::parse(is);
  if (cfg.contains("mesh")) {
    const json &m = cfg["mesh"];
    spec.mesh.nx = m.value("nx", spec.mesh.nx);
    spec.mesh.ny = m.value("ny", spec.mesh.ny);
    spec.mesh.extent_x = m.value("extent_x", spec.mesh.extent_x);
    spec.mesh.extent_y = m.value("extent_y", spec.mesh.extent_y);
    spec.mesh.a = m.value("a", spec.mesh.a);
    spec.mesh.nu = m.value("nu", spec.mesh.nu);
    spec.mesh.diffusion_value = m.value("diffusion", spec.mesh.diffusion_value);
  }
  spec.n_src = cfg.value("sources", spec.n_src);
  spec.n_det = cfg.value("detectors", spec.n_det);
  spec.pals_grid = cfg.value("pals_grid", spec.pals_grid);
  spec.noise_permille = cfg.value("noise_permille", spec.noise_permille);
  spec.inhomogeneity_amplitude =
      cfg.value("inhomogeneity_amplitude", spec.inhomogeneity_amplitude);
  spec.repeats = cfg.value("repeats", spec.repeats);
  spec.master_seed = cfg.value("seed", spec.master_seed);
  spec.n_samples = cfg.value("n_samples", spec.n_samples);
  spec.threshold = cfg.value("threshold", spec.threshold);
  spec.epsilon_trunc = cfg.value("epsilon_trunc", spec.epsilon_trunc);
  spec.max_iterations = cfg.value("max_iterations", spec.max_iterations);
  if (cfg.contains("truth")) {
    const json &t = cfg["truth"];
    spec.truth.center_x = t.value("center_x", spec.truth.center_x);
    spec.truth.center_y = t.value("center_y", spec.truth.center_y);
    spec.truth.size = t.value("size", spec.truth.size);
  }
}

MethodRow find_row(const std::string &label) {
  for (const auto &row : default_method_rows())
    if (row.label == label)
      return row;
  std::ostringstream known;
  for (const auto &row : default_method_rows())
    known << " " << row.label;
  throw CLI::ValidationError("--method", "unknown method '" + label +
                                             "'; known:" + known.str());
}

void write_observations(const std::string &path, const ObservationData &data) {
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("cannot open " + path);
  os.precision(17);
  os << "n_det " << data.D.data.rows() << "\n";
  os << "n_src " << data.D.n_src << "\n";
  os << "n_omega " << data.D.n_omega << "\n";
  os << "noise_norm " << data.noise_norm << "\n";
  for (long r = 0; r < data.D.data.rows(); ++r) {
    for (long c = 0; c < data.D.data.cols(); ++c) {
      const std::complex<double> v = data.D.data(r, c);
      os << v.real();
      if (v.imag() != 0.0)
        os << "+" << v.imag() << "i";
      os << (c + 1 == data.D.data.cols() ? "" : " ");
    }
    os << "\n";
  }
}

int cmd_generate(const ExperimentSpec &spec, const std::string &out) {
  fs::create_directories(out);
  FomSystem sys = spec.assemble_system();
  const uint64_t seed = splitmix64(spec.master_seed);
  ObservationData data = generate_data(sys, spec, seed);
  write_grid((fs::path(out) / "truth.grid").string(), truth_field(spec, seed),
             spec.mesh.nx, spec.mesh.ny);
  write_observations((fs::path(out) / "observations.txt").string(), data);
  std::cout << "wrote " << out << "/truth.grid and observations.txt"
            << " (noise " << data.noise_norm << ")\n";
  return 0;
}

int cmd_invert(const ExperimentSpec &spec, const std::string &label,
               const std::string &out) {
  fs::create_directories(out);
  const MethodRow row = find_row(label);
  const uint64_t seed = splitmix64(spec.master_seed);
  FomSystem sys = spec.assemble_system();
  ObservationData data = generate_data(sys, spec, seed);
  const PalsModel pals = spec.pals();
  const Eigen::VectorXd p0 = initial_parameters(pals, spec.mesh, spec.pals_grid);
  InversionResult result =
      run_inversion(sys, pals, data, p0, row_config(spec, row, seed));

  write_history_csv((fs::path(out) / "history.csv").string(), result.history);
  write_ledger((fs::path(out) / "ledger.txt").string(), result.ledger_counts,
               result.solves_total, result.solves_amortized);
  write_vector((fs::path(out) / "p_final.txt").string(), result.p);
  const double err = export_reconstruction(spec, result, seed, out);
  std::cout << label << ": " << (result.converged ? "converged" : "NOT converged")
            << ", residual " << result.full_residual_norm << " (target "
            << result.target_norm << "), solves " << result.solves_total
            << " (amortized " << result.solves_amortized << "), field error "
            << err << "\n";
  return result.converged ? 0 : 2;
}

void print_table(const std::vector<RowStats> &table) {
  std::cout << "method          total(min/25/50/75/max)      "
               "amortized(min/25/50/75/max)  conv\n";
  for (const auto &s : table) {
    std::ostringstream t, a;
    for (int i = 0; i < 5; ++i) {
      t << s.total[i] << (i + 1 < 5 ? "/" : "");
      a << s.amortized[i] << (i + 1 < 5 ? "/" : "");
    }
    std::cout << s.label;
    for (size_t pad = s.label.size(); pad < 16; ++pad)
      std::cout << ' ';
    std::cout << t.str();
    for (size_t pad = t.str().size(); pad < 29; ++pad)
      std::cout << ' ';
    std::cout << a.str();
    for (size_t pad = a.str().size(); pad < 29; ++pad)
      std::cout << ' ';
    std::cout << s.converged << "/" << s.runs << (s.flagged ? "  FLAGGED" : "")
              << "\n";
  }
}

int cmd_matrix(ExperimentSpec spec, const std::vector<std::string> &labels,
               const std::string &out) {
  if (!labels.empty()) {
    spec.rows.clear();
    for (const auto &label : labels)
      spec.rows.push_back(find_row(label));
  }
  fs::create_directories(out);
  std::vector<RowStats> table = run_matrix(spec, out);
  print_table(table);
  std::cout << "table written to " << out << "/table.csv\n";
  return 0;
}

int cmd_report(const std::string &out) {
  const fs::path path = fs::path(out) / "table.csv";
  std::ifstream is(path);
  if (!is) {
    std::cerr << "no table at " << path << " (run `dotinv matrix` first)\n";
    return 1;
  }
  std::string line;
  std::getline(is, line); // header
  std::vector<RowStats> table;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    RowStats s;
    std::string cell;
    std::getline(ls, s.label, ',');
    for (int i = 0; i < 5; ++i) {
      std::getline(ls, cell, ',');
      s.total[i] = std::stol(cell);
    }
    for (int i = 0; i < 5; ++i) {
      std::getline(ls, cell, ',');
      s.amortized[i] = std::stol(cell);
    }
    std::getline(ls, cell, ',');
    s.converged = std::stoi(cell);
    std::getline(ls, cell, ',');
    s.runs = std::stoi(cell);
    std::getline(ls, cell, ',');
    s.flagged = cell == "1";
    table.push_back(std::move(s));
  }
  print_table(table);
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Reduced-order-model accelerated diffuse tomography inversion"};
  app.require_subcommand(1);

  ExperimentSpec spec;
  std::string config_path, out = default_out_root(), method = "1pt-resid-xp";
  std::vector<std::string> labels;
  int mesh_points = 0; // 0 = keep config/default

  auto add_common = [&](CLI::App *cmd) {
    cmd->add_option("--config", config_path, "JSON experiment config file");
    cmd->add_option("--mesh", mesh_points, "grid points per axis (square mesh)");
    cmd->add_option("--sources", spec.n_src, "number of sources (top edge)");
    cmd->add_option("--detectors", spec.n_det, "number of detectors (bottom edge)");
    cmd->add_option("--seed", spec.master_seed, "master RNG seed");
    cmd->add_option("--noise-permille", spec.noise_permille, "noise level in permille");
    cmd->add_option("--out", out, "output directory (default $DOTINV_OUT or ./out)");
  };

  CLI::App *generate = app.add_subcommand("generate", "write synthetic data");
  add_common(generate);

  CLI::App *invert = app.add_subcommand("invert", "run a single inversion");
  add_common(invert);
  invert->add_option("--method", method, "method row label");
  invert->add_option("--max-iterations", spec.max_iterations, "iteration cap");

  CLI::App *matrix = app.add_subcommand("matrix", "run the method comparison matrix");
  add_common(matrix);
  matrix->add_option("--rows", labels, "method row labels (default: all)");
  matrix->add_option("--repeats", spec.repeats, "randomized repeats per row");

  CLI::App *report = app.add_subcommand("report", "pretty-print a matrix table");
  report->add_option("--out", out, "output directory holding table.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty())
      apply_config_file(spec, config_path);
    if (mesh_points > 0)
      spec.mesh.nx = spec.mesh.ny = mesh_points;
    if (generate->parsed())
      return cmd_generate(spec, out);
    if (invert->parsed())
      return cmd_invert(spec, method, out);
    if (matrix->parsed())
      return cmd_matrix(spec, labels, out);
    if (report->parsed())
      return cmd_report(out);
  } catch (const CLI::Error &e) {
    return app.exit(e);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
