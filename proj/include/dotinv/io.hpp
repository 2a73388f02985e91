#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "dotinv/driver.hpp"

namespace dotinv {

// Portable row-major text grid: "nx ny" header then one row per line.
inline void write_grid(const std::string &path, const Eigen::VectorXd &values,
                       int nx, int ny) {
  if (values.size() != static_cast<long>(nx) * ny)
    throw std::invalid_argument("grid size mismatch");
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("cannot open " + path);
  os.precision(17);
  os << nx << " " << ny << "\n";
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i)
      os << values[j * nx + i] << (i + 1 == nx ? "" : " ");
    os << "\n";
  }
}

inline Eigen::VectorXd read_grid(const std::string &path, int &nx, int &ny) {
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("cannot open " + path);
  is >> nx >> ny;
  Eigen::VectorXd values(static_cast<long>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      is >> values[j * nx + i];
  if (!is)
    throw std::runtime_error("truncated grid file " + path);
  return values;
}

// Binary basis checkpoint: magic, one-sided flag, shapes, column-major data.
inline void save_basis(const std::string &path, const RomBasis &basis) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw std::runtime_error("cannot open " + path);
  const char magic[8] = {'D', 'I', 'B', 'A', 'S', 'I', 'S', '1'};
  os.write(magic, 8);
  const uint8_t one_sided = basis.one_sided ? 1 : 0;
  os.write(reinterpret_cast<const char *>(&one_sided), 1);
  auto write_mat = [&](const Eigen::MatrixXd &M) {
    const int64_t rows = M.rows(), cols = M.cols();
    os.write(reinterpret_cast<const char *>(&rows), 8);
    os.write(reinterpret_cast<const char *>(&cols), 8);
    os.write(reinterpret_cast<const char *>(M.data()),
             static_cast<std::streamsize>(sizeof(double) * M.size()));
  };
  write_mat(basis.V);
  write_mat(basis.one_sided ? Eigen::MatrixXd() : basis.W);
}

inline RomBasis load_basis(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::string(magic, 8) != "DIBASIS1")
    throw std::runtime_error("not a basis checkpoint: " + path);
  RomBasis basis;
  uint8_t one_sided = 1;
  is.read(reinterpret_cast<char *>(&one_sided), 1);
  basis.one_sided = one_sided != 0;
  auto read_mat = [&](Eigen::MatrixXd &M) {
    int64_t rows = 0, cols = 0;
    is.read(reinterpret_cast<char *>(&rows), 8);
    is.read(reinterpret_cast<char *>(&cols), 8);
    M.resize(rows, cols);
    is.read(reinterpret_cast<char *>(M.data()),
            static_cast<std::streamsize>(sizeof(double) * M.size()));
  };
  read_mat(basis.V);
  read_mat(basis.W);
  if (!is)
    throw std::runtime_error("truncated basis checkpoint " + path);
  return basis;
}

// Per-iteration convergence history as CSV.
inline void write_history_csv(const std::string &path,
                              const std::vector<IterationRecord> &history) {
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("cannot open " + path);
  os << "iteration,f,f_est,radius,step_norm,accepted,model_rejected,"
        "basis_added,rom_dim,solves_total\n";
  os.precision(17);
  for (const auto &r : history) {
    os << r.iteration << "," << r.f << ",";
    if (r.f_est)
      os << *r.f_est;
    os << "," << r.radius << "," << r.step_norm << "," << (r.accepted ? 1 : 0)
       << "," << (r.model_rejected ? 1 : 0) << "," << r.basis_added << ","
       << r.rom_dim << "," << r.solves_total << "\n";
  }
}

// Structured-text ledger dump ("context count" lines plus totals).
inline void write_ledger(const std::string &path,
                         const std::map<std::string, long> &counts, long total,
                         long amortized) {
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("cannot open " + path);
  for (const auto &[ctx, count] : counts)
    os << ctx << " " << count << "\n";
  os << "total " << total << "\n";
  os << "amortized " << amortized << "\n";
}

inline void write_vector(const std::string &path, const Eigen::VectorXd &v) {
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("cannot open " + path);
  os.precision(17);
  for (long i = 0; i < v.size(); ++i)
    os << v[i] << "\n";
}

} // namespace dotinv
