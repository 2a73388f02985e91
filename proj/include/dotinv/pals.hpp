#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "dotinv/mesh.hpp"

namespace dotinv {

// Parametric level-set representation of the two-valued absorption field.
// The level-set function is a sum of Wendland-C2 CSRBF bumps,
//   phi(x; p) = sum_j alpha_j psi(u_j) - c,   u_j = sqrt(beta_j^2 |x - chi_j|^2 + s0^2),
// and the field is mu(x) = mu_out + (mu_in - mu_out) * H_eps(phi(x)).
// The parameter vector packs [alpha, beta, chi_x, chi_y] per bump, so
// n_p = 4 * n_bumps. Dilations enter through |beta| so the optimizer can
// treat p as unconstrained.
struct PalsModel {
  int n_bumps = 9;
  double level_c = 0.1;        // level-set threshold
  double heaviside_eps = 0.05; // Heaviside smoothing width
  double mu_in = 0.15;
  double mu_out = 0.005;
  double norm_smoothing = 0.01; // s0 in the smoothed norm, in psi units

  int n_params() const { return 4 * n_bumps; }

  static double psi(double r) {
    if (r >= 1.0)
      return 0.0;
    const double q = 1.0 - r;
    const double q2 = q * q;
    return q2 * q2 * (4.0 * r + 1.0);
  }

  static double psi_prime(double r) {
    if (r >= 1.0)
      return 0.0;
    const double q = 1.0 - r;
    return -20.0 * r * q * q * q;
  }

  // Compactly supported smoothed Heaviside: exactly 0 / 1 outside the
  // transition band |t| <= eps, so the field is exactly two-valued away
  // from the level-set interface.
  double heaviside(double t) const {
    if (t <= -heaviside_eps)
      return 0.0;
    if (t >= heaviside_eps)
      return 1.0;
    const double q = t / heaviside_eps;
    return 0.5 * (1.0 + q + std::sin(M_PI * q) / M_PI);
  }

  double heaviside_prime(double t) const {
    if (t <= -heaviside_eps || t >= heaviside_eps)
      return 0.0;
    return 0.5 / heaviside_eps * (1.0 + std::cos(M_PI * t / heaviside_eps));
  }
};

inline double level_set(const PalsModel &model, const Eigen::VectorXd &p,
                        double x, double y) {
  if (p.size() != model.n_params())
    throw std::invalid_argument("parameter vector has wrong length");
  const double s0 = model.norm_smoothing;
  double phi = -model.level_c;
  for (int j = 0; j < model.n_bumps; ++j) {
    const double alpha = p[4 * j];
    const double b = std::abs(p[4 * j + 1]);
    const double dx = x - p[4 * j + 2];
    const double dy = y - p[4 * j + 3];
    const double u = std::sqrt(b * b * (dx * dx + dy * dy) + s0 * s0);
    phi += alpha * PalsModel::psi(u);
  }
  return phi;
}

// d phi / dp at a point, written into a dense n_p gradient.
inline void level_set_gradient(const PalsModel &model, const Eigen::VectorXd &p,
                               double x, double y, Eigen::VectorXd &grad) {
  const double s0 = model.norm_smoothing;
  grad.setZero(model.n_params());
  for (int j = 0; j < model.n_bumps; ++j) {
    const double alpha = p[4 * j];
    const double beta = p[4 * j + 1];
    const double b = std::abs(beta);
    const double sgn = (beta > 0) - (beta < 0);
    const double dx = x - p[4 * j + 2];
    const double dy = y - p[4 * j + 3];
    const double r2 = dx * dx + dy * dy;
    const double u = std::sqrt(b * b * r2 + s0 * s0);
    grad[4 * j] = PalsModel::psi(u);
    const double dpsi = PalsModel::psi_prime(u);
    if (dpsi != 0.0) {
      grad[4 * j + 1] = alpha * dpsi * (b * r2 / u) * sgn;
      // d u / d chi = -b^2 (x - chi) / u
      grad[4 * j + 2] = -alpha * dpsi * (b * b * dx / u);
      grad[4 * j + 3] = -alpha * dpsi * (b * b * dy / u);
    }
  }
}

// Pixelwise absorption values mu_i at the mesh nodes.
inline Eigen::VectorXd absorption_field(const PalsModel &model,
                                        const Eigen::VectorXd &p,
                                        const MeshConfig &mesh) {
  Eigen::VectorXd mu(mesh.n());
  const double dmu = model.mu_in - model.mu_out;
  for (int j = 0; j < mesh.ny; ++j)
    for (int i = 0; i < mesh.nx; ++i)
      mu[mesh.index(i, j)] =
          model.mu_out + dmu * model.heaviside(level_set(model, p, mesh.x(i), mesh.y(j)));
  return mu;
}

// d mu_i / dp_ell for a single parameter index.
inline Eigen::VectorXd absorption_gradient(const PalsModel &model,
                                           const Eigen::VectorXd &p,
                                           const MeshConfig &mesh, int ell) {
  if (ell < 0 || ell >= model.n_params())
    throw std::out_of_range("parameter index out of range");
  Eigen::VectorXd g(mesh.n());
  Eigen::VectorXd phig(model.n_params());
  const double dmu = model.mu_in - model.mu_out;
  for (int j = 0; j < mesh.ny; ++j)
    for (int i = 0; i < mesh.nx; ++i) {
      const double phi = level_set(model, p, mesh.x(i), mesh.y(j));
      level_set_gradient(model, p, mesh.x(i), mesh.y(j), phig);
      g[mesh.index(i, j)] = dmu * model.heaviside_prime(phi) * phig[ell];
    }
  return g;
}

// Full field Jacobian d mu / dp as a sparse n x n_p matrix. Columns are
// sparse through the compact support of each bump; the alpha column of a
// bump is nonzero only where its psi is.
inline Eigen::SparseMatrix<double>
absorption_jacobian(const PalsModel &model, const Eigen::VectorXd &p,
                    const MeshConfig &mesh) {
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd phig(model.n_params());
  const double dmu = model.mu_in - model.mu_out;
  for (int j = 0; j < mesh.ny; ++j)
    for (int i = 0; i < mesh.nx; ++i) {
      const int row = mesh.index(i, j);
      const double phi = level_set(model, p, mesh.x(i), mesh.y(j));
      const double hp = dmu * model.heaviside_prime(phi);
      level_set_gradient(model, p, mesh.x(i), mesh.y(j), phig);
      for (int ell = 0; ell < model.n_params(); ++ell)
        if (phig[ell] != 0.0)
          trips.emplace_back(row, ell, hp * phig[ell]);
    }
  Eigen::SparseMatrix<double> G(mesh.n(), model.n_params());
  G.setFromTriplets(trips.begin(), trips.end());
  return G;
}

// Uniform grid of bumps with equal positive weights, producing a
// centrally located starting blob. grid x grid bumps cover the central
// part of the domain.
inline Eigen::VectorXd initial_parameters(const PalsModel &model,
                                          const MeshConfig &mesh, int grid,
                                          double alpha0 = 0.7,
                                          double coverage = 0.4) {
  if (grid * grid != model.n_bumps)
    throw std::invalid_argument("grid^2 must equal n_bumps");
  Eigen::VectorXd p(model.n_params());
  const double cx = 0.5 * mesh.extent_x, cy = 0.5 * mesh.extent_y;
  const double span_x = coverage * mesh.extent_x;
  const double span_y = coverage * mesh.extent_y;
  const double dx = (grid > 1) ? span_x / (grid - 1) : span_x;
  const double beta0 = 1.0 / (1.3 * dx);
  int k = 0;
  for (int gj = 0; gj < grid; ++gj)
    for (int gi = 0; gi < grid; ++gi, ++k) {
      p[4 * k] = alpha0;
      p[4 * k + 1] = beta0;
      p[4 * k + 2] = cx + ((grid > 1) ? (gi - 0.5 * (grid - 1)) * dx : 0.0);
      p[4 * k + 3] = cy + ((grid > 1) ? (gj - 0.5 * (grid - 1)) * span_y / (grid - 1) : 0.0);
    }
  return p;
}

} // namespace dotinv
