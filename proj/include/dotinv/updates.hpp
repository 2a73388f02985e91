#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dotinv/rom.hpp"

namespace dotinv {

enum class UpdateKind { None, Interpolatory, ResidualDriven };
enum class UpdateLocation { CurrentPoint, ProposedPoint, Both };

struct UpdatePolicy {
  UpdateKind kind = UpdateKind::ResidualDriven;
  UpdateLocation location = UpdateLocation::ProposedPoint;
  double epsilon_trunc = 1.0 / 20.0;
};

// Per-frequency residual structure of the current basis at a point:
// Q spans range(K V), eta = (I - Q Q^T) B carries the part of B the basis
// cannot yet represent, and its singular values drive the truncation.
struct FrequencyDiagnostics {
  double omega = 0.0;
  Eigen::MatrixXcd Q;       // n x n_r orthonormal, range(K V)
  Eigen::MatrixXcd U;       // left singular vectors of (I - Q Q^T) B
  Eigen::VectorXd singular_values;
  double eta_norm = 0.0;    // ||(I - Q Q^T) B||_F
  double skew_norm = -1.0;  // ||(Q Q^T - T) B||_F, monitored only
  int r_chosen = 0;
};

struct ResidualDiagnostics {
  std::vector<FrequencyDiagnostics> per_frequency;
};

inline Eigen::MatrixXcd thin_q(const Eigen::MatrixXcd &M) {
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(M);
  return qr.householderQ() *
         Eigen::MatrixXcd::Identity(M.rows(), std::min(M.rows(), M.cols()));
}

// Costs n_r sparse mat-vecs and dense QR/SVD per frequency; no large
// solves, so the ledger is untouched. If a RomSystem is supplied the skew
// projection component (Q Q^T - T) B is evaluated for logging.
inline ResidualDiagnostics
residual_diagnostics(const FomSystem &sys, const RomBasis &basis,
                     const Eigen::VectorXd &mu,
                     const RomSystem *rom = nullptr) {
  if (basis.dim() == 0)
    throw std::invalid_argument("basis is empty");
  ResidualDiagnostics diag;
  const Eigen::MatrixXcd V = basis.right().cast<std::complex<double>>();
  for (size_t j = 0; j < sys.frequencies.size(); ++j) {
    FrequencyDiagnostics fd;
    fd.omega = sys.frequencies[j];
    const SpMatC K = sys.k_matrix(fd.omega, mu);
    Eigen::MatrixXcd KV = K * V;
    fd.Q = thin_q(KV);
    Eigen::MatrixXcd Bc = sys.B.cast<std::complex<double>>();
    Eigen::MatrixXcd H = Bc - fd.Q * (fd.Q.adjoint() * Bc);
    fd.eta_norm = H.norm();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(H, Eigen::ComputeThinU);
    fd.U = svd.matrixU();
    fd.singular_values = svd.singularValues();
    if (rom) {
      const Eigen::MatrixXd A1r = rom->a1r(mu);
      Eigen::MatrixXcd Khat = rom->k_matrix(fd.omega, A1r);
      // T B = K V Khat^{-1} (W^T B)
      Eigen::MatrixXcd TB =
          KV * Khat.partialPivLu().solve(rom->Br.cast<std::complex<double>>());
      fd.skew_norm = (fd.Q * (fd.Q.adjoint() * Bc) - TB).norm();
    }
    diag.per_frequency.push_back(std::move(fd));
  }
  return diag;
}

// Smallest r with sqrt(sum_{i>r} s_i^2 / sum_i s_i^2) < eps.
inline int truncation_rank(const Eigen::VectorXd &sigma, double eps) {
  const double total = sigma.squaredNorm();
  if (total == 0.0)
    return 0;
  double tail = total;
  for (int r = 0; r <= sigma.size(); ++r) {
    if (std::sqrt(std::max(tail, 0.0) / total) < eps)
      return r;
    if (r < sigma.size())
      tail -= sigma[r] * sigma[r];
  }
  return static_cast<int>(sigma.size());
}

struct UpdateReport {
  int added = 0;
  long solves = 0;
  ResidualDiagnostics diagnostics;
};

// Full interpolatory update: Theorem-exact match at p at the cost of
// n_omega * (n_src + n_det) large solves.
template <typename FieldFn>
inline UpdateReport interpolatory_update(const FomSystem &sys, RomBasis &basis,
                                         const Eigen::VectorXd &p, FieldFn &&field,
                                         const std::string &ctx = context::basis_update) {
  UpdateReport rep;
  const long before = sys.ledger.total();
  rep.added = add_interpolation_point(sys, basis, p, field(p), ctx);
  rep.solves = sys.ledger.total() - before;
  return rep;
}

// Residual-driven update: per frequency, expand V with K^{-1} u_i for the
// leading left singular vectors of (I - Q Q^T) B, choosing the smallest
// rank whose discarded tail is below epsilon_trunc. In one-sided mode the
// adjoint family from (I - Qw Qw^T) C (Qw from QR of K^T W) extends the
// same basis; in two-sided mode it extends W.
inline UpdateReport residual_update(const FomSystem &sys, RomBasis &basis,
                                    const Eigen::VectorXd &mu, double epsilon_trunc,
                                    const std::string &ctx = context::basis_update) {
  if (epsilon_trunc <= 0.0 || epsilon_trunc >= 1.0)
    throw std::invalid_argument("epsilon_trunc must lie in (0,1)");
  UpdateReport rep;
  rep.diagnostics = residual_diagnostics(sys, basis, mu);
  const double floor_b = 1e-10 * sys.B.norm();
  const double floor_c = 1e-10 * sys.C.norm();
  for (auto &fd : rep.diagnostics.per_frequency) {
    // An already-exact side needs no solves at all.
    const int r = (fd.eta_norm <= floor_b)
                      ? 0
                      : truncation_rank(fd.singular_values, epsilon_trunc);
    fd.r_chosen = r;
    if (r > 0) {
      Eigen::MatrixXcd X =
          solve_shifted(sys, fd.omega, mu, fd.U.leftCols(r), false, ctx);
      rep.solves += r;
      rep.added += extend_orthonormal(basis.V, realify(X), basis.droptol);
    }
    // Adjoint side (detector directions).
    const Eigen::MatrixXcd W = basis.left().cast<std::complex<double>>();
    const SpMatC K = sys.k_matrix(fd.omega, mu);
    Eigen::MatrixXcd Qw = thin_q(K.transpose() * W);
    Eigen::MatrixXcd Cc = sys.C.cast<std::complex<double>>();
    Eigen::MatrixXcd Hc = Cc - Qw * (Qw.adjoint() * Cc);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Hc, Eigen::ComputeThinU);
    const int rc = (Hc.norm() <= floor_c)
                       ? 0
                       : truncation_rank(svd.singularValues(), epsilon_trunc);
    if (rc > 0) {
      Eigen::MatrixXcd Y =
          solve_shifted(sys, fd.omega, mu, svd.matrixU().leftCols(rc), true, ctx);
      rep.solves += rc;
      Eigen::MatrixXd &target = basis.one_sided ? basis.V : basis.W;
      rep.added += extend_orthonormal(target, realify(Y), basis.droptol);
    }
  }
  return rep;
}

} // namespace dotinv
