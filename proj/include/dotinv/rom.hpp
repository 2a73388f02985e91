#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dotinv/fom.hpp"

namespace dotinv {

// Repeated modified Gram-Schmidt of new columns against an existing
// orthonormal basis, dropping columns whose orthogonal remainder falls
// below droptol relative to the incoming column norm. Returns the number
// of columns kept.
inline int extend_orthonormal(Eigen::MatrixXd &basis, const Eigen::MatrixXd &cols,
                              double droptol = 1e-10) {
  const long n = cols.rows();
  if (basis.size() == 0)
    basis.resize(n, 0);
  int added = 0;
  for (long c = 0; c < cols.cols(); ++c) {
    Eigen::VectorXd v = cols.col(c);
    const double norm0 = v.norm();
    if (norm0 == 0.0)
      continue;
    for (int pass = 0; pass < 2; ++pass)
      v -= basis * (basis.transpose() * v);
    if (v.norm() <= droptol * norm0)
      continue;
    v.normalize();
    basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
    basis.col(basis.cols() - 1) = v;
    ++added;
  }
  return added;
}

// Real columns spanning a (possibly complex) solution block: the real and
// imaginary parts are both included so the complex range stays covered.
inline Eigen::MatrixXd realify(const Eigen::MatrixXcd &X) {
  if (X.imag().isZero(0.0))
    return X.real();
  Eigen::MatrixXd out(X.rows(), 2 * X.cols());
  out.leftCols(X.cols()) = X.real();
  out.rightCols(X.cols()) = X.imag();
  return out;
}

struct RomBasis {
  Eigen::MatrixXd V;
  Eigen::MatrixXd W; // aliases V in one-sided mode (left() below)
  bool one_sided = true;
  std::vector<Eigen::VectorXd> interp_points;
  double droptol = 1e-10;

  int dim() const { return static_cast<int>(V.cols()); }
  const Eigen::MatrixXd &right() const { return V; }
  const Eigen::MatrixXd &left() const { return one_sided ? V : W; }
};

// Add the Theorem-style interpolation blocks K^{-1}B (and K^{-T}C) at one
// parameter point, for every frequency. In one-sided mode both families
// go into V. Returns the number of basis vectors that survived
// orthogonalization.
inline int add_interpolation_point(const FomSystem &sys, RomBasis &basis,
                                   const Eigen::VectorXd &p,
                                   const Eigen::VectorXd &mu,
                                   const std::string &ctx) {
  int added = 0;
  for (double omega : sys.frequencies) {
    Eigen::MatrixXcd X = solve_shifted(sys, omega, mu,
                                       sys.B.cast<std::complex<double>>(), false, ctx);
    Eigen::MatrixXcd Y = solve_shifted(sys, omega, mu,
                                       sys.C.cast<std::complex<double>>(), true, ctx);
    if (basis.one_sided) {
      added += extend_orthonormal(basis.V, realify(X), basis.droptol);
      added += extend_orthonormal(basis.V, realify(Y), basis.droptol);
    } else {
      added += extend_orthonormal(basis.V, realify(X), basis.droptol);
      added += extend_orthonormal(basis.W, realify(Y), basis.droptol);
    }
  }
  basis.interp_points.push_back(p);
  return added;
}

// Same as add_interpolation_point but reuses solution blocks already paid
// for elsewhere (e.g. the misfit/Jacobian solves of a full-order
// optimization prefix). Charges nothing.
inline int add_interpolation_point_from_states(RomBasis &basis,
                                               const Eigen::VectorXd &p,
                                               const std::vector<Eigen::MatrixXcd> &X,
                                               const std::vector<Eigen::MatrixXcd> &Y) {
  int added = 0;
  for (size_t j = 0; j < X.size(); ++j) {
    if (basis.one_sided) {
      added += extend_orthonormal(basis.V, realify(X[j]), basis.droptol);
      added += extend_orthonormal(basis.V, realify(Y[j]), basis.droptol);
    } else {
      added += extend_orthonormal(basis.V, realify(X[j]), basis.droptol);
      added += extend_orthonormal(basis.W, realify(Y[j]), basis.droptol);
    }
  }
  basis.interp_points.push_back(p);
  return added;
}

template <typename FieldFn>
inline RomBasis build_basis(const FomSystem &sys, FieldFn &&field,
                            const std::vector<Eigen::VectorXd> &points,
                            bool one_sided = true,
                            const std::string &ctx = context::offline) {
  RomBasis basis;
  basis.one_sided = one_sided;
  for (const auto &p : points)
    add_interpolation_point(sys, basis, p, field(p), ctx);
  return basis;
}

// Projected operators. A1 is re-projected per parameter point from the
// stored bases; everything here is dense n_r-sized work, no large solves.
struct RomSystem {
  Eigen::MatrixXd Er, A0r, Br, Cr;
  Eigen::MatrixXd V, W; // copies of the bases used for the projection
  Eigen::VectorXd row_weight;
  double nu = 1.0;
  std::vector<double> frequencies;
  bool all_real = true;
  int n_src = 0, n_det = 0;

  int dim() const { return static_cast<int>(V.cols()); }

  Eigen::MatrixXd a1r(const Eigen::VectorXd &mu) const {
    const Eigen::VectorXd d = row_weight.cwiseProduct(mu);
    return W.transpose() * (d.asDiagonal() * V);
  }

  Eigen::MatrixXcd k_matrix(double omega, const Eigen::MatrixXd &A1r) const {
    Eigen::MatrixXcd K = (A0r + A1r).cast<std::complex<double>>();
    if (omega != 0.0)
      K += std::complex<double>(0.0, omega / nu) * Er.cast<std::complex<double>>();
    return K;
  }
};

inline RomSystem project(const FomSystem &sys, const RomBasis &basis) {
  RomSystem rom;
  rom.V = basis.right();
  rom.W = basis.left();
  rom.Er = rom.W.transpose() * (sys.E * rom.V);
  rom.A0r = rom.W.transpose() * (sys.A0 * rom.V);
  rom.Br = rom.W.transpose() * sys.B;
  rom.Cr = rom.V.transpose() * sys.C;
  rom.row_weight = sys.row_weight;
  rom.nu = sys.mesh.nu;
  rom.frequencies = sys.frequencies;
  rom.all_real = sys.all_real();
  rom.n_src = sys.n_src();
  rom.n_det = sys.n_det();
  return rom;
}

struct RomEval {
  ObservationMatrix observations;
  Eigen::MatrixXcd residual;
  double misfit = 0.0;
  Eigen::VectorXd r_flat;
  std::vector<Eigen::MatrixXcd> xhat; // Khat^{-1} Bhat per frequency
  std::vector<Eigen::MatrixXcd> yhat; // Khat^{-T} Chat per frequency
  Eigen::MatrixXd A1r;
};

inline RomEval reduced_misfit(const RomSystem &rom, const Eigen::VectorXd &mu,
                              const ObservationMatrix &data) {
  if (data.data.rows() != rom.n_det || data.n_src != rom.n_src ||
      data.n_omega != static_cast<int>(rom.frequencies.size()))
    throw std::invalid_argument("data dimensions do not match the reduced system");
  RomEval eval;
  eval.A1r = rom.a1r(mu);
  eval.observations.n_src = rom.n_src;
  eval.observations.n_omega = static_cast<int>(rom.frequencies.size());
  eval.observations.data.resize(rom.n_det, rom.n_src * eval.observations.n_omega);
  for (size_t j = 0; j < rom.frequencies.size(); ++j) {
    Eigen::MatrixXcd K = rom.k_matrix(rom.frequencies[j], eval.A1r);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(K);
    Eigen::MatrixXcd X = lu.solve(rom.Br.cast<std::complex<double>>());
    Eigen::MatrixXcd Y = Eigen::PartialPivLU<Eigen::MatrixXcd>(K.transpose())
                             .solve(rom.Cr.cast<std::complex<double>>());
    if (!X.allFinite() || !Y.allFinite())
      throw std::runtime_error("reduced system is singular (degenerate basis)");
    eval.observations.block(static_cast<int>(j)) = rom.Cr.transpose() * X;
    eval.xhat.push_back(std::move(X));
    eval.yhat.push_back(std::move(Y));
  }
  eval.residual = eval.observations.data - data.data;
  eval.misfit = 0.5 * eval.residual.squaredNorm();
  eval.r_flat = flatten_residual(eval.residual, !rom.all_real);
  return eval;
}

// Reduced Jacobian via the projected sensitivity
//   dPsihat/dp_ell = -(W Yhat)^T diag(w .* g_ell) (V Xhat),
// formed without any full-order solves.
inline Eigen::MatrixXd reduced_jacobian(const RomSystem &rom, const Eigen::VectorXd &mu,
                                        const Eigen::SparseMatrix<double> &field_jac,
                                        const RomEval &eval) {
  (void)mu;
  const int np = static_cast<int>(field_jac.cols());
  const int nd = rom.n_det, ns = rom.n_src;
  const int nw = static_cast<int>(rom.frequencies.size());
  const long block = static_cast<long>(nd) * ns * nw;
  const bool with_imag = !rom.all_real;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(with_imag ? 2 * block : block, np);
  for (int j = 0; j < nw; ++j) {
    Eigen::MatrixXcd WY = rom.W.cast<std::complex<double>>() * eval.yhat[j];
    Eigen::MatrixXcd VX = rom.V.cast<std::complex<double>>() * eval.xhat[j];
    for (int ell = 0; ell < np; ++ell) {
      Eigen::MatrixXcd dPsi = Eigen::MatrixXcd::Zero(nd, ns);
      for (Eigen::SparseMatrix<double>::InnerIterator it(field_jac, ell); it; ++it) {
        const double coef = rom.row_weight[it.row()] * it.value();
        if (coef != 0.0)
          dPsi.noalias() -= coef * WY.row(it.row()).transpose() * VX.row(it.row());
      }
      const long off = static_cast<long>(j) * nd * ns;
      Eigen::MatrixXd re = dPsi.real();
      J.col(ell).segment(off, nd * ns) = Eigen::Map<Eigen::VectorXd>(re.data(), nd * ns);
      if (with_imag) {
        Eigen::MatrixXd im = dPsi.imag();
        J.col(ell).segment(block + off, nd * ns) =
            Eigen::Map<Eigen::VectorXd>(im.data(), nd * ns);
      }
    }
  }
  return J;
}

} // namespace dotinv
