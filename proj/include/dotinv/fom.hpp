#pragma once

#include <complex>
#include <deque>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "dotinv/ledger.hpp"
#include "dotinv/mesh.hpp"

namespace dotinv {

using SpMat = Eigen::SparseMatrix<double>;
using SpMatC = Eigen::SparseMatrix<std::complex<double>>;

// Measurement stack M(p) (or data D): n_det x (n_src * n_omega), column
// blocked by frequency. Entries are real whenever every frequency is zero.
struct ObservationMatrix {
  Eigen::MatrixXcd data;
  int n_src = 0;
  int n_omega = 0;

  Eigen::Ref<Eigen::MatrixXcd> block(int j) {
    return data.middleCols(j * n_src, n_src);
  }
  Eigen::Ref<const Eigen::MatrixXcd> block(int j) const {
    return data.middleCols(j * n_src, n_src);
  }
};

// Discretized diffusion forward model: K(omega; p) = i*omega/nu * E + A0 + A1(p).
// A0 is the centered finite-difference diffusion operator with ghost-point
// Robin elimination on the left/right edges and homogeneous Dirichlet rows
// on the top/bottom edges. Robin rows are scaled by 1/2 and Dirichlet rows
// are identity rows with zeroed couplings, which keeps A0 exactly symmetric.
// A1(p) = diag(row_weight .* mu) for a pixelwise absorption field mu, and
// E is the correspondingly weighted (singular) mass structure.
class FomSystem {
public:
  MeshConfig mesh;
  SpMat E;
  SpMat A0;
  Eigen::VectorXd row_weight; // 0 on Dirichlet rows, 1/2 on Robin rows, 1 inside
  Eigen::MatrixXd B;          // n x n_src, delta sources (quadrature normalized)
  Eigen::MatrixXd C;          // n x n_det, pointwise detector functionals
  std::vector<double> frequencies{0.0};
  mutable SolveLedger ledger;

  int n() const { return mesh.n(); }
  int n_src() const { return static_cast<int>(B.cols()); }
  int n_det() const { return static_cast<int>(C.cols()); }
  int n_omega() const { return static_cast<int>(frequencies.size()); }
  bool all_real() const {
    for (double w : frequencies)
      if (w != 0.0)
        return false;
    return true;
  }

  Eigen::VectorXd a1_diag(const Eigen::VectorXd &mu) const {
    return row_weight.cwiseProduct(mu);
  }

  // Shared-memory factorization of K(omega; mu), real Cholesky-type at
  // omega = 0 and sparse LU otherwise. Cached per (omega, mu).
  struct Factorization {
    double omega = 0.0;
    Eigen::VectorXd a1;
    bool real = true;
    Eigen::SimplicialLDLT<SpMat> ldlt;
    Eigen::SparseLU<SpMatC> lu;
    // K^T = K for the real branch; the complex branch is symmetric too
    // (E, A diagonal/symmetric), so one factorization serves both sides.
    Eigen::MatrixXcd solve(const Eigen::MatrixXcd &rhs, bool adjoint) const {
      if (real) {
        Eigen::MatrixXcd out(rhs.rows(), rhs.cols());
        out.real() = ldlt.solve(rhs.real().eval());
        if (rhs.imag().isZero(0.0))
          out.imag().setZero();
        else
          out.imag() = ldlt.solve(rhs.imag().eval());
        return out;
      }
      // K = A + i*omega/nu*E is complex symmetric, so K^T = K and the
      // adjoint solve reuses the same factorization.
      (void)adjoint;
      return lu.solve(rhs);
    }
    Eigen::MatrixXd solve(const Eigen::MatrixXd &rhs) const {
      if (real)
        return ldlt.solve(rhs);
      throw std::logic_error("real solve requested on complex factorization");
    }
  };

  const Factorization &factorize(double omega, const Eigen::VectorXd &mu) const {
    const Eigen::VectorXd a1 = a1_diag(mu);
    for (auto &f : cache_)
      if (f->omega == omega && f->a1 == a1)
        return *f;
    auto fact = std::make_unique<Factorization>();
    fact->omega = omega;
    fact->a1 = a1;
    SpMat A = A0;
    A += SpMat(a1.asDiagonal());
    if (omega == 0.0) {
      fact->real = true;
      fact->ldlt.compute(A);
      if (fact->ldlt.info() != Eigen::Success)
        throw std::runtime_error("factorization of K(0; p) failed");
    } else {
      fact->real = false;
      SpMatC K = A.cast<std::complex<double>>();
      K += SpMatC((std::complex<double>(0.0, omega / mesh.nu) *
                   E.cast<std::complex<double>>()));
      K.makeCompressed();
      fact->lu.compute(K);
      if (fact->lu.info() != Eigen::Success)
        throw std::runtime_error("factorization of K(omega; p) failed at omega=" +
                                 std::to_string(omega));
    }
    cache_.push_back(std::move(fact));
    if (cache_.size() > 6)
      cache_.pop_front();
    return *cache_.back();
  }

  SpMatC k_matrix(double omega, const Eigen::VectorXd &mu) const {
    SpMat A = A0;
    A += SpMat(a1_diag(mu).asDiagonal());
    SpMatC K = A.cast<std::complex<double>>();
    if (omega != 0.0)
      K += SpMatC(std::complex<double>(0.0, omega / mesh.nu) *
                  E.cast<std::complex<double>>());
    K.makeCompressed();
    return K;
  }

  void clear_cache() const { cache_.clear(); }

private:
  mutable std::deque<std::unique_ptr<Factorization>> cache_;
};

inline int placement_node(const MeshConfig &mesh, PlacementSpec::Edge edge,
                          double t) {
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("source/detector placement off the boundary");
  const int i = static_cast<int>(std::lround(t * (mesh.nx - 1)));
  // Point impulses on the Dirichlet edges act through the adjacent
  // interior grid row; the Dirichlet rows themselves are identity rows.
  const int j = (edge == PlacementSpec::Edge::Top) ? mesh.ny - 2 : 1;
  return mesh.index(i, j);
}

inline FomSystem assemble(const MeshConfig &mesh, const PlacementSpec &sources,
                          const PlacementSpec &detectors) {
  mesh.validate();
  FomSystem sys;
  sys.mesh = mesh;
  const int n = mesh.n();
  const double D = mesh.diffusion_value;
  const double hx = mesh.hx(), hy = mesh.hy();
  const double cx = D / (hx * hx), cy = D / (hy * hy);

  std::vector<Eigen::Triplet<double>> a0, e;
  sys.row_weight.setZero(n);
  for (int j = 0; j < mesh.ny; ++j)
    for (int i = 0; i < mesh.nx; ++i) {
      const int row = mesh.index(i, j);
      if (mesh.dirichlet(i, j)) {
        a0.emplace_back(row, row, 1.0);
        continue; // E row and absorption stay zero
      }
      const double w = mesh.robin(i, j) ? 0.5 : 1.0;
      sys.row_weight[row] = w;
      e.emplace_back(row, row, w);
      double diag = w * (2.0 * cx + 2.0 * cy);
      auto couple = [&](int ii, int jj, double coef) {
        if (mesh.dirichlet(ii, jj))
          return; // boundary value is zero; dropping keeps symmetry
        a0.emplace_back(row, mesh.index(ii, jj), -w * coef);
      };
      if (i == 0) {
        // ghost elimination of the Robin condition on the left edge
        couple(i + 1, j, 2.0 * cx);
        diag += w * D * (hx / (mesh.a * D)) / (hx * hx);
      } else if (i == mesh.nx - 1) {
        couple(i - 1, j, 2.0 * cx);
        diag += w * D * (hx / (mesh.a * D)) / (hx * hx);
      } else {
        couple(i - 1, j, cx);
        couple(i + 1, j, cx);
      }
      couple(i, j - 1, cy);
      couple(i, j + 1, cy);
      a0.emplace_back(row, row, diag);
    }
  sys.A0.resize(n, n);
  sys.A0.setFromTriplets(a0.begin(), a0.end());
  sys.E.resize(n, n);
  sys.E.setFromTriplets(e.begin(), e.end());

  sys.B.setZero(n, static_cast<int>(sources.positions.size()));
  for (size_t k = 0; k < sources.positions.size(); ++k)
    sys.B(placement_node(mesh, sources.edge, sources.positions[k]),
          static_cast<int>(k)) = 1.0 / (hx * hy); // unit-mass impulse
  sys.C.setZero(n, static_cast<int>(detectors.positions.size()));
  for (size_t k = 0; k < detectors.positions.size(); ++k)
    sys.C(placement_node(mesh, detectors.edge, detectors.positions[k]),
          static_cast<int>(k)) = 1.0;
  return sys;
}

// Solve K(omega; mu) X = rhs (or K^T X = rhs). Charges one large solve per
// right-hand-side column under the given ledger context.
inline Eigen::MatrixXcd solve_shifted(const FomSystem &sys, double omega,
                                      const Eigen::VectorXd &mu,
                                      const Eigen::MatrixXcd &rhs, bool adjoint,
                                      const std::string &ctx) {
  const auto &fact = sys.factorize(omega, mu);
  sys.ledger.charge(ctx, rhs.cols());
  return fact.solve(rhs, adjoint);
}

// Psi(omega; p) = C^T K^{-1} B, using whichever side needs fewer solves.
inline Eigen::MatrixXcd frequency_response(const FomSystem &sys, double omega,
                                           const Eigen::VectorXd &mu,
                                           const std::string &ctx = context::function_eval) {
  if (sys.n_src() <= sys.n_det()) {
    Eigen::MatrixXcd X =
        solve_shifted(sys, omega, mu, sys.B.cast<std::complex<double>>(), false, ctx);
    return sys.C.transpose() * X;
  }
  Eigen::MatrixXcd Y =
      solve_shifted(sys, omega, mu, sys.C.cast<std::complex<double>>(), true, ctx);
  return Y.transpose() * sys.B;
}

// Residual layout shared by the optimizer and both Jacobians: for each
// frequency block, vec(Re R_j) column-major; the imaginary parts of all
// blocks are appended after the real parts when any frequency is nonzero.
inline Eigen::VectorXd flatten_residual(const Eigen::MatrixXcd &R, bool with_imag) {
  const long m = R.size();
  Eigen::VectorXd r(with_imag ? 2 * m : m);
  Eigen::MatrixXd re = R.real();
  r.head(m) = Eigen::Map<Eigen::VectorXd>(re.data(), m);
  if (with_imag) {
    Eigen::MatrixXd im = R.imag();
    r.tail(m) = Eigen::Map<Eigen::VectorXd>(im.data(), m);
  }
  return r;
}

struct MisfitEval {
  ObservationMatrix observations; // M(p)
  Eigen::MatrixXcd residual;      // R(p) = M(p) - D
  double misfit = 0.0;            // F(p) = 1/2 ||R||_F^2
  Eigen::VectorXd r_flat;
  std::vector<Eigen::MatrixXcd> forward_states; // K^{-1} B per frequency
};

inline MisfitEval full_misfit(const FomSystem &sys, const Eigen::VectorXd &mu,
                              const ObservationMatrix &data,
                              const std::string &ctx = context::function_eval) {
  if (data.data.rows() != sys.n_det() || data.n_src != sys.n_src() ||
      data.n_omega != sys.n_omega())
    throw std::invalid_argument("data dimensions do not match the system");
  MisfitEval eval;
  eval.observations.n_src = sys.n_src();
  eval.observations.n_omega = sys.n_omega();
  eval.observations.data.resize(sys.n_det(), sys.n_src() * sys.n_omega());
  for (int j = 0; j < sys.n_omega(); ++j) {
    // Keep the forward states for Jacobian reuse; Psi = C^T X.
    Eigen::MatrixXcd X = solve_shifted(sys, sys.frequencies[j], mu,
                                       sys.B.cast<std::complex<double>>(), false, ctx);
    eval.observations.block(j) = sys.C.transpose() * X;
    eval.forward_states.push_back(std::move(X));
  }
  eval.residual = eval.observations.data - data.data;
  eval.misfit = 0.5 * eval.residual.squaredNorm();
  eval.r_flat = flatten_residual(eval.residual, !sys.all_real());
  return eval;
}

// Adjoint solution blocks Y_j = K^{-T} C, one per frequency. Charges the
// n_det adjoint solves.
inline std::vector<Eigen::MatrixXcd>
adjoint_states(const FomSystem &sys, const Eigen::VectorXd &mu,
               const std::string &ctx = context::jacobian) {
  std::vector<Eigen::MatrixXcd> Y;
  for (int j = 0; j < sys.n_omega(); ++j)
    Y.push_back(solve_shifted(sys, sys.frequencies[j], mu,
                              sys.C.cast<std::complex<double>>(), true, ctx));
  return Y;
}

// Jacobian of the flattened residual, dR/dp. Column ell stacks the blocks
//   dPsi/dp_ell (omega_j) = -Y_j^T diag(w .* g_ell) X_j,
// where X_j = K^{-1} B comes from the misfit evaluation and Y_j = K^{-T} C
// are the adjoint states (already charged).
inline Eigen::MatrixXd full_jacobian_from_states(
    const FomSystem &sys, const Eigen::SparseMatrix<double> &field_jac,
    const MisfitEval &eval, const std::vector<Eigen::MatrixXcd> &adjoints) {
  const int np = static_cast<int>(field_jac.cols());
  const int nd = sys.n_det(), ns = sys.n_src(), nw = sys.n_omega();
  const long block = static_cast<long>(nd) * ns * nw;
  const bool with_imag = !sys.all_real();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(with_imag ? 2 * block : block, np);
  for (int j = 0; j < nw; ++j) {
    const Eigen::MatrixXcd &Y = adjoints[j];
    const Eigen::MatrixXcd &X = eval.forward_states[j];
    for (int ell = 0; ell < np; ++ell) {
      Eigen::MatrixXcd dPsi = Eigen::MatrixXcd::Zero(nd, ns);
      for (Eigen::SparseMatrix<double>::InnerIterator it(field_jac, ell); it; ++it) {
        const double coef = sys.row_weight[it.row()] * it.value();
        if (coef != 0.0)
          dPsi.noalias() -= coef * Y.row(it.row()).transpose() * X.row(it.row());
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

inline Eigen::MatrixXd full_jacobian(const FomSystem &sys, const Eigen::VectorXd &mu,
                                     const Eigen::SparseMatrix<double> &field_jac,
                                     const MisfitEval &eval,
                                     const std::string &ctx = context::jacobian) {
  return full_jacobian_from_states(sys, field_jac, eval, adjoint_states(sys, mu, ctx));
}

// Debug export of a sparse operator in triplet text form.
inline void write_triplets(std::ostream &os, const SpMat &A) {
  os << A.rows() << " " << A.cols() << " " << A.nonZeros() << "\n";
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      os << it.row() << " " << it.col() << " " << it.value() << "\n";
}

} // namespace dotinv
