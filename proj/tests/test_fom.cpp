#include <doctest.h>

#include <Eigen/Dense>

#include "dotinv/fom.hpp"
#include "dotinv/pals.hpp"
#include "oracles.hpp"

using namespace dotinv;

namespace {
ObservationMatrix zero_data(const FomSystem &sys) {
  ObservationMatrix d;
  d.n_src = sys.n_src();
  d.n_omega = sys.n_omega();
  d.data.setZero(sys.n_det(), sys.n_src() * sys.n_omega());
  return d;
}
} // namespace

TEST_CASE("zero absorption leaves only the diffusion operator") {
  FomSystem sys = oracles::small_system(9, 2, 2);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(sys.n());
  CHECK(sys.a1_diag(mu).norm() == 0.0);
}

TEST_CASE("A0 is exactly symmetric") {
  FomSystem sys = oracles::small_system(13, 2, 2);
  Eigen::MatrixXd A0(sys.A0);
  CHECK((A0 - A0.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("A0 matches the dense brute-force assembly on a 9x9 mesh") {
  FomSystem sys = oracles::small_system(9, 2, 2);
  Eigen::MatrixXd dense = oracles::dense_diffusion_operator(sys.mesh);
  CHECK((Eigen::MatrixXd(sys.A0) - dense).cwiseAbs().maxCoeff() ==
        doctest::Approx(0.0).epsilon(1e-14));
  // Interior row is the 5-point stencil scaled by D/h^2.
  const auto &mesh = sys.mesh;
  const double c = mesh.diffusion_value / (mesh.hx() * mesh.hx());
  const int row = mesh.index(4, 4);
  CHECK(dense(row, row) == doctest::Approx(4.0 * c));
  CHECK(dense(row, mesh.index(3, 4)) == doctest::Approx(-c));
  CHECK(dense(row, mesh.index(5, 4)) == doctest::Approx(-c));
  CHECK(dense(row, mesh.index(4, 3)) == doctest::Approx(-c));
  CHECK(dense(row, mesh.index(4, 5)) == doctest::Approx(-c));
}

TEST_CASE("E is singular and B, C carry the documented normalizations") {
  FomSystem sys = oracles::small_system(11, 3, 4);
  CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(Eigen::MatrixXd(sys.E)).rank() < sys.n());
  const double cell = sys.mesh.hx() * sys.mesh.hy();
  for (int k = 0; k < sys.n_src(); ++k)
    CHECK(sys.B.col(k).lpNorm<1>() * cell == doctest::Approx(1.0)); // unit mass
  for (int k = 0; k < sys.n_det(); ++k)
    CHECK(sys.C.col(k).lpNorm<1>() == doctest::Approx(1.0));
}

TEST_CASE("invalid meshes and placements are rejected") {
  MeshConfig mesh;
  mesh.nx = 4;
  CHECK_THROWS(mesh.validate());
  mesh.nx = 51;
  PlacementSpec bad;
  bad.edge = PlacementSpec::Edge::Top;
  bad.positions = {1.2};
  CHECK_THROWS(assemble(mesh, bad,
                        PlacementSpec::evenly_spaced(PlacementSpec::Edge::Bottom, 2)));
}

TEST_CASE("solve_shifted is consistent and charges the ledger per column") {
  FomSystem sys = oracles::small_system(13, 3, 3);
  Eigen::VectorXd mu = oracles::random_admissible_mu(sys.mesh, 11);
  Eigen::MatrixXd K = oracles::dense_k0(sys, mu);
  Eigen::VectorXcd rhs = (K * Eigen::VectorXd::Unit(sys.n(), 0)).cast<std::complex<double>>();
  Eigen::MatrixXcd x = solve_shifted(sys, 0.0, mu, rhs, false, context::function_eval);
  CHECK((x.col(0).real() - Eigen::VectorXd::Unit(sys.n(), 0)).norm() < 1e-10);
  CHECK(sys.ledger.count(context::function_eval) == 1);

  const long before = sys.ledger.total();
  solve_shifted(sys, 0.0, mu, sys.B.cast<std::complex<double>>(), false,
                context::function_eval);
  CHECK(sys.ledger.total() - before == sys.n_src());
}

TEST_CASE("solver residual on a 17x17 mesh") {
  FomSystem sys = oracles::small_system(17, 4, 4);
  Eigen::VectorXd mu = oracles::random_admissible_mu(sys.mesh, 42);
  Eigen::MatrixXcd X = solve_shifted(sys, 0.0, mu, sys.B.cast<std::complex<double>>(),
                                     false, context::function_eval);
  Eigen::MatrixXd K = oracles::dense_k0(sys, mu);
  const double rel = (K * X.real() - sys.B).norm() / sys.B.norm();
  CHECK(rel <= 1e-10);
}

TEST_CASE("K(0; p) admits a Cholesky-type factorization for admissible fields") {
  FomSystem sys = oracles::small_system(17, 2, 2);
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(sys.n(), 0.005);
  CHECK_NOTHROW(sys.factorize(0.0, mu));
  Eigen::MatrixXd K = oracles::dense_k0(sys, mu);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("frequency response is real and symmetric at omega = 0 with B = C") {
  MeshConfig mesh;
  mesh.nx = mesh.ny = 13;
  PlacementSpec top = PlacementSpec::evenly_spaced(PlacementSpec::Edge::Top, 3);
  FomSystem sys = assemble(mesh, top, top);
  // Same edge and positions, but C is pointwise while B has cell mass;
  // rescale C to match B so Psi = B'^T K^{-1} B' is symmetric.
  sys.C = sys.B;
  Eigen::VectorXd mu = oracles::random_admissible_mu(mesh, 3);
  Eigen::MatrixXcd psi = frequency_response(sys, 0.0, mu);
  CHECK(psi.imag().isZero(0.0));
  CHECK((psi - psi.transpose()).norm() / psi.norm() < 1e-10);
}

TEST_CASE("frequency response matches the dense inverse on a 13x13 mesh") {
  FomSystem sys = oracles::small_system(13, 3, 4);
  Eigen::VectorXd mu = oracles::random_admissible_mu(sys.mesh, 7);
  Eigen::MatrixXcd psi = frequency_response(sys, 0.0, mu);
  Eigen::MatrixXd K = oracles::dense_k0(sys, mu);
  Eigen::MatrixXd dense = sys.C.transpose() * K.inverse() * sys.B;
  CHECK((psi.real() - dense).norm() / dense.norm() <= 1e-9);
}

TEST_CASE("complex shifted solves at omega != 0") {
  FomSystem sys = oracles::small_system(11, 2, 2);
  sys.frequencies = {0.5};
  Eigen::VectorXd mu = oracles::random_admissible_mu(sys.mesh, 9);
  Eigen::MatrixXcd X = solve_shifted(sys, 0.5, mu, sys.B.cast<std::complex<double>>(),
                                     false, context::function_eval);
  Eigen::MatrixXcd K(sys.k_matrix(0.5, mu));
  CHECK((K * X - sys.B.cast<std::complex<double>>()).norm() / sys.B.norm() < 1e-10);
  // Adjoint solve against K^T.
  Eigen::MatrixXcd Y = solve_shifted(sys, 0.5, mu, sys.C.cast<std::complex<double>>(),
                                     true, context::function_eval);
  CHECK((K.transpose() * Y - sys.C.cast<std::complex<double>>()).norm() /
            sys.C.norm() <
        1e-10);
}

TEST_CASE("misfit identities") {
  FomSystem sys = oracles::small_system(13, 3, 4);
  Eigen::VectorXd mu = oracles::random_admissible_mu(sys.mesh, 21);
  ObservationMatrix data = zero_data(sys);
  MisfitEval eval = full_misfit(sys, mu, data);
  data.data = eval.observations.data;
  MisfitEval zero = full_misfit(sys, mu, data);
  CHECK(zero.misfit == doctest::Approx(0.0).epsilon(1e-14));

  // F from entries vs from column norms, and vs the dense trace.
  Eigen::VectorXd mu2 = oracles::random_admissible_mu(sys.mesh, 22);
  MisfitEval eval2 = full_misfit(sys, mu2, data);
  double by_cols = 0.0;
  for (long c = 0; c < eval2.residual.cols(); ++c)
    by_cols += eval2.residual.col(c).squaredNorm();
  CHECK(eval2.misfit == doctest::Approx(0.5 * by_cols).epsilon(1e-14));
  Eigen::MatrixXcd R = eval2.residual;
  const double trace = (R.adjoint() * R).trace().real();
  CHECK(eval2.misfit == doctest::Approx(0.5 * trace).epsilon(1e-12));
  CHECK(eval2.misfit == doctest::Approx(0.5 * eval2.r_flat.squaredNorm()));
}

TEST_CASE("misfit rejects mismatched data") {
  FomSystem sys = oracles::small_system(9, 2, 2);
  ObservationMatrix data = zero_data(sys);
  data.data.resize(sys.n_det(), 5);
  data.n_src = 5;
  CHECK_THROWS(full_misfit(sys, Eigen::VectorXd::Constant(sys.n(), 0.01), data));
}

TEST_CASE("full Jacobian: zero-support parameter gives a zero column") {
  FomSystem sys = oracles::small_system(13, 3, 3);
  PalsModel pals;
  pals.n_bumps = 2;
  Eigen::VectorXd p(8);
  // Second bump far outside the domain: no spatial support.
  p << 0.8, 0.3, 5.0, 5.0, 0.5, 1.0, 500.0, 500.0;
  Eigen::VectorXd mu = absorption_field(pals, p, sys.mesh);
  ObservationMatrix data = zero_data(sys);
  MisfitEval eval = full_misfit(sys, mu, data);
  Eigen::MatrixXd J =
      full_jacobian(sys, mu, absorption_jacobian(pals, p, sys.mesh), eval);
  CHECK(J.col(4).norm() == 0.0); // alpha of the far bump
  CHECK(J.col(6).norm() == 0.0);
}

TEST_CASE("full Jacobian matches central finite differences") {
  FomSystem sys = oracles::small_system(17, 3, 3);
  PalsModel pals;
  pals.n_bumps = 4;
  Eigen::VectorXd p(16);
  p << 0.7, 0.35, 4.0, 4.5, 0.5, 0.30, 6.0, 5.5, -0.3, 0.4, 5.0, 6.0, 0.6, 0.25,
      5.5, 4.0;
  Eigen::VectorXd mu = absorption_field(pals, p, sys.mesh);
  ObservationMatrix data = zero_data(sys);
  MisfitEval eval = full_misfit(sys, mu, data);
  Eigen::MatrixXd J =
      full_jacobian(sys, mu, absorption_jacobian(pals, p, sys.mesh), eval);
  const int picks[5] = {0, 3, 6, 9, 13};
  for (int ell : picks) {
    const double h = 1e-6 * (1.0 + std::abs(p[ell]));
    Eigen::VectorXd pp = p, pm = p;
    pp[ell] += h;
    pm[ell] -= h;
    MisfitEval ep = full_misfit(sys, absorption_field(pals, pp, sys.mesh), data);
    MisfitEval em = full_misfit(sys, absorption_field(pals, pm, sys.mesh), data);
    Eigen::VectorXd fd = (ep.r_flat - em.r_flat) / (2.0 * h);
    CHECK((J.col(ell) - fd).norm() / fd.norm() <= 1e-5);
  }
}

TEST_CASE("ledger accounting for a misfit plus Jacobian evaluation") {
  FomSystem sys = oracles::small_system(13, 3, 5);
  PalsModel pals;
  pals.n_bumps = 1;
  Eigen::VectorXd p(4);
  p << 0.7, 0.3, 5.0, 5.0;
  Eigen::VectorXd mu = absorption_field(pals, p, sys.mesh);
  ObservationMatrix data = zero_data(sys);
  MisfitEval eval = full_misfit(sys, mu, data);
  CHECK(sys.ledger.count(context::function_eval) ==
        std::min(sys.n_src(), sys.n_det()) * sys.n_omega());
  full_jacobian(sys, mu, absorption_jacobian(pals, p, sys.mesh), eval);
  CHECK(sys.ledger.count(context::jacobian) == sys.n_det() * sys.n_omega());
  CHECK(sys.ledger.total() ==
        (std::min(sys.n_src(), sys.n_det()) + sys.n_det()) * sys.n_omega());
  long sum = 0;
  for (const auto &[ctx, c] : sys.ledger.by_context())
    sum += c;
  CHECK(sum == sys.ledger.total());
}

TEST_CASE("grid refinement: second-order convergence of the response") {
  // Fixed smooth absorption, nested meshes 17 -> 33 -> 65 with node-aligned
  // source/detector positions.
  auto smooth_mu = [](const MeshConfig &mesh) {
    Eigen::VectorXd mu(mesh.n());
    for (int j = 0; j < mesh.ny; ++j)
      for (int i = 0; i < mesh.nx; ++i) {
        const double fx = mesh.x(i) / mesh.extent_x - 0.5;
        const double fy = mesh.y(j) / mesh.extent_y - 0.5;
        mu[mesh.index(i, j)] = 0.01 + 0.1 * std::exp(-8.0 * (fx * fx + fy * fy));
      }
    return mu;
  };
  std::vector<double> pos = {0.25, 0.5, 0.75};
  Eigen::MatrixXd psi[3];
  int k = 0;
  for (int nx : {17, 33, 65}) {
    MeshConfig mesh;
    mesh.nx = mesh.ny = nx;
    mesh.extent_x = mesh.extent_y = 10.0;
    PlacementSpec src{PlacementSpec::Edge::Top, pos};
    PlacementSpec det{PlacementSpec::Edge::Bottom, pos};
    FomSystem sys = assemble(mesh, src, det);
    psi[k++] = frequency_response(sys, 0.0, smooth_mu(mesh)).real();
  }
  const double e1 = (psi[0] - psi[1]).norm();
  const double e2 = (psi[1] - psi[2]).norm();
  const double order = std::log2(e1 / e2);
  CHECK(order >= 1.8);
}
