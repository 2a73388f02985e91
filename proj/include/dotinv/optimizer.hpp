#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dotinv/fom.hpp"

namespace dotinv {

// Gauss-Newton model value m(s) = 1/2 r^T r + r^T J s + 1/2 s^T J^T J s.
inline double local_model(const Eigen::VectorXd &r, const Eigen::MatrixXd &J,
                          const Eigen::VectorXd &s) {
  const Eigen::VectorXd Js = J * s;
  return 0.5 * r.squaredNorm() + r.dot(Js) + 0.5 * Js.squaredNorm();
}

struct TrustRegionOptions {
  double rho = 1e-4;          // sufficient-improvement parameter
  double radius_init = 1.0;
  double radius_min = 1e-8;
  double radius_max = 1e3;
  double svd_tol = 1e-8;      // discard singular values below svd_tol * sigma_max
  double noise_floor = 0.0;   // discrepancy cutoff on the subproblem residual; 0 = off
};

struct StepProposal {
  Eigen::VectorXd step;
  double predicted = 0.0; // m(0) - m(s) >= 0
  bool boundary = false;
  bool stationary = false;
};

// Regularized Gauss-Newton step inside the trust region: the model is
// minimized over the truncated-SVD subspace of J, with a Levenberg shift
// pulling the step onto the boundary when the unconstrained minimizer is
// too long. As radius -> 0 the step aligns with steepest descent.
inline StepProposal propose_step(const Eigen::VectorXd &r, const Eigen::MatrixXd &J,
                                 double radius,
                                 const TrustRegionOptions &opts = {}) {
  StepProposal out;
  out.step = Eigen::VectorXd::Zero(J.cols());
  if (!J.allFinite())
    throw std::invalid_argument("Jacobian contains non-finite entries");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd &sigma = svd.singularValues();
  if (sigma.size() == 0 || sigma[0] <= 0.0) {
    out.stationary = true;
    return out;
  }
  int k = 0;
  double resid2 = r.squaredNorm();
  const Eigen::VectorXd c = svd.matrixU().transpose() * r;
  while (k < sigma.size() && sigma[k] > opts.svd_tol * sigma[0]) {
    if (opts.noise_floor > 0.0 && resid2 <= opts.noise_floor * opts.noise_floor)
      break; // subproblem already at the noise level
    resid2 -= c[k] * c[k];
    ++k;
  }
  if (k == 0) {
    out.stationary = true;
    return out;
  }
  auto z_of_lambda = [&](double lambda) {
    Eigen::VectorXd z(k);
    for (int i = 0; i < k; ++i)
      z[i] = -sigma[i] * c[i] / (sigma[i] * sigma[i] + lambda);
    return z;
  };
  Eigen::VectorXd z = z_of_lambda(0.0);
  if (z.norm() > radius) {
    // Solve ||z(lambda)|| = radius by bisection; ||z|| is monotone in lambda.
    double lo = 0.0;
    double hi = sigma.head(k).cwiseProduct(c.head(k)).norm() / radius;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (z_of_lambda(mid).norm() > radius)
        lo = mid;
      else
        hi = mid;
      if (hi - lo <= 1e-12 * (1.0 + hi))
        break;
    }
    z = z_of_lambda(hi);
    out.boundary = true;
  }
  out.step = svd.matrixV().leftCols(k) * z;
  double pred = 0.0;
  for (int i = 0; i < k; ++i)
    pred -= c[i] * sigma[i] * z[i] + 0.5 * sigma[i] * sigma[i] * z[i] * z[i];
  out.predicted = std::max(pred, 0.0);
  if (out.predicted == 0.0)
    out.stationary = true;
  return out;
}

struct AcceptDecision {
  bool accepted = false;
  double radius = 0.0;
};

// Trust-region improvement test with the usual radius management: double
// on a strong boundary step, shrink hard on rejection.
inline AcceptDecision accept_step(double f_current, double f_new, double predicted,
                                  bool boundary, double radius,
                                  const TrustRegionOptions &opts = {}) {
  if (predicted <= 0.0)
    throw std::invalid_argument("predicted reduction must be positive");
  AcceptDecision d;
  d.accepted = (f_current - f_new >= opts.rho * predicted);
  if (!d.accepted)
    d.radius = std::max(0.25 * radius, opts.radius_min);
  else if ((f_current - f_new) / predicted >= 0.75 && boundary)
    d.radius = std::min(2.0 * radius, opts.radius_max);
  else
    d.radius = radius;
  return d;
}

struct TrustRegionState {
  Eigen::VectorXd p_c;
  double f_c = 0.0;
  double radius = 1.0;
  int iteration = 0;
};

} // namespace dotinv
