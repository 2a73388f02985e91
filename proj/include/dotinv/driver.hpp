#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dotinv/optimizer.hpp"
#include "dotinv/pals.hpp"
#include "dotinv/rom.hpp"
#include "dotinv/trace.hpp"
#include "dotinv/updates.hpp"

namespace dotinv {

struct ObservationData {
  ObservationMatrix D;
  double noise_norm = 0.0; // ||D - M(truth)||_F
};

enum class ModelMode { FullOrder, Rom1Point, Rom3Point };

struct InversionConfig {
  ModelMode mode = ModelMode::Rom1Point;
  UpdatePolicy policy;
  double threshold = 10.0; // infinity disables the estimator entirely
  int n_samples = 17;      // K=2, delta=1/2 worked example of the sample bound
  double discrepancy_factor = 1.1;
  int max_iterations = 300;
  uint64_t seed = 0;
  TrustRegionOptions tr;
  int prefix_points = 3;          // interpolation points for the 3-point mode
  int prefix_max_iterations = 60; // cap on the full-order prefix
  bool audit_retry = true;

  bool estimator_enabled() const {
    return policy.kind != UpdateKind::None && std::isfinite(threshold);
  }
};

struct IterationRecord {
  int iteration = 0;
  double f = 0.0; // current objective (reduced in ROM modes)
  std::optional<double> f_est;
  double radius = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
  bool model_rejected = false;
  int basis_added = 0;
  int rom_dim = 0;
  long solves_total = 0;
};

struct InversionResult {
  Eigen::VectorXd p;
  double f_final = 0.0;             // final (reduced) objective
  double full_misfit = 0.0;         // post-hoc full-order F at the final point
  double full_residual_norm = 0.0;  // sqrt(2 * full_misfit)
  double target_norm = 0.0;         // discrepancy_factor * noise_norm
  bool reduced_converged = false;
  bool converged = false; // reduced criterion met and the audit passed
  int iterations = 0;
  int rom_dim = 0;
  std::vector<IterationRecord> history;
  std::map<std::string, long> ledger_counts;
  long solves_total = 0;
  long solves_amortized = 0;
};

namespace detail {

struct FullPoint {
  Eigen::VectorXd p;
  MisfitEval eval;
  std::vector<Eigen::MatrixXcd> adjoints;
};

} // namespace detail

// Full-order optimization prefix: runs the trust-region loop on the FOM
// until `points` iterates (including p0) have been accepted, and returns
// the interpolatory basis assembled from their already-paid forward and
// adjoint solves. The p0 block is charged offline (it is reusable across
// reconstructions); later iterates are charged as ordinary evaluations.
inline RomBasis build_initial_rom(const FomSystem &sys, const PalsModel &pals,
                                  const ObservationData &data,
                                  const Eigen::VectorXd &p0,
                                  const InversionConfig &config, int points,
                                  Eigen::VectorXd *p_end = nullptr,
                                  double *radius_end = nullptr,
                                  std::vector<IterationRecord> *history = nullptr) {
  auto field = [&](const Eigen::VectorXd &p) {
    return absorption_field(pals, p, sys.mesh);
  };
  RomBasis basis;
  basis.one_sided = true;

  detail::FullPoint cur;
  cur.p = p0;
  cur.eval = full_misfit(sys, field(p0), data.D, context::offline);
  cur.adjoints = adjoint_states(sys, field(p0), context::offline);
  add_interpolation_point_from_states(basis, cur.p, cur.eval.forward_states,
                                      cur.adjoints);
  if (points <= 1) {
    if (p_end)
      *p_end = cur.p;
    if (radius_end)
      *radius_end = config.tr.radius_init;
    return basis;
  }

  Eigen::MatrixXd J = full_jacobian_from_states(
      sys, absorption_jacobian(pals, cur.p, sys.mesh), cur.eval, cur.adjoints);
  double radius = config.tr.radius_init;
  int accepted = 1;
  for (int it = 0; it < config.prefix_max_iterations && accepted < points; ++it) {
    StepProposal prop = propose_step(cur.eval.r_flat, J, radius, config.tr);
    if (prop.stationary)
      break;
    const Eigen::VectorXd p_p = cur.p + prop.step;
    MisfitEval eval_p = full_misfit(sys, field(p_p), data.D, context::function_eval);
    AcceptDecision dec = accept_step(cur.eval.misfit, eval_p.misfit, prop.predicted,
                                     prop.boundary, radius, config.tr);
    radius = dec.radius;
    IterationRecord rec;
    rec.iteration = -(config.prefix_max_iterations - it); // prefix marker
    rec.f = cur.eval.misfit;
    rec.radius = radius;
    rec.step_norm = prop.step.norm();
    rec.accepted = dec.accepted;
    if (dec.accepted) {
      cur.p = p_p;
      cur.eval = std::move(eval_p);
      cur.adjoints = adjoint_states(sys, field(cur.p), context::jacobian);
      J = full_jacobian_from_states(sys, absorption_jacobian(pals, cur.p, sys.mesh),
                                    cur.eval, cur.adjoints);
      rec.basis_added = add_interpolation_point_from_states(
          basis, cur.p, cur.eval.forward_states, cur.adjoints);
      ++accepted;
    }
    rec.rom_dim = basis.dim();
    rec.solves_total = sys.ledger.total();
    if (history)
      history->push_back(rec);
  }
  if (accepted < points)
    throw std::runtime_error("full-order prefix failed to accept " +
                             std::to_string(points) + " points");
  if (p_end)
    *p_end = cur.p;
  if (radius_end)
    *radius_end = radius;
  return basis;
}

namespace detail {

inline int apply_update(const FomSystem &sys, const PalsModel &pals, RomBasis &basis,
                        const UpdatePolicy &policy, const Eigen::VectorXd &p_c,
                        const Eigen::VectorXd &p_p) {
  auto field = [&](const Eigen::VectorXd &p) {
    return absorption_field(pals, p, sys.mesh);
  };
  std::vector<const Eigen::VectorXd *> pts;
  if (policy.location == UpdateLocation::CurrentPoint)
    pts = {&p_c};
  else if (policy.location == UpdateLocation::ProposedPoint)
    pts = {&p_p};
  else
    pts = {&p_c, &p_p};
  int added = 0;
  for (const auto *p : pts) {
    if (policy.kind == UpdateKind::Interpolatory)
      added += interpolatory_update(sys, basis, *p, field).added;
    else if (policy.kind == UpdateKind::ResidualDriven)
      added += residual_update(sys, basis, field(*p), policy.epsilon_trunc).added;
  }
  return added;
}

} // namespace detail

// Algorithm: trust-region Gauss-Newton over the (reduced or full) model
// with estimate-driven basis updates on model rejection, terminating at
// the discrepancy tolerance. A single post-hoc full-order audit verifies
// termination; with audit_retry the audit doubles as a final (exact)
// quality check that can trigger one more round of updates.
inline InversionResult run_inversion(const FomSystem &sys, const PalsModel &pals,
                                     const ObservationData &data,
                                     const Eigen::VectorXd &p0,
                                     const InversionConfig &config) {
  auto field = [&](const Eigen::VectorXd &p) {
    return absorption_field(pals, p, sys.mesh);
  };
  InversionResult result;
  result.target_norm = config.discrepancy_factor * data.noise_norm;
  const double tol_f = 0.5 * result.target_norm * result.target_norm;
  double radius = config.tr.radius_init;
  uint64_t est_counter = 0;

  if (config.mode == ModelMode::FullOrder) {
    Eigen::VectorXd p_c = p0;
    MisfitEval eval_c = full_misfit(sys, field(p_c), data.D);
    std::vector<Eigen::MatrixXcd> adj = adjoint_states(sys, field(p_c));
    Eigen::MatrixXd J = full_jacobian_from_states(
        sys, absorption_jacobian(pals, p_c, sys.mesh), eval_c, adj);
    int it = 0;
    for (; it < config.max_iterations; ++it) {
      if (eval_c.misfit < tol_f) {
        result.reduced_converged = true;
        break;
      }
      StepProposal prop = propose_step(eval_c.r_flat, J, radius, config.tr);
      if (prop.stationary)
        break;
      const Eigen::VectorXd p_p = p_c + prop.step;
      MisfitEval eval_p = full_misfit(sys, field(p_p), data.D);
      AcceptDecision dec = accept_step(eval_c.misfit, eval_p.misfit, prop.predicted,
                                       prop.boundary, radius, config.tr);
      radius = dec.radius;
      IterationRecord rec;
      rec.iteration = it;
      rec.f = eval_c.misfit;
      rec.radius = radius;
      rec.step_norm = prop.step.norm();
      rec.accepted = dec.accepted;
      if (dec.accepted) {
        p_c = p_p;
        eval_c = std::move(eval_p);
        adj = adjoint_states(sys, field(p_c));
        J = full_jacobian_from_states(sys, absorption_jacobian(pals, p_c, sys.mesh),
                                      eval_c, adj);
      }
      rec.solves_total = sys.ledger.total();
      result.history.push_back(rec);
    }
    result.p = p_c;
    result.f_final = eval_c.misfit;
    result.full_misfit = eval_c.misfit; // already full order; no audit charge
    result.iterations = it;
  } else {
    Eigen::VectorXd p_c = p0;
    RomBasis basis;
    if (config.mode == ModelMode::Rom3Point)
      basis = build_initial_rom(sys, pals, data, p0, config, config.prefix_points,
                                &p_c, &radius, &result.history);
    else
      basis = build_initial_rom(sys, pals, data, p0, config, 1);
    RomSystem rom = project(sys, basis);
    RomEval eval_c = reduced_misfit(rom, field(p_c), data.D);
    Eigen::MatrixXd J = reduced_jacobian(rom, field(p_c),
                                         absorption_jacobian(pals, p_c, sys.mesh),
                                         eval_c);
    auto refresh_current = [&]() {
      rom = project(sys, basis);
      eval_c = reduced_misfit(rom, field(p_c), data.D);
      J = reduced_jacobian(rom, field(p_c), absorption_jacobian(pals, p_c, sys.mesh),
                           eval_c);
    };
    std::optional<double> audit_misfit;
    int it = 0;
    for (; it < config.max_iterations; ++it) {
      if (eval_c.misfit < tol_f) {
        result.reduced_converged = true;
        if (config.audit_retry && config.estimator_enabled()) {
          // Exact final quality check at the terminating point.
          MisfitEval audit = full_misfit(sys, field(p_c), data.D, context::audit);
          audit_misfit = audit.misfit;
          if (std::sqrt(2.0 * audit.misfit) <= result.target_norm)
            break;
          audit_misfit.reset();
          result.reduced_converged = false;
          const int added = detail::apply_update(sys, pals, basis, config.policy,
                                                 p_c, p_c);
          refresh_current();
          IterationRecord rec;
          rec.iteration = it;
          rec.f = eval_c.misfit;
          rec.f_est = audit.misfit;
          rec.radius = radius;
          rec.model_rejected = true;
          rec.basis_added = added;
          rec.rom_dim = basis.dim();
          rec.solves_total = sys.ledger.total();
          result.history.push_back(rec);
          continue;
        }
        break;
      }
      StepProposal prop = propose_step(eval_c.r_flat, J, radius, config.tr);
      if (prop.stationary)
        break;
      const Eigen::VectorXd p_p = p_c + prop.step;
      const Eigen::VectorXd mu_p = field(p_p);
      RomEval eval_p = reduced_misfit(rom, mu_p, data.D);

      IterationRecord rec;
      rec.iteration = it;
      rec.radius = radius;
      rec.step_norm = prop.step.norm();

      if (config.estimator_enabled() && eval_p.misfit > 0.0) {
        TraceEstimate est = estimate_misfit(sys, mu_p, data.D, config.n_samples,
                                            splitmix64(config.seed + 0x517ACE *
                                                       ++est_counter));
        rec.f_est = est.value;
        if (quality_reject(eval_p.misfit, est, config.threshold)) {
          // Reject the model, not the step; the trust region is untouched.
          rec.model_rejected = true;
          rec.basis_added =
              detail::apply_update(sys, pals, basis, config.policy, p_c, p_p);
          refresh_current();
          rec.f = eval_c.misfit;
          rec.rom_dim = basis.dim();
          rec.solves_total = sys.ledger.total();
          result.history.push_back(rec);
          continue;
        }
      }
      AcceptDecision dec = accept_step(eval_c.misfit, eval_p.misfit, prop.predicted,
                                       prop.boundary, radius, config.tr);
      radius = dec.radius;
      rec.radius = radius;
      rec.accepted = dec.accepted;
      if (dec.accepted) {
        p_c = p_p;
        eval_c = std::move(eval_p);
        J = reduced_jacobian(rom, mu_p, absorption_jacobian(pals, p_c, sys.mesh),
                             eval_c);
      }
      rec.f = eval_c.misfit;
      rec.rom_dim = basis.dim();
      rec.solves_total = sys.ledger.total();
      result.history.push_back(rec);
    }
    result.p = p_c;
    result.f_final = eval_c.misfit;
    result.rom_dim = basis.dim();
    result.iterations = it;
    if (!audit_misfit)
      audit_misfit = full_misfit(sys, field(p_c), data.D, context::audit).misfit;
    result.full_misfit = *audit_misfit;
  }

  result.full_residual_norm = std::sqrt(2.0 * result.full_misfit);
  result.converged =
      result.reduced_converged && result.full_residual_norm <= result.target_norm;
  result.ledger_counts = sys.ledger.by_context();
  result.solves_total = sys.ledger.total();
  result.solves_amortized = sys.ledger.amortized();
  return result;
}

} // namespace dotinv
