#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "dotinv/fom.hpp"

namespace dotinv {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Hutchinson estimate of F(p) = 1/2 ||M(p) - D||_F^2 via Rademacher
// probes: value = 1/2 * mean_i sum_j ||(Psi(omega_j) - D_j) s_ij||^2.
struct TraceEstimate {
  double value = 0.0;
  int n_samples = 0;
  uint64_t seed = 0;
  std::vector<double> per_sample;
};

// Squared probe norm sum_j ||C^T K_j^{-1}(B s_j) - D_j s_j||^2 for one set
// of per-frequency probe vectors. One large solve per frequency. Exposed
// separately so tests can enumerate the whole Rademacher sample space.
inline double probe_squared_norm(const FomSystem &sys, const Eigen::VectorXd &mu,
                                 const ObservationMatrix &data,
                                 const std::vector<Eigen::VectorXd> &probes,
                                 const std::string &ctx = context::estimate) {
  double acc = 0.0;
  for (int j = 0; j < sys.n_omega(); ++j) {
    const Eigen::VectorXd &s = probes[j];
    Eigen::MatrixXcd x = solve_shifted(sys, sys.frequencies[j], mu,
                                       (sys.B * s).cast<std::complex<double>>(),
                                       false, ctx);
    Eigen::VectorXcd probe = sys.C.transpose() * x - data.block(j) * s;
    acc += probe.squaredNorm();
  }
  return acc;
}

inline std::vector<Eigen::VectorXd> rademacher_probes(int n_src, int n_omega,
                                                      uint64_t seed, int sample) {
  std::vector<Eigen::VectorXd> probes(n_omega);
  for (int j = 0; j < n_omega; ++j) {
    // Counter-based seeding: each (seed, sample, frequency) triple owns an
    // independent stream, so samples can be drawn in any order.
    std::mt19937_64 eng(splitmix64(seed ^ splitmix64(0x5EEDULL + sample) ^
                                   splitmix64(0xF0ULL * (j + 1))));
    probes[j].resize(n_src);
    for (int i = 0; i < n_src; ++i)
      probes[j][i] = (eng() & 1) ? 1.0 : -1.0;
  }
  return probes;
}

inline TraceEstimate estimate_misfit(const FomSystem &sys, const Eigen::VectorXd &mu,
                                     const ObservationMatrix &data, int n_samples,
                                     uint64_t seed,
                                     const std::string &ctx = context::estimate) {
  if (n_samples < 1)
    throw std::invalid_argument("n_samples must be at least 1");
  TraceEstimate est;
  est.n_samples = n_samples;
  est.seed = seed;
  est.per_sample.reserve(n_samples);
  double sum = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double v = probe_squared_norm(
        sys, mu, data, rademacher_probes(sys.n_src(), sys.n_omega(), seed, i), ctx);
    est.per_sample.push_back(v);
    sum += v;
  }
  est.value = 0.5 * sum / n_samples;
  return est;
}

// Sample-count bound for detecting an under-estimate: with
// N >= 6 eps^-2 ln(1/delta) Hutchinson samples, the probability of
// under-estimating the trace by a relative factor eps is below delta. At
// the worst detectable case beta = alpha the margin is eps = 1 - 1/K.
struct SampleBound {
  double epsilon = 0.5;
  double delta = 0.5;
  double k_buffer = 2.0;
  double alpha = 2.0;

  static SampleBound from_buffer(double K, double delta) {
    if (K <= 1.0)
      throw std::invalid_argument("K must exceed 1");
    SampleBound b;
    b.k_buffer = K;
    b.delta = delta;
    b.epsilon = 1.0 - 1.0 / K;
    return b;
  }
};

inline int required_samples(const SampleBound &bound) {
  if (bound.epsilon <= 0.0 || bound.epsilon > 1.0 || bound.delta <= 0.0 ||
      bound.delta >= 1.0)
    throw std::invalid_argument("epsilon and delta must lie in (0,1)");
  return static_cast<int>(std::ceil(6.0 / (bound.epsilon * bound.epsilon) *
                                    std::log(1.0 / bound.delta)));
}

// Model-quality test: reject the current ROM when the estimated full-order
// misfit exceeds the reduced misfit by the threshold ratio.
inline bool quality_reject(double f_rom, const TraceEstimate &est,
                           double threshold = 10.0) {
  if (f_rom <= 0.0)
    throw std::invalid_argument("reduced misfit must be positive");
  return est.value / f_rom >= threshold;
}

} // namespace dotinv
