#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dextog/common.hpp"

namespace dextog {

/// Linear beta schedule. Step indices are 1-based: beta(1) .. beta(T).
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t - 1)); }
  void check_step(int t) const;
};

/// Betas interpolate linearly from beta_start to beta_end, both inclusive.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

/// Closed-form forward draw: sqrt(abar_t) g0 + sqrt(1 - abar_t) eps.
Vec q_sample(const Vec& g0, int t, const Vec& eps, const NoiseSchedule& sched);

/// One forward Markov transition: sqrt(1 - beta_t) g + sqrt(beta_t) eps.
Vec q_step(const Vec& g_prev, int t, const Vec& eps, const NoiseSchedule& sched);

/// Interleaved (sin, cos) pairs with frequencies spaced geometrically over [1, 1e4].
Vec time_embedding(double t, int dim);

/// eps_hat = f(g_t, t, cond).
using NoisePredictor = std::function<Vec(const Vec& g_t, int t, const Vec& cond)>;

/// Mean absolute error between `eps` and the prediction at q_sample(g0, t, eps).
double training_loss(const NoisePredictor& denoiser, const Vec& g0, int t, const Vec& cond, const Vec& eps,
                     const NoiseSchedule& sched);

/// Posterior mean of the noise-prediction parameterization,
///   mu = (g_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t),
/// plus sqrt(beta_t) z for t > 1. Returns mu exactly at t = 1.
Vec p_sample_step(const NoisePredictor& denoiser, const Vec& g_t, int t, const Vec& cond, const NoiseSchedule& sched,
                  Rng& rng);

/// Ancestral sampling from g_T ~ N(0, I) down to g_0. Throws
/// Errc::NumericalDivergence naming the step if the chain leaves the finite range.
Vec sample(const NoisePredictor& denoiser, const Vec& cond, const NoiseSchedule& sched, std::uint64_t seed,
           Eigen::Index dim = 61);

}  // namespace dextog
