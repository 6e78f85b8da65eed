#include "dextog/diffusion.hpp"

#include <cmath>

namespace dextog {

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > T) {
    throw Error(Errc::Index, "diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  }
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw Error(Errc::Config, "schedule needs T >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw Error(Errc::Config, "need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(static_cast<std::size_t>(T));
  s.alphas.resize(static_cast<std::size_t>(T));
  s.alpha_bars.resize(static_cast<std::size_t>(T));
  double running = 1.0;
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    const double beta = i == T - 1 && T > 1 ? beta_end : beta_start + (beta_end - beta_start) * frac;
    s.betas[static_cast<std::size_t>(i)] = beta;
    s.alphas[static_cast<std::size_t>(i)] = 1.0 - beta;
    running *= 1.0 - beta;
    s.alpha_bars[static_cast<std::size_t>(i)] = running;
  }
  return s;
}

Vec q_sample(const Vec& g0, int t, const Vec& eps, const NoiseSchedule& sched) {
  sched.check_step(t);
  if (g0.size() != eps.size()) throw Error(Errc::Shape, "q_sample: g0 and eps sizes differ");
  const double abar = sched.alpha_bar(t);
  return std::sqrt(abar) * g0 + std::sqrt(1.0 - abar) * eps;
}

Vec q_step(const Vec& g_prev, int t, const Vec& eps, const NoiseSchedule& sched) {
  sched.check_step(t);
  if (g_prev.size() != eps.size()) throw Error(Errc::Shape, "q_step: sizes differ");
  const double beta = sched.beta(t);
  return std::sqrt(1.0 - beta) * g_prev + std::sqrt(beta) * eps;
}

Vec time_embedding(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw Error(Errc::Config, "time embedding dimension must be even and >= 2");
  const int half = dim / 2;
  Vec out(dim);
  for (int k = 0; k < half; ++k) {
    const double omega = half == 1 ? 1.0 : std::pow(1.0e4, static_cast<double>(k) / static_cast<double>(half - 1));
    out[2 * k] = std::sin(t / omega);
    out[2 * k + 1] = std::cos(t / omega);
  }
  return out;
}

double training_loss(const NoisePredictor& denoiser, const Vec& g0, int t, const Vec& cond, const Vec& eps,
                     const NoiseSchedule& sched) {
  const Vec g_t = q_sample(g0, t, eps, sched);
  const Vec eps_hat = denoiser(g_t, t, cond);
  if (eps_hat.size() != eps.size()) throw Error(Errc::Shape, "denoiser output has the wrong width");
  return (eps - eps_hat).cwiseAbs().mean();
}

Vec p_sample_step(const NoisePredictor& denoiser, const Vec& g_t, int t, const Vec& cond, const NoiseSchedule& sched,
                  Rng& rng) {
  sched.check_step(t);
  const Vec eps_hat = denoiser(g_t, t, cond);
  if (eps_hat.size() != g_t.size()) throw Error(Errc::Shape, "denoiser output has the wrong width");
  const double beta = sched.beta(t);
  const Vec mean = (g_t - (beta / std::sqrt(1.0 - sched.alpha_bar(t))) * eps_hat) / std::sqrt(sched.alpha(t));
  if (t == 1) return mean;
  return mean + std::sqrt(beta) * standard_normal(rng, g_t.size());
}

Vec sample(const NoisePredictor& denoiser, const Vec& cond, const NoiseSchedule& sched, std::uint64_t seed,
           Eigen::Index dim) {
  Rng rng(seed);
  Vec g = standard_normal(rng, dim);
  for (int t = sched.T; t >= 1; --t) {
    g = p_sample_step(denoiser, g, t, cond, sched, rng);
    if (!g.allFinite()) {
      throw Error(Errc::NumericalDivergence, "non-finite sample at step t=" + std::to_string(t));
    }
  }
  return g;
}

}  // namespace dextog
