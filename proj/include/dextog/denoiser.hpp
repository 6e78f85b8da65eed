#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dextog/diffusion.hpp"
#include "dextog/nn.hpp"

namespace dextog {

enum class DenoiserArch { Mlp, UNet };

struct DenoiserConfig {
  DenoiserArch arch = DenoiserArch::Mlp;
  int data_dim = 61;
  int cond_dim = 1152;
  int time_embed_dim = 64;
  // MLP variant: `mlp_layers` affine maps with SiLU between them.
  int mlp_hidden = 256;
  int mlp_layers = 3;
  // UNet variant: ResBlock + spatial transformer stages over the parameter axis.
  int unet_blocks = 4;
  int channels = 64;
  int heads = 8;
  int transformer_hidden = 64;
  double dropout = 0.1;
  int ff_hidden = 128;
  int context_tokens = 4;

  void validate() const;
};

/// Noise-prediction network eps_theta(g_t, t, cond).
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// g_t: B x data_dim, cond: B x cond_dim, t: B step indices. Dropout is
  /// active only when `training` is set and `rng` is given.
  virtual nn::Var forward(const nn::Var& g_t, const std::vector<int>& t, const nn::Var& cond, bool training,
                          Rng* rng) const = 0;
  virtual nn::NamedParameters parameters() const = 0;

  const DenoiserConfig& config() const { return config_; }

  Vec predict(const Vec& g_t, int t, const Vec& cond) const;
  /// Inference-mode view for the samplers. Keeps a reference to *this.
  NoisePredictor predictor() const;

  std::vector<nn::Var> parameter_vars() const;

 protected:
  explicit Denoiser(DenoiserConfig config) : config_(std::move(config)) {}
  Mat time_embeddings(const std::vector<int>& t) const;

 private:
  DenoiserConfig config_;
};

std::unique_ptr<Denoiser> make_denoiser(const DenoiserConfig& config, std::uint64_t seed);

/// Batched L1 noise loss over B samples: mean |eps - eps_theta(q_sample(g0, t, eps), t, cond)|.
nn::Var batch_loss(const Denoiser& denoiser, const Mat& g0, const std::vector<int>& t, const Mat& eps,
                   const Mat& cond, const NoiseSchedule& sched, bool training, Rng* rng);

/// One ground-truth grasp with its condition. Several condition variants
/// (one per sampled description) can be supplied; training draws one per epoch.
struct TrainingSample {
  Vec grasp;
  std::vector<Vec> conditions;
};

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  // Wall-clock cap in seconds; 0 disables it.
  double max_seconds = 0.0;
  // Called with (epoch, mean epoch loss) after each epoch.
  std::function<void(int, double)> on_epoch;
  // Every `checkpoint_every` epochs, if > 0.
  int checkpoint_every = 0;
  std::function<void(int)> on_checkpoint;
};

struct TrainReport {
  std::vector<double> epoch_losses;
  long steps = 0;
  double seconds = 0.0;
};

/// Adam on the L1 noise loss, t uniform on [1, T] per sample.
/// Throws Errc::NumericalDivergence on a non-finite loss.
TrainReport train(Denoiser& denoiser, const std::vector<TrainingSample>& dataset, const NoiseSchedule& sched,
                  const TrainConfig& cfg);

}  // namespace dextog
