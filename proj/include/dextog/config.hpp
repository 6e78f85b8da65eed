#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dextog/conditioning.hpp"
#include "dextog/denoiser.hpp"
#include "dextog/diffusion.hpp"

namespace dextog {

/// Category-part language aggregation.
struct LanguageAggregationConfig {
  int T_td = 200;  // category description tokens
  int T_pd = 200;  // part description tokens
  int T_d = 768;   // token feature width
  int dimension_in_cross_attention = 128;
  std::uint64_t encoder_seed = 0;
};

/// Conditional diffusion model. Row names follow the hyper-parameter table.
struct DiffusionModelConfig {
  int diffusion_steps = 100;
  std::string noise_schedule = "linear";
  double beta_start = 1e-4;
  double beta_end = 1e-2;
  std::string time_embedding = "sinusoidal";
  int transformer_num_heads = 8;
  int transformer_hidden_dim = 64;
  double transformer_dropout = 0.1;
  int feed_forward_hidden_dim = 128;
  // Desk-scale additions.
  std::string architecture = "mlp";
  int time_embed_dim = 64;
  int mlp_hidden = 256;
  int mlp_layers = 3;
  int unet_blocks = 4;
  int unet_channels = 64;
  int context_tokens = 4;
};

struct TrainingConfig {
  int epochs = 1000;
  int batch_size = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  double max_seconds = 0.0;
  int checkpoint_every = 0;
  // Description samples drawn per training pair; one is used per epoch.
  int description_variants = 4;
};

struct PipelineConfig {
  double contact_threshold = 0.005;  // lambda, meters
  int min_part_points = 32;
  int num_descriptions = 10;
  int samples_per_part = 1;
  double voxel_size = 0.005;
  std::string provider = "stub";  // "stub" or "http"
  std::string cache_dir;
  std::string checkpoint;
  std::string segments_dir;
  std::uint64_t model_seed = 0;
};

struct Config {
  LanguageAggregationConfig language_aggregation;
  SetAbstractionConfig pointnet;
  DiffusionModelConfig diffusion;
  TrainingConfig training;
  PipelineConfig pipeline;

  /// Throws Errc::Config on out-of-range values.
  void validate() const;

  NoiseSchedule schedule() const;
  int condition_dim() const { return 2 * pointnet.output_dim() + language_aggregation.dimension_in_cross_attention; }
  DenoiserConfig denoiser() const;
  TrainConfig train() const;

  std::string to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static Config from_json(const std::string& text);
  static Config load(const std::filesystem::path& path);

  /// SHA-256 of the whole configuration.
  std::string hash() const;
  /// SHA-256 of the model-defining sections (everything except `pipeline` and `training`).
  std::string model_hash() const;
};

}  // namespace dextog
