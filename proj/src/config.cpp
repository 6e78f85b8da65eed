#include "dextog/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dextog {

using nlohmann::json;

namespace {

// Reads known keys from `j` into the fields registered through `field`,
// rejecting anything else.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw Error(Errc::Config, "section '" + name_ + "' must be an object");
  }

  template <typename T>
  Section& field(const char* key, T& out) {
    seen_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<T>();
      } catch (const json::exception& e) {
        throw Error(Errc::Config, name_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw Error(Errc::Config, "unknown key '" + name_ + "." + key + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string> seen_;
};

json language_json(const LanguageAggregationConfig& c) {
  return {{"T_td", c.T_td},
          {"T_pd", c.T_pd},
          {"T_d", c.T_d},
          {"dimension_in_cross_attention", c.dimension_in_cross_attention},
          {"encoder_seed", c.encoder_seed}};
}

json pointnet_json(const SetAbstractionConfig& c) {
  return {{"num_sa_layers", c.num_layers},
          {"num_sampled_points", c.sampled_points},
          {"embedding_sizes", c.embedding_sizes},
          {"group_size", c.group_size}};
}

json diffusion_json(const DiffusionModelConfig& c) {
  return {{"diffusion_steps", c.diffusion_steps},
          {"noise_schedule", c.noise_schedule},
          {"beta_start", c.beta_start},
          {"beta_end", c.beta_end},
          {"time_embedding", c.time_embedding},
          {"transformer_num_heads", c.transformer_num_heads},
          {"transformer_hidden_dim", c.transformer_hidden_dim},
          {"transformer_dropout", c.transformer_dropout},
          {"feed_forward_hidden_dim", c.feed_forward_hidden_dim},
          {"architecture", c.architecture},
          {"time_embed_dim", c.time_embed_dim},
          {"mlp_hidden", c.mlp_hidden},
          {"mlp_layers", c.mlp_layers},
          {"unet_blocks", c.unet_blocks},
          {"unet_channels", c.unet_channels},
          {"context_tokens", c.context_tokens}};
}

json training_json(const TrainingConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"max_seconds", c.max_seconds},
          {"checkpoint_every", c.checkpoint_every},
          {"description_variants", c.description_variants}};
}

json pipeline_json(const PipelineConfig& c) {
  return {{"contact_threshold", c.contact_threshold},
          {"min_part_points", c.min_part_points},
          {"num_descriptions", c.num_descriptions},
          {"samples_per_part", c.samples_per_part},
          {"voxel_size", c.voxel_size},
          {"provider", c.provider},
          {"cache_dir", c.cache_dir},
          {"checkpoint", c.checkpoint},
          {"segments_dir", c.segments_dir},
          {"model_seed", c.model_seed}};
}

}  // namespace

void Config::validate() const {
  const auto& la = language_aggregation;
  if (la.T_td < 1 || la.T_pd < 1 || la.T_d < 1 || la.dimension_in_cross_attention < 1) {
    throw Error(Errc::Config, "language_aggregation sizes must be positive");
  }
  pointnet.validate();
  const auto& d = diffusion;
  if (d.noise_schedule != "linear") throw Error(Errc::Config, "only the linear noise schedule is supported");
  if (d.time_embedding != "sinusoidal") throw Error(Errc::Config, "only sinusoidal time embedding is supported");
  if (d.architecture != "mlp" && d.architecture != "unet") {
    throw Error(Errc::Config, "architecture must be 'mlp' or 'unet'");
  }
  (void)schedule();
  denoiser().validate();
  const auto& t = training;
  if (t.epochs < 0 || t.batch_size < 1 || !(t.learning_rate > 0.0) || t.max_seconds < 0.0 ||
      t.checkpoint_every < 0 || t.description_variants < 1) {
    throw Error(Errc::Config, "invalid training settings");
  }
  const auto& p = pipeline;
  if (!(p.contact_threshold > 0.0)) throw Error(Errc::Config, "contact_threshold must be > 0");
  if (p.min_part_points < 1) throw Error(Errc::Config, "min_part_points must be >= 1");
  if (p.num_descriptions < 1 || p.samples_per_part < 1) {
    throw Error(Errc::Config, "num_descriptions and samples_per_part must be >= 1");
  }
  if (!(p.voxel_size > 0.0)) throw Error(Errc::Config, "voxel_size must be > 0");
  if (p.provider != "stub" && p.provider != "http") throw Error(Errc::Config, "provider must be 'stub' or 'http'");
}

NoiseSchedule Config::schedule() const {
  return make_schedule(diffusion.diffusion_steps, diffusion.beta_start, diffusion.beta_end);
}

DenoiserConfig Config::denoiser() const {
  DenoiserConfig c;
  c.arch = diffusion.architecture == "unet" ? DenoiserArch::UNet : DenoiserArch::Mlp;
  c.data_dim = static_cast<int>(GraspParams::kDim);
  c.cond_dim = condition_dim();
  c.time_embed_dim = diffusion.time_embed_dim;
  c.mlp_hidden = diffusion.mlp_hidden;
  c.mlp_layers = diffusion.mlp_layers;
  c.unet_blocks = diffusion.unet_blocks;
  c.channels = diffusion.unet_channels;
  c.heads = diffusion.transformer_num_heads;
  c.transformer_hidden = diffusion.transformer_hidden_dim;
  c.dropout = diffusion.transformer_dropout;
  c.ff_hidden = diffusion.feed_forward_hidden_dim;
  c.context_tokens = diffusion.context_tokens;
  return c;
}

TrainConfig Config::train() const {
  TrainConfig c;
  c.epochs = training.epochs;
  c.batch_size = training.batch_size;
  c.learning_rate = training.learning_rate;
  c.seed = training.seed;
  c.max_seconds = training.max_seconds;
  c.checkpoint_every = training.checkpoint_every;
  return c;
}

std::string Config::to_json() const {
  const json j = {{"language_aggregation", language_json(language_aggregation)},
                  {"pointnet", pointnet_json(pointnet)},
                  {"diffusion", diffusion_json(diffusion)},
                  {"training", training_json(training)},
                  {"pipeline", pipeline_json(pipeline)}};
  return j.dump(2);
}

Config Config::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::Config, std::string("config is not valid JSON: ") + e.what());
  }
  Config c;
  Section root(j, "config");
  json empty = json::object();
  auto sub = [&](const char* key) -> const json& {
    auto it = j.find(key);
    return it == j.end() ? empty : *it;
  };
  json dummy;
  root.field("language_aggregation", dummy).field("pointnet", dummy).field("diffusion", dummy)
      .field("training", dummy).field("pipeline", dummy).finish();

  auto& la = c.language_aggregation;
  Section(sub("language_aggregation"), "language_aggregation")
      .field("T_td", la.T_td).field("T_pd", la.T_pd).field("T_d", la.T_d)
      .field("dimension_in_cross_attention", la.dimension_in_cross_attention)
      .field("encoder_seed", la.encoder_seed).finish();

  auto& pn = c.pointnet;
  Section(sub("pointnet"), "pointnet")
      .field("num_sa_layers", pn.num_layers).field("num_sampled_points", pn.sampled_points)
      .field("embedding_sizes", pn.embedding_sizes).field("group_size", pn.group_size).finish();

  auto& d = c.diffusion;
  Section(sub("diffusion"), "diffusion")
      .field("diffusion_steps", d.diffusion_steps).field("noise_schedule", d.noise_schedule)
      .field("beta_start", d.beta_start).field("beta_end", d.beta_end)
      .field("time_embedding", d.time_embedding).field("transformer_num_heads", d.transformer_num_heads)
      .field("transformer_hidden_dim", d.transformer_hidden_dim)
      .field("transformer_dropout", d.transformer_dropout)
      .field("feed_forward_hidden_dim", d.feed_forward_hidden_dim).field("architecture", d.architecture)
      .field("time_embed_dim", d.time_embed_dim).field("mlp_hidden", d.mlp_hidden)
      .field("mlp_layers", d.mlp_layers).field("unet_blocks", d.unet_blocks)
      .field("unet_channels", d.unet_channels).field("context_tokens", d.context_tokens).finish();

  auto& t = c.training;
  Section(sub("training"), "training")
      .field("epochs", t.epochs).field("batch_size", t.batch_size).field("learning_rate", t.learning_rate)
      .field("seed", t.seed).field("max_seconds", t.max_seconds).field("checkpoint_every", t.checkpoint_every)
      .field("description_variants", t.description_variants).finish();

  auto& p = c.pipeline;
  Section(sub("pipeline"), "pipeline")
      .field("contact_threshold", p.contact_threshold).field("min_part_points", p.min_part_points)
      .field("num_descriptions", p.num_descriptions).field("samples_per_part", p.samples_per_part)
      .field("voxel_size", p.voxel_size).field("provider", p.provider).field("cache_dir", p.cache_dir)
      .field("checkpoint", p.checkpoint).field("segments_dir", p.segments_dir)
      .field("model_seed", p.model_seed).finish();

  c.validate();
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string Config::hash() const { return sha256_hex(json::parse(to_json()).dump()); }

std::string Config::model_hash() const {
  const json j = {{"language_aggregation", language_json(language_aggregation)},
                  {"pointnet", pointnet_json(pointnet)},
                  {"diffusion", diffusion_json(diffusion)}};
  return sha256_hex(j.dump());
}

}  // namespace dextog
