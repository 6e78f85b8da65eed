#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dextog/config.hpp"
#include "dextog/geometry.hpp"
#include "dextog/hand_model.hpp"
#include "dextog/language.hpp"
#include "dextog/segmenter.hpp"
#include "dextog/tensor_archive.hpp"
#include "dextog/text_encoder.hpp"

namespace dextog {

struct TaskRequest {
  PointCloud object_cloud;
  std::string category;
  std::string task;
  std::uint64_t seed = 0;
  // Free-form identifier echoed into the result (typically the cloud path).
  std::string object;

  void validate() const;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct GraspResult {
  TaskRequest request;
  GraspCandidate selected;
  std::vector<GraspCandidate> candidates;
  DescriptionBundle descriptions;
  std::vector<StageTiming> timings;
  std::string config_hash;
};

/// Everything run() talks to besides the model. Non-owning.
struct PipelineComponents {
  DescriptionProvider* provider = nullptr;
  const TextEncoder* category_encoder = nullptr;
  const TextEncoder* part_encoder = nullptr;
  const Segmenter* segmenter = nullptr;
  const HandModel* hand = nullptr;
  DescriptionCache* cache = nullptr;
};

/// Text encoders matching a config's token limits and width.
struct TextEncoders {
  HashTextEncoder category;
  HashTextEncoder part;

  explicit TextEncoders(const LanguageAggregationConfig& cfg)
      : category(cfg.encoder_seed, cfg.T_d, cfg.T_td), part(cfg.encoder_seed, cfg.T_d, cfg.T_pd) {}
};

/// Condition vector for one (object, part, descriptions) combination.
Vec make_condition(const Model& model, const TextEncoder& category_encoder, const TextEncoder& part_encoder,
                   const GeoFeature& object_feature, const GeoFeature& part_feature,
                   const std::string& category_text, const std::string& part_text);

/// Description seeds. Keyed by name so reordering parts changes nothing.
std::uint64_t category_description_seed(std::uint64_t seed);
std::uint64_t part_description_seed(std::uint64_t seed, const std::string& label);
std::uint64_t grasp_seed(std::uint64_t seed, const std::string& label, int sample_index);

class Pipeline {
 public:
  Pipeline(const Model& model, PipelineComponents components);

  /// descriptions -> labels -> segmentation -> filtering -> sampling -> selection.
  /// Failures from a stage are rethrown with the stage name prefixed.
  GraspResult run(const TaskRequest& request) const;

 private:
  const Model& model_;
  PipelineComponents c_;
};

struct CandidateRecord {
  std::string part_label;
  double score = 0.0;
  std::vector<double> grasp;

  bool operator==(const CandidateRecord&) const = default;
};

/// The persisted form of a GraspResult.
struct ResultRecord {
  std::string category;
  std::string task;
  std::uint64_t seed = 0;
  std::string object;
  CandidateRecord selected;
  std::vector<CandidateRecord> candidates;
  std::string config_hash;
  std::string prompt_version;

  bool operator==(const ResultRecord&) const = default;

  std::string to_json() const;
  static ResultRecord from_json(const std::string& text);
  static ResultRecord load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

ResultRecord to_record(const GraspResult& result);

}  // namespace dextog
