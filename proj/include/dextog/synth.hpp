#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dextog/geometry.hpp"
#include "dextog/hand_model.hpp"
#include "dextog/language.hpp"

namespace dextog {

struct SynthCategory {
  std::string name;
  std::vector<std::string> parts;
  int objects = 1;
  int grasps_per_object = 4;
  // task -> part it should be grasped by. Defaults to "grasp <part>" per part.
  std::map<std::string, std::string> tasks;
};

struct SynthSpec {
  std::vector<SynthCategory> categories;
  int points_per_part = 512;
  double part_size = 0.06;   // nominal primitive extent, meters
  double contact_threshold = 0.005;
  int min_part_points = 32;
  int max_attempts = 4000;   // rejection-sampling budget per grasp

  void validate() const;
  static SynthSpec from_json(const std::string& text);
  static SynthSpec load(const std::filesystem::path& path);
  std::string to_json() const;
};

struct SynthObject {
  std::string id;
  std::string category;
  PointCloud cloud;
  std::vector<PartSegment> segments;
};

struct GraspRecord {
  std::string object;
  std::string category;
  std::string task;
  std::string part;  // intended part
  GraspParams grasp;
};

struct SyntheticDataset {
  SynthSpec spec;
  std::uint64_t seed = 0;
  std::vector<SynthObject> objects;
  std::vector<GraspRecord> grasps;

  const SynthObject& object(const std::string& id) const;
  /// Stub answers for the synthetic categories: parts at scale 1 and the task-to-part map.
  StubProvider::Options provider_options(std::uint64_t seed = 0) const;
};

/// Builds the dataset in memory. Throws Errc::Generation when a part ends up
/// below min_part_points or no grasp can be found for a part.
SyntheticDataset generate_synthetic_dataset(const SynthSpec& spec, std::uint64_t seed, const HandModel& hand);

/// Layout: dataset.json, objects/<id>.xyz, segments/<id>/<label>.json, grasps.json.
void write_dataset(const SyntheticDataset& dataset, const std::filesystem::path& dir);
SyntheticDataset load_dataset(const std::filesystem::path& dir);

/// Scores of `hand` against each segment, then the argmax among valid parts
/// (lowest index on ties). Returns -1 when no valid part has a positive score.
int contact_argmax(const PointCloud& object, const std::vector<PartSegment>& segments, const PointCloud& hand,
                   double lambda, int min_part_points, std::vector<double>* scores = nullptr);

}  // namespace dextog
