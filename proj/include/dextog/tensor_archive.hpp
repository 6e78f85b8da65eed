#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "dextog/common.hpp"
#include "dextog/conditioning.hpp"
#include "dextog/config.hpp"
#include "dextog/denoiser.hpp"

namespace dextog {

/// Named dense tensors with shapes, stored as one JSON document.
struct TensorArchive {
  std::map<std::string, std::string> meta;
  std::map<std::string, Mat> tensors;

  /// Throws Errc::Io when `name` is absent.
  const Mat& at(const std::string& name) const;

  std::string to_json() const;
  static TensorArchive from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);
};

/// Everything needed to turn a request into grasps: frozen conditioning
/// weights, the denoiser, and the schedule, all derived from one config.
struct Model {
  Config config;
  ConditioningModel conditioning;
  std::unique_ptr<Denoiser> denoiser;
  NoiseSchedule schedule;

  /// Fresh seeded weights.
  static Model create(const Config& config);

  TensorArchive to_archive() const;
  /// Checks that the archive's recorded model hash matches its config.
  static Model from_archive(const TensorArchive& archive);

  void save(const std::filesystem::path& path) const { to_archive().save(path); }
  static Model load(const std::filesystem::path& path) { return from_archive(TensorArchive::load(path)); }
};

}  // namespace dextog
