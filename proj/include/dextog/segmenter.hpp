#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dextog/geometry.hpp"
#include "dextog/language.hpp"

namespace dextog {

/// Splits an object cloud into one segment per requested part label.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  /// Returns one segment per label (possibly empty), indices valid for `object`.
  virtual std::vector<PartSegment> segment(const PointCloud& object, const std::vector<PartLabel>& labels) const = 0;
};

/// Offline heuristic. Within each scale level, labels are sorted and the cloud
/// is split by seeded k-means (k = number of labels at that level); clusters
/// are ordered by centroid (lexicographic x, y, z) and matched to labels in order.
class KMeansSegmenter : public Segmenter {
 public:
  explicit KMeansSegmenter(std::uint64_t seed = 0, int max_iterations = 100)
      : seed_(seed), max_iterations_(max_iterations) {}

  std::vector<PartSegment> segment(const PointCloud& object, const std::vector<PartLabel>& labels) const override;

 private:
  std::uint64_t seed_;
  int max_iterations_;
};

/// Returns stored segments verbatim. Labels without a stored segment come
/// back empty.
class GroundTruthSegmenter : public Segmenter {
 public:
  explicit GroundTruthSegmenter(std::vector<PartSegment> segments) : segments_(std::move(segments)) {}
  /// Loads every `*.json` segment file in `dir`.
  static GroundTruthSegmenter from_directory(const std::filesystem::path& dir);

  std::vector<PartSegment> segment(const PointCloud& object, const std::vector<PartLabel>& labels) const override;
  const std::vector<PartSegment>& segments() const { return segments_; }

 private:
  std::vector<PartSegment> segments_;
};

/// Cluster assignment by Lloyd iterations from k-means++ seeding. Empty
/// clusters are reseeded at the point farthest from its center.
std::vector<int> kmeans_assign(const PointCloud& cloud, int k, std::uint64_t seed, int max_iterations = 100);

// Segment file: {"label", "scale_level", "indices": [...]}.
std::string segment_to_json(const PartSegment& segment);
PartSegment segment_from_json(const std::string& text);
void save_segment(const std::filesystem::path& path, const PartSegment& segment);
PartSegment load_segment(const std::filesystem::path& path);
/// All `*.json` files in `dir`, sorted by file name.
std::vector<PartSegment> load_segments(const std::filesystem::path& dir);

}  // namespace dextog
