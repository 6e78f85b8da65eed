#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dextog/geometry.hpp"
#include "dextog/hand_model.hpp"
#include "dextog/pipeline.hpp"
#include "dextog/synth.hpp"

namespace dextog {

/// Cells of a cloud on the global lattice floor(p / voxel), with interior
/// filled by flood fill from outside the bounding box.
class VoxelGrid {
 public:
  /// Throws Errc::Geometry when the cloud's bounding box is flat along any axis.
  VoxelGrid(const PointCloud& cloud, double voxel);

  bool filled(const Eigen::Vector3i& cell) const;
  bool contains_point(const Point& p) const { return filled(cell_of(p)); }
  Eigen::Vector3i cell_of(const Point& p) const;
  std::size_t filled_count() const { return filled_count_; }
  double voxel() const { return voxel_; }

  /// Filled cells, in lattice coordinates.
  std::vector<Eigen::Vector3i> filled_cells() const;

 private:
  std::size_t index(const Eigen::Vector3i& local) const;

  double voxel_;
  Eigen::Vector3i origin_;  // lattice coordinate of local (0,0,0)
  Eigen::Vector3i dims_;
  std::vector<char> cells_;
  std::size_t filled_count_ = 0;
};

/// Volume of cells filled in both voxelizations, in cm^3.
double penetration_volume(const PointCloud& hand, const PointCloud& object, double voxel);

/// Largest distance from a hand point inside the filled object to the object
/// surface cloud, in cm. Zero when no hand point is inside.
double penetration_depth(const PointCloud& hand, const PointCloud& object, double voxel = 0.005);

struct EvalSample {
  PointCloud object;
  GraspParams grasp;
};

/// Fraction of samples whose hand touches the object (contact score > 0).
double contact_ratio(const std::vector<EvalSample>& samples, const HandModel& hand, double lambda);
double contact_ratio(const std::vector<GraspResult>& results, const HandModel& hand, double lambda);

/// Mean over coordinates of the per-coordinate sample variance (n - 1 denominator).
double diversity(const std::vector<GraspParams>& grasps);

/// Frechet distance between Gaussians fitted to the rows of `a` and `b`.
/// Covariances get +1e-6 I; throws Errc::Numerical if one is still not PSD.
double frechet_distance(const Mat& a, const Mat& b);

using FeatureFn = std::function<Vec(const GraspParams&)>;

double frechet_feature_distance(const std::vector<GraspParams>& a, const std::vector<GraspParams>& b,
                                const FeatureFn& feature);
double frechet_feature_distance(const std::vector<GraspResult>& a, const std::vector<GraspResult>& b,
                                const FeatureFn& feature);

/// Set-abstraction feature of the hand surface. Keeps references to both arguments.
FeatureFn hand_feature_fn(const ConditioningModel& conditioning, const HandModel& hand);

/// Points whose nearest neighbour (among points of segments at the same scale
/// level) lies in another segment of that level.
std::vector<int> boundary_points(const PointCloud& cloud, const std::vector<PartSegment>& segments, int scale_level);

/// Moves round(level * |boundary|) boundary points of each scale level to a
/// random segment among those of their 8 nearest neighbours. Seeded; the moved
/// set at a lower level is a prefix of the moved set at a higher level.
std::vector<PartSegment> corrupt_segments(const PointCloud& cloud, const std::vector<PartSegment>& segments,
                                          double level, std::uint64_t seed);

/// For each corruption level, the fraction of grasps whose contact-argmax part
/// on the corrupted segments equals the intended part, averaged over `seeds`.
std::vector<double> robustness_curve(const SyntheticDataset& dataset, const std::vector<double>& levels,
                                     const std::vector<std::uint64_t>& seeds, const HandModel& hand, double lambda,
                                     int min_part_points);

struct MetricReport {
  double penetration_volume_cm3 = 0.0;
  double penetration_depth_cm = 0.0;
  double contact_ratio = 0.0;
  double diversity = 0.0;
  // Only when a reference set was given.
  std::optional<double> frechet_distance;
  int sample_count = 0;
  std::string config;  // JSON snapshot

  std::string to_json() const;
  std::string to_csv() const;
};

/// Metrics over stored results. Each result's `object` must name a readable
/// cloud (relative paths resolve against `base_dir`).
MetricReport evaluate_results(const std::vector<ResultRecord>& results, const std::vector<ResultRecord>* reference,
                              const Model& model, const HandModel& hand, const std::filesystem::path& base_dir);

}  // namespace dextog
