#pragma once

#include <cstdint>

#include <Eigen/Geometry>

#include "dextog/geometry.hpp"

namespace dextog {

/// Maps grasp parameters to a hand-surface point cloud.
class HandModel {
 public:
  virtual ~HandModel() = default;
  /// Deterministic in `g`; always returns point_count() points.
  virtual PointCloud surface(const GraspParams& g) const = 0;
  virtual std::size_t point_count() const = 0;
};

/// Stand-in for a skinned hand mesh. A fixed 778-point template (palm box and
/// five finger cylinders) is deformed by a seeded linear basis driven by the
/// joint and shape blocks, rotated by the global axis-angle block and shifted
/// by the palm translation. Zero parameters give the template unchanged.
class StubHandModel : public HandModel {
 public:
  static constexpr std::size_t kPoints = 778;

  explicit StubHandModel(std::uint64_t seed = 0, double deform_scale = 0.002);

  PointCloud surface(const GraspParams& g) const override;
  std::size_t point_count() const override { return kPoints; }

  const PointCloud& template_cloud() const { return template_; }

 private:
  PointCloud template_;
  Mat basis_;  // (3 * kPoints) x 55, columns for joints then shape
};

/// Wraps another hand model and confines the palm translation to a cube of
/// half-width `reach` around `anchor`. Models a hand that can only get near
/// one region of the workspace.
class ReachLimitedHandModel : public HandModel {
 public:
  ReachLimitedHandModel(const HandModel& base, Point anchor, double reach);

  PointCloud surface(const GraspParams& g) const override;
  std::size_t point_count() const override { return base_.point_count(); }

 private:
  const HandModel& base_;
  Point anchor_;
  double reach_;
};

/// Axis-angle to rotation matrix (Rodrigues).
Eigen::Matrix3d axis_angle_matrix(const Eigen::Vector3d& axis_angle);

}  // namespace dextog
