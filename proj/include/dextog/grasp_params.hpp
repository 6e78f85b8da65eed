#pragma once

#include <span>

#include "dextog/common.hpp"

namespace dextog {

/// MANO-style hand parameters, the diffusion state.
///
/// Layout: [0,3) global rotation (axis-angle), [3,48) 15 joint rotations
/// (axis-angle), [48,58) shape coefficients, [58,61) palm translation in meters.
class GraspParams {
 public:
  static constexpr Eigen::Index kDim = 61;
  static constexpr Eigen::Index kGlobalRotOffset = 0;
  static constexpr Eigen::Index kJointOffset = 3;
  static constexpr Eigen::Index kJointDim = 45;
  static constexpr Eigen::Index kShapeOffset = 48;
  static constexpr Eigen::Index kShapeDim = 10;
  static constexpr Eigen::Index kTranslationOffset = 58;

  GraspParams() : values_(Vec::Zero(kDim)) {}
  explicit GraspParams(Vec values) : values_(std::move(values)) { validate(); }

  static GraspParams from_span(std::span<const double> values) {
    return GraspParams(Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size())));
  }

  const Vec& values() const { return values_; }
  double operator[](Eigen::Index i) const { return values_[i]; }

  Eigen::Vector3d global_rotation() const { return values_.segment<3>(kGlobalRotOffset); }
  Eigen::Vector3d translation() const { return values_.segment<3>(kTranslationOffset); }
  auto joint_rotations() const { return values_.segment(kJointOffset, kJointDim); }
  auto shape() const { return values_.segment(kShapeOffset, kShapeDim); }

  bool operator==(const GraspParams& other) const { return values_ == other.values_; }

 private:
  void validate() const {
    if (values_.size() != kDim) {
      throw Error(Errc::Shape, "grasp vector must have 61 entries, got " + std::to_string(values_.size()));
    }
    if (!values_.allFinite()) throw Error(Errc::Shape, "grasp vector has non-finite entries");
  }

  Vec values_;
};

}  // namespace dextog
