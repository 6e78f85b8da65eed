#include "dextog/hand_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dextog {

namespace {

constexpr double kPalmX = 0.08;
constexpr double kPalmY = 0.09;
constexpr double kPalmZ = 0.02;
constexpr double kFingerRadius = 0.008;
constexpr double kFingerLength = 0.07;
constexpr std::size_t kPalmPoints = 328;
constexpr std::size_t kFingerPoints = 90;  // x5

// Points on the surface of an axis-aligned box centered at the origin,
// spread over the faces by a deterministic low-discrepancy sequence.
void palm_points(std::vector<Point>& out) {
  const double a[3] = {kPalmX, kPalmY, kPalmZ};
  const double areas[3] = {a[1] * a[2], a[0] * a[2], a[0] * a[1]};
  const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
  const double phi1 = 0.7548776662466927;  // plastic-number R2 sequence
  const double phi2 = 0.5698402909980532;
  for (std::size_t i = 0; i < kPalmPoints; ++i) {
    double pick = (static_cast<double>(i) + 0.5) / kPalmPoints * total;
    int face = 0;
    while (face < 5 && pick >= areas[face / 2]) {
      pick -= areas[face / 2];
      ++face;
    }
    const int axis = face / 2;
    const double sign = face % 2 == 0 ? -1.0 : 1.0;
    const double u = std::fmod(0.5 + phi1 * static_cast<double>(i), 1.0);
    const double v = std::fmod(0.5 + phi2 * static_cast<double>(i), 1.0);
    Point p;
    const int ax1 = (axis + 1) % 3;
    const int ax2 = (axis + 2) % 3;
    p[axis] = sign * a[axis] / 2.0;
    p[ax1] = (u - 0.5) * a[ax1];
    p[ax2] = (v - 0.5) * a[ax2];
    out.push_back(p);
  }
}

// Five fingers along +y from the top edge of the palm, thumb angled along -x.
void finger_points(std::vector<Point>& out) {
  constexpr int kRings = 9;
  constexpr int kPerRing = static_cast<int>(kFingerPoints) / kRings;
  for (int f = 0; f < 5; ++f) {
    Point base;
    Eigen::Vector3d dir;
    if (f == 0) {
      base = Point(-kPalmX / 2.0, -kPalmY / 6.0, 0.0);
      dir = Eigen::Vector3d(-1.0, 1.0, 0.0).normalized();
    } else {
      base = Point(-kPalmX / 2.0 + kPalmX * (f - 0.5) / 4.0, kPalmY / 2.0, 0.0);
      dir = Eigen::Vector3d::UnitY();
    }
    const Eigen::Vector3d e1 = Eigen::Vector3d::UnitZ();
    const Eigen::Vector3d e2 = dir.cross(e1).normalized();
    for (int r = 0; r < kRings; ++r) {
      const double s = kFingerLength * (r + 0.5) / kRings;
      for (int k = 0; k < kPerRing; ++k) {
        const double th = 2.0 * std::numbers::pi * (k + 0.5 * (r % 2)) / kPerRing;
        out.push_back(base + s * dir + kFingerRadius * (std::cos(th) * e1 + std::sin(th) * e2));
      }
    }
  }
}

}  // namespace

Eigen::Matrix3d axis_angle_matrix(const Eigen::Vector3d& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

StubHandModel::StubHandModel(std::uint64_t seed, double deform_scale) {
  template_.points.reserve(kPoints);
  palm_points(template_.points);
  finger_points(template_.points);

  const auto cols = GraspParams::kJointDim + GraspParams::kShapeDim;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, deform_scale);
  basis_.resize(static_cast<Eigen::Index>(3 * kPoints), cols);
  for (Eigen::Index i = 0; i < basis_.size(); ++i) basis_.data()[i] = normal(rng);
}

PointCloud StubHandModel::surface(const GraspParams& g) const {
  Vec coeffs(GraspParams::kJointDim + GraspParams::kShapeDim);
  coeffs << g.joint_rotations(), g.shape();
  const Vec offsets = basis_ * coeffs;
  const Eigen::Matrix3d R = axis_angle_matrix(g.global_rotation());
  const Eigen::Vector3d t = g.translation();
  PointCloud out;
  out.points.reserve(kPoints);
  for (std::size_t i = 0; i < kPoints; ++i) {
    const Point local = template_[i] + offsets.segment<3>(static_cast<Eigen::Index>(3 * i));
    out.points.push_back(R * local + t);
  }
  return out;
}

ReachLimitedHandModel::ReachLimitedHandModel(const HandModel& base, Point anchor, double reach)
    : base_(base), anchor_(std::move(anchor)), reach_(reach) {
  if (!(reach > 0.0)) throw Error(Errc::Config, "reach must be positive");
}

PointCloud ReachLimitedHandModel::surface(const GraspParams& g) const {
  Vec v = g.values();
  for (int k = 0; k < 3; ++k) {
    const auto idx = GraspParams::kTranslationOffset + k;
    v[idx] = anchor_[k] + std::clamp(v[idx] - anchor_[k], -reach_, reach_);
  }
  return base_.surface(GraspParams(std::move(v)));
}

}  // namespace dextog
