#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dextog/grasp_params.hpp"

namespace dextog {

using Point = Eigen::Vector3d;

/// Point set in meters. Object, part and hand-surface clouds all use this.
struct PointCloud {
  std::vector<Point> points;

  PointCloud() = default;
  explicit PointCloud(std::vector<Point> pts) : points(std::move(pts)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Point& operator[](std::size_t i) const { return points[i]; }

  /// Throws Errc::Geometry if any coordinate is NaN or infinite.
  void validate() const;
  Point centroid() const;
  PointCloud subset(std::span<const int> indices) const;
  PointCloud translated(const Point& offset) const;
};

/// Euclidean distance with a fixed evaluation order, sqrt(dx*dx + dy*dy + dz*dz).
/// Every distance in this module goes through this so accelerated queries agree
/// bit-for-bit with an exhaustive scan.
inline double squared_distance(const Point& a, const Point& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Exact nearest-neighbour index over a fixed cloud.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud);

  struct Hit {
    int index = -1;
    double squared_distance = 0.0;
  };

  /// Closest point; ties go to the lowest index.
  Hit nearest(const Point& query) const;

  const PointCloud& cloud() const { return cloud_; }

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int dim = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end);
  void search(int node, const Point& q, Hit& best) const;

  PointCloud cloud_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// A labeled subset of an object cloud produced by segmentation.
struct PartSegment {
  std::string label;
  int scale_level = 1;
  std::vector<int> point_indices;
  bool valid = false;

  /// Indices must be unique and inside [0, cloud_size).
  void validate(std::size_t cloud_size) const;
};

struct GraspCandidate {
  PartSegment part;
  GraspParams grasp;
  double score = 0.0;
};

/// Per query point, the distance to the closest target point.
std::vector<double> min_distances(const PointCloud& query, const PointCloud& target);

/// Fraction of part points whose closest hand point is strictly nearer than `lambda`.
double contact_score(const PointCloud& part, const PointCloud& hand, double lambda);

/// Marks every segment's `valid` flag and returns the ones with at least
/// `min_part_points` points, in input order.
std::vector<PartSegment> filter_valid_parts(std::vector<PartSegment>& segments, int min_part_points);

/// Index of the highest-scoring candidate; the earliest one wins ties.
std::size_t select_best_index(std::span<const GraspCandidate> candidates);
const GraspCandidate& select_best(std::span<const GraspCandidate> candidates);

// Plain-text `x y z` per line, `#` comments.
PointCloud load_xyz(const std::filesystem::path& path);
PointCloud parse_xyz(const std::string& text);
void save_xyz(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace dextog
