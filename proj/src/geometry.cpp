#include "dextog/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace dextog {

void PointCloud::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw Error(Errc::Geometry, "non-finite coordinate at point " + std::to_string(i));
    }
  }
}

Point PointCloud::centroid() const {
  if (points.empty()) throw Error(Errc::Precondition, "centroid of an empty cloud");
  Point sum = Point::Zero();
  for (const auto& p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

PointCloud PointCloud::subset(std::span<const int> indices) const {
  PointCloud out;
  out.points.reserve(indices.size());
  for (int idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= points.size()) {
      throw Error(Errc::Index, "subset index " + std::to_string(idx) + " out of range");
    }
    out.points.push_back(points[static_cast<std::size_t>(idx)]);
  }
  return out;
}

PointCloud PointCloud::translated(const Point& offset) const {
  PointCloud out = *this;
  for (auto& p : out.points) p += offset;
  return out;
}

// ---------------------------------------------------------------------------
// KdTree

namespace {
constexpr int kLeafSize = 8;
}

KdTree::KdTree(const PointCloud& cloud) : cloud_(cloud) {
  if (cloud_.empty()) throw Error(Errc::Precondition, "k-d tree over an empty cloud");
  order_.resize(cloud_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * cloud_.size() / kLeafSize + 1);
  build(0, static_cast<int>(order_.size()));
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Point lo = cloud_[order_[begin]];
  Point hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(cloud_[order_[i]]);
    hi = hi.cwiseMax(cloud_[order_[i]]);
  }
  int dim = 0;
  (hi - lo).maxCoeff(&dim);
  if (hi[dim] == lo[dim]) return id;  // all points coincide

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return cloud_[a][dim] < cloud_[b][dim]; });
  const double split = cloud_[order_[mid]][dim];

  nodes_[id].dim = dim;
  nodes_[id].split = split;
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node_id, const Point& q, Hit& best) const {
  const Node& node = nodes_[node_id];
  if (node.dim < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[i];
      const double d2 = squared_distance(q, cloud_[idx]);
      if (best.index < 0 || d2 < best.squared_distance ||
          (d2 == best.squared_distance && idx < best.index)) {
        best = Hit{idx, d2};
      }
    }
    return;
  }
  // Left subtree holds coordinates <= split, right holds >= split.
  const double diff = q[node.dim] - node.split;
  const int near = diff <= 0.0 ? node.left : node.right;
  const int far = diff <= 0.0 ? node.right : node.left;
  search(near, q, best);
  // Any point across the plane has a rounded squared distance >= diff*diff, so
  // only a strict excess can be pruned without losing index ties.
  if (diff * diff <= best.squared_distance) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Point& query) const {
  Hit best;
  search(0, query, best);
  return best;
}

// ---------------------------------------------------------------------------

std::vector<double> min_distances(const PointCloud& query, const PointCloud& target) {
  if (query.empty() || target.empty()) {
    throw Error(Errc::Precondition, "min_distances needs non-empty clouds");
  }
  const KdTree tree(target);
  std::vector<double> out(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    out[i] = std::sqrt(tree.nearest(query[i]).squared_distance);
  }
  return out;
}

double contact_score(const PointCloud& part, const PointCloud& hand, double lambda) {
  if (!(lambda > 0.0)) throw Error(Errc::Config, "contact threshold lambda must be positive");
  if (part.empty() || hand.empty()) {
    throw Error(Errc::Precondition, "contact_score needs non-empty clouds");
  }
  const auto dists = min_distances(part, hand);
  const auto touching = std::count_if(dists.begin(), dists.end(), [&](double d) { return d < lambda; });
  return static_cast<double>(touching) / static_cast<double>(part.size());
}

void PartSegment::validate(std::size_t cloud_size) const {
  std::unordered_set<int> seen;
  seen.reserve(point_indices.size());
  for (int idx : point_indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= cloud_size) {
      throw Error(Errc::Index, "segment '" + label + "' index " + std::to_string(idx) + " out of range");
    }
    if (!seen.insert(idx).second) {
      throw Error(Errc::Index, "segment '" + label + "' repeats index " + std::to_string(idx));
    }
  }
}

std::vector<PartSegment> filter_valid_parts(std::vector<PartSegment>& segments, int min_part_points) {
  if (min_part_points < 1) throw Error(Errc::Config, "min_part_points must be >= 1");
  std::vector<PartSegment> kept;
  for (auto& seg : segments) {
    seg.valid = static_cast<int>(seg.point_indices.size()) >= min_part_points;
    if (seg.valid) kept.push_back(seg);
  }
  return kept;
}

std::size_t select_best_index(std::span<const GraspCandidate> candidates) {
  if (candidates.empty()) throw Error(Errc::NoValidParts, "no candidates to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i].score > candidates[best].score) best = i;
  }
  return best;
}

const GraspCandidate& select_best(std::span<const GraspCandidate> candidates) {
  return candidates[select_best_index(candidates)];
}

}  // namespace dextog
