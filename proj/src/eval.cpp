#include "dextog/eval.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "dextog/training_pairs.hpp"

namespace dextog {

using nlohmann::json;

namespace {

constexpr char kEmpty = 0;
constexpr char kSurface = 1;
constexpr char kOutside = 2;

}  // namespace

VoxelGrid::VoxelGrid(const PointCloud& cloud, double voxel) : voxel_(voxel) {
  if (!(voxel > 0.0)) throw Error(Errc::Config, "voxel size must be positive");
  if (cloud.empty()) throw Error(Errc::Geometry, "cannot voxelize an empty cloud");
  cloud.validate();
  Point lo = cloud[0];
  Point hi = cloud[0];
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  for (int k = 0; k < 3; ++k) {
    if (!(hi[k] > lo[k])) throw Error(Errc::Geometry, "bounding box is flat along an axis");
  }
  const Eigen::Vector3i cmin = cell_of(lo);
  const Eigen::Vector3i cmax = cell_of(hi);
  origin_ = cmin - Eigen::Vector3i::Ones();
  dims_ = cmax - cmin + Eigen::Vector3i::Constant(3);
  cells_.assign(static_cast<std::size_t>(dims_.x()) * static_cast<std::size_t>(dims_.y()) *
                    static_cast<std::size_t>(dims_.z()),
                kEmpty);
  for (const auto& p : cloud.points) cells_[index(cell_of(p) - origin_)] = kSurface;

  // Exterior flood fill from the padded corner, 6-connected.
  std::deque<Eigen::Vector3i> queue;
  queue.emplace_back(0, 0, 0);
  cells_[index({0, 0, 0})] = kOutside;
  static const int steps[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!queue.empty()) {
    const Eigen::Vector3i c = queue.front();
    queue.pop_front();
    for (const auto& s : steps) {
      const Eigen::Vector3i n = c + Eigen::Vector3i(s[0], s[1], s[2]);
      if ((n.array() < 0).any() || (n.array() >= dims_.array()).any()) continue;
      auto& cell = cells_[index(n)];
      if (cell != kEmpty) continue;
      cell = kOutside;
      queue.push_back(n);
    }
  }
  filled_count_ = static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](char c) {
    return c != kOutside;
  }));
}

std::size_t VoxelGrid::index(const Eigen::Vector3i& l) const {
  return (static_cast<std::size_t>(l.z()) * static_cast<std::size_t>(dims_.y()) + static_cast<std::size_t>(l.y())) *
             static_cast<std::size_t>(dims_.x()) +
         static_cast<std::size_t>(l.x());
}

Eigen::Vector3i VoxelGrid::cell_of(const Point& p) const {
  return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / voxel_)), static_cast<int>(std::floor(p.y() / voxel_)),
                         static_cast<int>(std::floor(p.z() / voxel_)));
}

bool VoxelGrid::filled(const Eigen::Vector3i& cell) const {
  const Eigen::Vector3i l = cell - origin_;
  if ((l.array() < 0).any() || (l.array() >= dims_.array()).any()) return false;
  return cells_[index(l)] != kOutside;
}

std::vector<Eigen::Vector3i> VoxelGrid::filled_cells() const {
  std::vector<Eigen::Vector3i> out;
  out.reserve(filled_count_);
  for (int z = 0; z < dims_.z(); ++z) {
    for (int y = 0; y < dims_.y(); ++y) {
      for (int x = 0; x < dims_.x(); ++x) {
        if (cells_[index({x, y, z})] != kOutside) out.push_back(origin_ + Eigen::Vector3i(x, y, z));
      }
    }
  }
  return out;
}

double penetration_volume(const PointCloud& hand, const PointCloud& object, double voxel) {
  const VoxelGrid h(hand, voxel);
  const VoxelGrid o(object, voxel);
  std::size_t shared = 0;
  for (const auto& c : h.filled_cells()) shared += o.filled(c) ? 1 : 0;
  return static_cast<double>(shared) * voxel * voxel * voxel * 1e6;
}

double penetration_depth(const PointCloud& hand, const PointCloud& object, double voxel) {
  if (hand.empty() || object.empty()) throw Error(Errc::Precondition, "penetration_depth needs non-empty clouds");
  const VoxelGrid o(object, voxel);
  const KdTree tree(object);
  double worst = 0.0;
  for (const auto& p : hand.points) {
    if (!o.contains_point(p)) continue;
    worst = std::max(worst, std::sqrt(tree.nearest(p).squared_distance));
  }
  return worst * 100.0;
}

double contact_ratio(const std::vector<EvalSample>& samples, const HandModel& hand, double lambda) {
  if (samples.empty()) throw Error(Errc::Precondition, "contact_ratio needs at least one sample");
  std::size_t touching = 0;
  for (const auto& s : samples) touching += contact_score(s.object, hand.surface(s.grasp), lambda) > 0.0 ? 1 : 0;
  return static_cast<double>(touching) / static_cast<double>(samples.size());
}

double contact_ratio(const std::vector<GraspResult>& results, const HandModel& hand, double lambda) {
  std::vector<EvalSample> samples;
  for (const auto& r : results) samples.push_back({r.request.object_cloud, r.selected.grasp});
  return contact_ratio(samples, hand, lambda);
}

double diversity(const std::vector<GraspParams>& grasps) {
  if (grasps.size() < 2) throw Error(Errc::InsufficientData, "diversity needs at least two grasps");
  const double n = static_cast<double>(grasps.size());
  Vec mean = Vec::Zero(GraspParams::kDim);
  for (const auto& g : grasps) mean += g.values();
  mean /= n;
  Vec var = Vec::Zero(GraspParams::kDim);
  for (const auto& g : grasps) var += (g.values() - mean).cwiseAbs2();
  var /= n - 1.0;
  return var.mean();
}

namespace {

// Symmetric PSD square root by eigendecomposition; small negative eigenvalues
// from round-off are clamped, larger ones are an error.
Mat sqrt_psd(const Mat& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  if (es.info() != Eigen::Success) throw Error(Errc::Numerical, std::string("eigendecomposition failed for ") + what);
  Vec ev = es.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol) throw Error(Errc::Numerical, std::string(what) + " is not positive semi-definite");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void moments(const Mat& x, Vec& mu, Mat& cov) {
  if (x.rows() < 2) throw Error(Errc::InsufficientData, "Frechet distance needs at least two samples per set");
  mu = x.colwise().mean().transpose();
  const Mat c = x.rowwise() - mu.transpose();
  cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  cov += 1e-6 * Mat::Identity(cov.rows(), cov.cols());
}

}  // namespace

double frechet_distance(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw Error(Errc::Shape, "feature widths differ");
  Vec mu_a, mu_b;
  Mat cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);
  const Mat sa = sqrt_psd(cov_a, "covariance A");
  Mat inner = sa * cov_b * sa;
  inner = 0.5 * (inner + inner.transpose());
  const Mat cross = sqrt_psd(inner, "covariance product");
  const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
  return std::max(d, 0.0);
}

double frechet_feature_distance(const std::vector<GraspParams>& a, const std::vector<GraspParams>& b,
                                const FeatureFn& feature) {
  auto stack = [&](const std::vector<GraspParams>& gs) {
    if (gs.empty()) throw Error(Errc::InsufficientData, "empty grasp set");
    Mat m;
    for (std::size_t i = 0; i < gs.size(); ++i) {
      const Vec f = feature(gs[i]);
      if (i == 0) m.resize(static_cast<Eigen::Index>(gs.size()), f.size());
      if (f.size() != m.cols()) throw Error(Errc::Shape, "feature function changed width");
      m.row(static_cast<Eigen::Index>(i)) = f.transpose();
    }
    return m;
  };
  return frechet_distance(stack(a), stack(b));
}

double frechet_feature_distance(const std::vector<GraspResult>& a, const std::vector<GraspResult>& b,
                                const FeatureFn& feature) {
  auto selected = [](const std::vector<GraspResult>& rs) {
    std::vector<GraspParams> out;
    for (const auto& r : rs) out.push_back(r.selected.grasp);
    return out;
  };
  return frechet_feature_distance(selected(a), selected(b), feature);
}

FeatureFn hand_feature_fn(const ConditioningModel& conditioning, const HandModel& hand) {
  return [&conditioning, &hand](const GraspParams& g) { return conditioning.encode_object(hand.surface(g)).vector; };
}

namespace {

constexpr int kNeighbours = 8;

struct LevelView {
  std::vector<int> points;         // cloud indices in segments of this level
  std::vector<int> owner;          // segment index per entry of `points`
  std::vector<std::vector<int>> knn;  // positions into `points`, nearest first
};

LevelView level_view(const PointCloud& cloud, const std::vector<PartSegment>& segments, int level) {
  LevelView v;
  std::map<int, int> owner_of;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (segments[s].scale_level != level) continue;
    segments[s].validate(cloud.size());
    for (int idx : segments[s].point_indices) owner_of.emplace(idx, static_cast<int>(s));
  }
  for (const auto& [idx, s] : owner_of) {
    v.points.push_back(idx);
    v.owner.push_back(s);
  }
  const auto n = v.points.size();
  v.knn.resize(n);
  std::vector<std::pair<double, int>> d;
  for (std::size_t i = 0; i < n; ++i) {
    d.clear();
    const auto& p = cloud[static_cast<std::size_t>(v.points[i])];
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) d.emplace_back(squared_distance(p, cloud[static_cast<std::size_t>(v.points[j])]), static_cast<int>(j));
    }
    const auto k = std::min<std::size_t>(kNeighbours, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    for (std::size_t j = 0; j < k; ++j) v.knn[i].push_back(d[j].second);
  }
  return v;
}

std::vector<int> levels_of(const std::vector<PartSegment>& segments) {
  std::vector<int> levels;
  for (const auto& s : segments) levels.push_back(s.scale_level);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

}  // namespace

std::vector<int> boundary_points(const PointCloud& cloud, const std::vector<PartSegment>& segments, int scale_level) {
  const auto v = level_view(cloud, segments, scale_level);
  std::vector<int> out;
  for (std::size_t i = 0; i < v.points.size(); ++i) {
    if (!v.knn[i].empty() && v.owner[static_cast<std::size_t>(v.knn[i][0])] != v.owner[i]) out.push_back(v.points[i]);
  }
  return out;
}

std::vector<PartSegment> corrupt_segments(const PointCloud& cloud, const std::vector<PartSegment>& segments,
                                          double level, std::uint64_t seed) {
  if (!(level >= 0.0 && level <= 1.0)) throw Error(Errc::Config, "corruption level must be in [0, 1]");
  auto out = segments;
  if (level == 0.0) return out;
  std::vector<std::vector<char>> member(out.size());
  for (std::size_t s = 0; s < out.size(); ++s) {
    member[s].assign(cloud.size(), 0);
    for (int idx : out[s].point_indices) member[s][static_cast<std::size_t>(idx)] = 1;
  }
  for (int lvl : levels_of(segments)) {
    const auto v = level_view(cloud, segments, lvl);
    std::vector<std::size_t> boundary;
    for (std::size_t i = 0; i < v.points.size(); ++i) {
      if (!v.knn[i].empty() && v.owner[static_cast<std::size_t>(v.knn[i][0])] != v.owner[i]) boundary.push_back(i);
    }
    Rng rng(derive_seed(seed, "level" + std::to_string(lvl)));
    std::shuffle(boundary.begin(), boundary.end(), rng);
    std::vector<int> target(boundary.size());
    for (std::size_t b = 0; b < boundary.size(); ++b) {
      const auto i = boundary[b];
      std::vector<int> options;
      for (int j : v.knn[i]) {
        const int s = v.owner[static_cast<std::size_t>(j)];
        if (s != v.owner[i] && std::find(options.begin(), options.end(), s) == options.end()) options.push_back(s);
      }
      std::sort(options.begin(), options.end());
      target[b] = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
    }
    const auto moved = static_cast<std::size_t>(std::llround(level * static_cast<double>(boundary.size())));
    for (std::size_t b = 0; b < moved; ++b) {
      const auto idx = static_cast<std::size_t>(v.points[boundary[b]]);
      member[static_cast<std::size_t>(v.owner[boundary[b]])][idx] = 0;
      member[static_cast<std::size_t>(target[b])][idx] = 1;
    }
  }
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s].point_indices.clear();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (member[s][i]) out[s].point_indices.push_back(static_cast<int>(i));
    }
  }
  return out;
}

std::vector<double> robustness_curve(const SyntheticDataset& dataset, const std::vector<double>& levels,
                                     const std::vector<std::uint64_t>& seeds, const HandModel& hand, double lambda,
                                     int min_part_points) {
  if (dataset.grasps.empty() || seeds.empty()) throw Error(Errc::InsufficientData, "nothing to evaluate");
  std::vector<double> curve;
  for (double level : levels) {
    double correct = 0.0;
    for (auto seed : seeds) {
      auto objects = dataset.objects;
      for (auto& o : objects) o.segments = corrupt_segments(o.cloud, o.segments, level, derive_seed(seed, o.id));
      const auto assigned = assign_grasp_parts(objects, dataset.grasps, hand, lambda, min_part_points);
      std::map<std::string, const SynthObject*> by_id;
      for (const auto& o : objects) by_id[o.id] = &o;
      for (std::size_t i = 0; i < assigned.size(); ++i) {
        const auto& g = dataset.grasps[i];
        const auto& segs = by_id.at(g.object)->segments;
        if (assigned[i] >= 0 && segs[static_cast<std::size_t>(assigned[i])].label == g.part) correct += 1.0;
      }
    }
    curve.push_back(correct / static_cast<double>(seeds.size() * dataset.grasps.size()));
  }
  return curve;
}

std::string MetricReport::to_json() const {
  json j = {{"penetration_volume_cm3", penetration_volume_cm3},
            {"penetration_depth_cm", penetration_depth_cm},
            {"contact_ratio", contact_ratio},
            {"diversity", diversity},
            {"sample_count", sample_count},
            {"config", config.empty() ? json::object() : json::parse(config)}};
  if (frechet_distance) {
    j["frechet_feature_distance"] = *frechet_distance;
    j["frechet_feature_distance_note"] =
        "Frechet distance of hand-surface features under this repository's encoder; not comparable across encoders";
  }
  j["penetration_note"] = "voxel approximation on surface clouds with flood-fill interiors";
  return j.dump(2) + "\n";
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "metric,value\n";
  out << "penetration_volume_cm3," << penetration_volume_cm3 << "\n";
  out << "penetration_depth_cm," << penetration_depth_cm << "\n";
  out << "contact_ratio," << contact_ratio << "\n";
  out << "diversity," << diversity << "\n";
  if (frechet_distance) out << "frechet_feature_distance," << *frechet_distance << "\n";
  out << "sample_count," << sample_count << "\n";
  return out.str();
}

MetricReport evaluate_results(const std::vector<ResultRecord>& results, const std::vector<ResultRecord>* reference,
                              const Model& model, const HandModel& hand, const std::filesystem::path& base_dir) {
  if (results.empty()) throw Error(Errc::InsufficientData, "no results to evaluate");
  const auto& pcfg = model.config.pipeline;
  std::map<std::string, PointCloud> clouds;
  auto cloud_of = [&](const ResultRecord& r) -> const PointCloud& {
    auto it = clouds.find(r.object);
    if (it != clouds.end()) return it->second;
    if (r.object.empty()) throw Error(Errc::Precondition, "result has no object path");
    std::filesystem::path p(r.object);
    if (p.is_relative()) p = base_dir / p;
    return clouds.emplace(r.object, load_xyz(p)).first->second;
  };
  auto grasps_of = [](const std::vector<ResultRecord>& rs) {
    std::vector<GraspParams> out;
    for (const auto& r : rs) out.push_back(GraspParams::from_span(r.selected.grasp));
    return out;
  };

  MetricReport report;
  report.sample_count = static_cast<int>(results.size());
  report.config = model.config.to_json();
  const auto grasps = grasps_of(results);
  std::vector<EvalSample> samples;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& object = cloud_of(results[i]);
    const auto surface = hand.surface(grasps[i]);
    report.penetration_volume_cm3 += penetration_volume(surface, object, pcfg.voxel_size);
    report.penetration_depth_cm += penetration_depth(surface, object, pcfg.voxel_size);
    samples.push_back({object, grasps[i]});
  }
  report.penetration_volume_cm3 /= static_cast<double>(results.size());
  report.penetration_depth_cm /= static_cast<double>(results.size());
  report.contact_ratio = contact_ratio(samples, hand, pcfg.contact_threshold);
  report.diversity = diversity(grasps);
  if (reference) {
    report.frechet_distance =
        frechet_feature_distance(grasps, grasps_of(*reference), hand_feature_fn(model.conditioning, hand));
  }
  return report;
}

}  // namespace dextog
