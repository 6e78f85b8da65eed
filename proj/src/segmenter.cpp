#include "dextog/segmenter.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

namespace dextog {

using nlohmann::json;

std::vector<int> kmeans_assign(const PointCloud& cloud, int k, std::uint64_t seed, int max_iterations) {
  const auto n = cloud.size();
  if (k < 1) throw Error(Errc::Size, "k-means needs at least one cluster");
  if (static_cast<std::size_t>(k) > n) {
    throw Error(Errc::Size, "more labels (" + std::to_string(k) + ") than points (" + std::to_string(n) + ")");
  }
  std::vector<int> assign(n, 0);
  if (k == 1) return assign;

  Rng rng(seed);
  std::vector<Point> centers;
  centers.push_back(cloud[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, squared_distance(cloud[i], c));
      d2[i] = best;
      total += best;
    }
    if (total == 0.0) throw Error(Errc::Size, "fewer distinct points than labels");
    double pick = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (pick < d2[i]) {
        chosen = i;
        break;
      }
      pick -= d2[i];
    }
    centers.push_back(cloud[chosen]);
  }

  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(cloud[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = squared_distance(cloud[i], centers[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    if (!changed) break;
    std::vector<Point> sums(static_cast<std::size_t>(k), Point::Zero());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(assign[i])] += cloud[i];
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    for (int c = 0; c < k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      if (counts[cu] > 0) {
        centers[cu] = sums[cu] / counts[cu];
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = squared_distance(cloud[i], centers[static_cast<std::size_t>(assign[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centers[cu] = cloud[far];
      assign[far] = c;
    }
  }
  return assign;
}

std::vector<PartSegment> KMeansSegmenter::segment(const PointCloud& object,
                                                  const std::vector<PartLabel>& labels) const {
  if (labels.empty()) throw Error(Errc::Precondition, "segmentation needs at least one label");
  if (object.empty()) throw Error(Errc::Precondition, "segmentation needs a non-empty cloud");

  std::map<int, std::vector<std::string>> by_level;
  for (const auto& l : labels) by_level[l.scale_level].push_back(l.label);

  std::vector<PartSegment> out;
  for (auto& [level, names] : by_level) {
    std::sort(names.begin(), names.end());
    const int k = static_cast<int>(names.size());
    const auto assign = kmeans_assign(object, k, derive_seed(seed_, "level" + std::to_string(level)),
                                      max_iterations_);
    std::vector<std::vector<int>> members(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < assign.size(); ++i) {
      members[static_cast<std::size_t>(assign[i])].push_back(static_cast<int>(i));
    }
    std::vector<std::pair<Point, int>> order;
    for (int c = 0; c < k; ++c) {
      const auto& m = members[static_cast<std::size_t>(c)];
      Point centroid = Point::Zero();
      for (int idx : m) centroid += object[static_cast<std::size_t>(idx)];
      if (!m.empty()) centroid /= static_cast<double>(m.size());
      order.emplace_back(centroid, c);
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.first.x() != b.first.x()) return a.first.x() < b.first.x();
      if (a.first.y() != b.first.y()) return a.first.y() < b.first.y();
      if (a.first.z() != b.first.z()) return a.first.z() < b.first.z();
      return a.second < b.second;
    });
    for (int i = 0; i < k; ++i) {
      PartSegment s;
      s.label = names[static_cast<std::size_t>(i)];
      s.scale_level = level;
      s.point_indices = members[static_cast<std::size_t>(order[static_cast<std::size_t>(i)].second)];
      out.push_back(std::move(s));
    }
  }
  return out;
}

GroundTruthSegmenter GroundTruthSegmenter::from_directory(const std::filesystem::path& dir) {
  return GroundTruthSegmenter(load_segments(dir));
}

std::vector<PartSegment> GroundTruthSegmenter::segment(const PointCloud& object,
                                                       const std::vector<PartLabel>& labels) const {
  std::vector<PartSegment> out;
  for (const auto& l : labels) {
    auto it = std::find_if(segments_.begin(), segments_.end(),
                           [&](const PartSegment& s) { return s.label == l.label; });
    if (it == segments_.end()) {
      PartSegment empty;
      empty.label = l.label;
      empty.scale_level = l.scale_level;
      out.push_back(std::move(empty));
      continue;
    }
    it->validate(object.size());
    out.push_back(*it);
  }
  return out;
}

std::string segment_to_json(const PartSegment& segment) {
  return json{{"label", segment.label}, {"scale_level", segment.scale_level}, {"indices", segment.point_indices}}
      .dump();
}

PartSegment segment_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    PartSegment s;
    s.label = j.at("label").get<std::string>();
    s.scale_level = j.at("scale_level").get<int>();
    s.point_indices = j.at("indices").get<std::vector<int>>();
    if (s.label.empty() || s.scale_level < 1) throw Error(Errc::Parse, "segment needs a label and scale_level >= 1");
    return s;
  } catch (const json::exception& e) {
    throw Error(Errc::Parse, std::string("malformed segment file: ") + e.what());
  }
}

void save_segment(const std::filesystem::path& path, const PartSegment& segment) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << segment_to_json(segment) << '\n';
}

PartSegment load_segment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return segment_from_json(ss.str());
}

std::vector<PartSegment> load_segments(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::Io, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PartSegment> out;
  for (const auto& f : files) out.push_back(load_segment(f));
  return out;
}

}  // namespace dextog
