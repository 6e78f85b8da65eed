#include "dextog/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "dextog/segmenter.hpp"

namespace dextog {

using nlohmann::json;

namespace {

void fill_default_tasks(SynthSpec& s) {
  for (auto& c : s.categories) {
    if (c.tasks.empty()) {
      for (const auto& p : c.parts) c.tasks["grasp " + p] = p;
    }
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (categories.empty()) throw Error(Errc::Config, "synthetic spec lists no categories");
  for (const auto& c : categories) {
    if (c.name.empty() || c.parts.empty()) throw Error(Errc::Config, "each category needs a name and parts");
    if (c.objects < 1 || c.grasps_per_object < 0) throw Error(Errc::Config, "bad object or grasp count");
    auto sorted = c.parts;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw Error(Errc::Config, "duplicate part in category " + c.name);
    }
    for (const auto& [task, part] : c.tasks) {
      if (std::find(c.parts.begin(), c.parts.end(), part) == c.parts.end()) {
        throw Error(Errc::Config, "task '" + task + "' names unknown part '" + part + "'");
      }
    }
  }
  if (points_per_part < 1 || !(part_size > 0.0) || !(contact_threshold > 0.0) || min_part_points < 1 ||
      max_attempts < 1) {
    throw Error(Errc::Config, "bad synthetic spec sizes");
  }
}

std::string SynthSpec::to_json() const {
  json cats = json::array();
  for (const auto& c : categories) {
    cats.push_back({{"name", c.name},
                    {"parts", c.parts},
                    {"objects", c.objects},
                    {"grasps_per_object", c.grasps_per_object},
                    {"tasks", c.tasks}});
  }
  return json{{"categories", cats},
              {"points_per_part", points_per_part},
              {"part_size", part_size},
              {"contact_threshold", contact_threshold},
              {"min_part_points", min_part_points},
              {"max_attempts", max_attempts}}
      .dump(2);
}

SynthSpec SynthSpec::from_json(const std::string& text) {
  SynthSpec s;
  try {
    const json j = json::parse(text);
    for (const auto& jc : j.at("categories")) {
      SynthCategory c;
      c.name = jc.at("name").get<std::string>();
      c.parts = jc.at("parts").get<std::vector<std::string>>();
      c.objects = jc.value("objects", 1);
      c.grasps_per_object = jc.value("grasps_per_object", 4);
      if (jc.contains("tasks")) c.tasks = jc.at("tasks").get<std::map<std::string, std::string>>();
      s.categories.push_back(std::move(c));
    }
    s.points_per_part = j.value("points_per_part", s.points_per_part);
    s.part_size = j.value("part_size", s.part_size);
    s.contact_threshold = j.value("contact_threshold", s.contact_threshold);
    s.min_part_points = j.value("min_part_points", s.min_part_points);
    s.max_attempts = j.value("max_attempts", s.max_attempts);
  } catch (const json::exception& e) {
    throw Error(Errc::Config, std::string("malformed synthetic spec: ") + e.what());
  }
  fill_default_tasks(s);
  s.validate();
  return s;
}

SynthSpec SynthSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

const SynthObject& SyntheticDataset::object(const std::string& id) const {
  auto it = std::find_if(objects.begin(), objects.end(), [&](const SynthObject& o) { return o.id == id; });
  if (it == objects.end()) throw Error(Errc::Precondition, "unknown object '" + id + "'");
  return *it;
}

StubProvider::Options SyntheticDataset::provider_options(std::uint64_t provider_seed) const {
  StubProvider::Options o;
  o.seed = provider_seed;
  for (const auto& c : spec.categories) {
    auto& labels = o.part_labels[c.name];
    for (const auto& p : c.parts) labels.push_back({p, 1});
    for (const auto& [task, part] : c.tasks) o.task_parts[{c.name, task}] = part;
  }
  return o;
}

int contact_argmax(const PointCloud& object, const std::vector<PartSegment>& segments, const PointCloud& hand,
                   double lambda, int min_part_points, std::vector<double>* scores) {
  int best = -1;
  double best_score = 0.0;
  if (scores) scores->assign(segments.size(), 0.0);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (static_cast<int>(segments[i].point_indices.size()) < min_part_points) continue;
    const double s = contact_score(object.subset(segments[i].point_indices), hand, lambda);
    if (scores) (*scores)[i] = s;
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

namespace {

enum class Shape { Sphere, Box, Cylinder };

struct Primitive {
  Shape shape = Shape::Sphere;
  Point center = Point::Zero();
  Eigen::Vector3d half = Eigen::Vector3d::Constant(0.03);  // sphere: half.x() is the radius

  bool contains(const Point& p) const {
    const Eigen::Vector3d d = p - center;
    switch (shape) {
      case Shape::Sphere:
        return d.norm() < half.x();
      case Shape::Box:
        return std::abs(d.x()) < half.x() && std::abs(d.y()) < half.y() && std::abs(d.z()) < half.z();
      case Shape::Cylinder:
        return std::abs(d.x()) < half.x() && std::hypot(d.y(), d.z()) < half.y();
    }
    return false;
  }

  Point sample_surface(Rng& rng) const {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    switch (shape) {
      case Shape::Sphere: {
        Eigen::Vector3d v;
        std::normal_distribution<double> n(0.0, 1.0);
        do {
          v = {n(rng), n(rng), n(rng)};
        } while (v.norm() == 0.0);
        return center + half.x() * v.normalized();
      }
      case Shape::Box: {
        const double a[3] = {half.y() * half.z(), half.x() * half.z(), half.x() * half.y()};
        double pick = std::uniform_real_distribution<double>(0.0, a[0] + a[1] + a[2])(rng);
        int axis = 0;
        while (axis < 2 && pick >= a[axis]) pick -= a[axis++];
        Eigen::Vector3d v(u(rng), u(rng), u(rng));
        v[axis] = u(rng) < 0.0 ? -1.0 : 1.0;
        return center + v.cwiseProduct(half);
      }
      case Shape::Cylinder: {
        const double side = 2.0 * half.x() * half.y();  // lateral area / (2 pi), up to a common factor
        const double cap = half.y() * half.y() / 2.0;
        const double pick = std::uniform_real_distribution<double>(0.0, side + 2.0 * cap)(rng);
        const double th = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
        if (pick < side) {
          return center + Point(half.x() * u(rng), half.y() * std::cos(th), half.y() * std::sin(th));
        }
        const double r = half.y() * std::sqrt(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
        const double x = pick < side + cap ? -half.x() : half.x();
        return center + Point(x, r * std::cos(th), r * std::sin(th));
      }
    }
    return center;
  }

  // Extent along x, used to chain parts.
  double half_x() const { return half.x(); }
};

Primitive make_primitive(const std::string& part, double size, Rng& rng) {
  std::uniform_real_distribution<double> jitter(0.85, 1.15);
  Primitive p;
  p.shape = static_cast<Shape>(stable_hash64(part) % 3);
  const double s = size / 2.0;
  switch (p.shape) {
    case Shape::Sphere:
      p.half = Eigen::Vector3d::Constant(s * jitter(rng));
      break;
    case Shape::Box:
      p.half = {s * jitter(rng), s * jitter(rng), s * jitter(rng)};
      break;
    case Shape::Cylinder: {
      const double r = 0.7 * s * jitter(rng);
      p.half = {s * jitter(rng), r, r};
      break;
    }
  }
  return p;
}

SynthObject make_object(const SynthCategory& cat, int index, const SynthSpec& spec, Rng& rng) {
  SynthObject obj;
  obj.category = cat.name;
  obj.id = cat.name + "_" + std::to_string(index);

  std::vector<Primitive> prims;
  for (const auto& part : cat.parts) prims.push_back(make_primitive(part, spec.part_size, rng));
  // Chain along x with a small interpenetration so neighbouring parts share a seam.
  double x = 0.0;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    if (i > 0) x += 0.8 * (prims[i - 1].half_x() + prims[i].half_x());
    prims[i].center = Point(x, 0.0, 0.0);
  }
  const Point shift(-x / 2.0, 0.0, 0.0);
  for (auto& p : prims) p.center += shift;

  for (std::size_t i = 0; i < prims.size(); ++i) {
    PartSegment seg;
    seg.label = cat.parts[i];
    seg.scale_level = 1;
    for (int k = 0; k < spec.points_per_part; ++k) {
      const Point p = prims[i].sample_surface(rng);
      bool hidden = false;
      for (std::size_t j = 0; j < prims.size() && !hidden; ++j) hidden = j != i && prims[j].contains(p);
      if (hidden) continue;
      seg.point_indices.push_back(static_cast<int>(obj.cloud.size()));
      obj.cloud.points.push_back(p);
    }
    if (static_cast<int>(seg.point_indices.size()) < spec.min_part_points) {
      throw Error(Errc::Generation, "part '" + seg.label + "' of " + obj.id + " keeps only " +
                                        std::to_string(seg.point_indices.size()) + " visible points");
    }
    obj.segments.push_back(std::move(seg));
  }
  return obj;
}

GraspParams propose_grasp(const Point& target, double part_size, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v = Vec::Zero(GraspParams::kDim);
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  const double angle = std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
  v.segment<3>(GraspParams::kGlobalRotOffset) = angle * axis.normalized();
  for (Eigen::Index k = 0; k < GraspParams::kJointDim; ++k) v[GraspParams::kJointOffset + k] = 0.5 * n(rng);
  for (Eigen::Index k = 0; k < GraspParams::kShapeDim; ++k) v[GraspParams::kShapeOffset + k] = 0.5 * n(rng);
  const Eigen::Vector3d offset(n(rng), n(rng), n(rng));
  v.segment<3>(GraspParams::kTranslationOffset) = target + 0.4 * part_size * offset;
  return GraspParams(std::move(v));
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(const SynthSpec& spec, std::uint64_t seed, const HandModel& hand) {
  spec.validate();
  SyntheticDataset ds;
  ds.spec = spec;
  fill_default_tasks(ds.spec);
  ds.seed = seed;
  for (const auto& cat : ds.spec.categories) {
    std::vector<std::string> task_names;
    for (const auto& [task, part] : cat.tasks) task_names.push_back(task);
    if (task_names.empty()) throw Error(Errc::Config, "category " + cat.name + " has no tasks");

    for (int o = 0; o < cat.objects; ++o) {
      Rng rng(derive_seed(seed, cat.name + "/" + std::to_string(o)));
      auto obj = make_object(cat, o, spec, rng);
      for (int gi = 0; gi < cat.grasps_per_object; ++gi) {
        const auto& task = task_names[static_cast<std::size_t>(gi) % task_names.size()];
        const auto& part = cat.tasks.at(task);
        const auto part_index = static_cast<std::size_t>(
            std::find(cat.parts.begin(), cat.parts.end(), part) - cat.parts.begin());
        const auto& seg = obj.segments[part_index];
        bool found = false;
        for (int attempt = 0; attempt < spec.max_attempts && !found; ++attempt) {
          const Point target = obj.cloud[static_cast<std::size_t>(
              seg.point_indices[std::uniform_int_distribution<std::size_t>(0, seg.point_indices.size() - 1)(rng)])];
          auto g = propose_grasp(target, spec.part_size, rng);
          const int best = contact_argmax(obj.cloud, obj.segments, hand.surface(g), spec.contact_threshold,
                                          spec.min_part_points);
          if (best == static_cast<int>(part_index)) {
            ds.grasps.push_back({obj.id, cat.name, task, part, std::move(g)});
            found = true;
          }
        }
        if (!found) {
          throw Error(Errc::Generation, "no grasp found for part '" + part + "' of " + obj.id + " within " +
                                            std::to_string(spec.max_attempts) + " attempts");
        }
      }
      ds.objects.push_back(std::move(obj));
    }
  }
  return ds;
}

void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "objects");
  fs::create_directories(dir / "segments");
  {
    std::ofstream out(dir / "dataset.json");
    if (!out) throw Error(Errc::Io, "cannot write " + (dir / "dataset.json").string());
    out << json{{"seed", ds.seed}, {"spec", json::parse(ds.spec.to_json())}}.dump(2) << '\n';
  }
  json objects = json::array();
  for (const auto& o : ds.objects) {
    save_xyz(dir / "objects" / (o.id + ".xyz"), o.cloud);
    for (const auto& s : o.segments) save_segment(dir / "segments" / o.id / (s.label + ".json"), s);
    objects.push_back({{"id", o.id}, {"category", o.category}});
  }
  json grasps = json::array();
  for (const auto& g : ds.grasps) {
    const auto& v = g.grasp.values();
    grasps.push_back({{"object", g.object},
                      {"category", g.category},
                      {"task", g.task},
                      {"part", g.part},
                      {"grasp", std::vector<double>(v.data(), v.data() + v.size())}});
  }
  std::ofstream out(dir / "grasps.json");
  if (!out) throw Error(Errc::Io, "cannot write grasps.json");
  out << json{{"objects", objects}, {"grasps", grasps}}.dump(2) << '\n';
}

SyntheticDataset load_dataset(const std::filesystem::path& dir) {
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(Errc::Io, "cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  SyntheticDataset ds;
  try {
    const json meta = json::parse(read(dir / "dataset.json"));
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.spec = SynthSpec::from_json(meta.at("spec").dump());
    const json body = json::parse(read(dir / "grasps.json"));
    for (const auto& jo : body.at("objects")) {
      SynthObject o;
      o.id = jo.at("id").get<std::string>();
      o.category = jo.at("category").get<std::string>();
      o.cloud = load_xyz(dir / "objects" / (o.id + ".xyz"));
      auto cat = std::find_if(ds.spec.categories.begin(), ds.spec.categories.end(),
                              [&](const SynthCategory& c) { return c.name == o.category; });
      if (cat == ds.spec.categories.end()) throw Error(Errc::Parse, "object " + o.id + " has an unknown category");
      for (const auto& part : cat->parts) {
        auto seg = load_segment(dir / "segments" / o.id / (part + ".json"));
        seg.validate(o.cloud.size());
        o.segments.push_back(std::move(seg));
      }
      ds.objects.push_back(std::move(o));
    }
    for (const auto& jg : body.at("grasps")) {
      const auto v = jg.at("grasp").get<std::vector<double>>();
      ds.grasps.push_back({jg.at("object").get<std::string>(), jg.at("category").get<std::string>(),
                           jg.at("task").get<std::string>(), jg.at("part").get<std::string>(),
                           GraspParams::from_span(v)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Parse, std::string("malformed dataset: ") + e.what());
  }
  return ds;
}

}  // namespace dextog
