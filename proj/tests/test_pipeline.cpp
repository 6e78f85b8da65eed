#include "dextog/hand_model.hpp"
#include "dextog/pipeline.hpp"
#include "dextog/segmenter.hpp"
#include "dextog/synth.hpp"
#include "dextog/tensor_archive.hpp"
#include "dextog/training_pairs.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fixtures.hpp"

using namespace dextog;
namespace fs = std::filesystem;

namespace {

GraspParams with(Eigen::Index offset, const Eigen::Vector3d& v) {
  Vec g = Vec::Zero(61);
  g.segment<3>(offset) = v;
  return GraspParams(g);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

SynthSpec two_part_spec() {
  SynthSpec spec;
  SynthCategory cat;
  cat.name = "widget";
  cat.parts = {"knob", "shaft"};
  cat.objects = 1;
  cat.grasps_per_object = 4;
  spec.categories = {cat};
  spec.points_per_part = 300;
  return spec;
}

struct Fixture {
  Config config = testing::small_config();
  Model model = Model::create(config);
  TextEncoders encoders{config.language_aggregation};
  testing::Dumbbell object = testing::dumbbell(300);
  StubProvider provider;
  GroundTruthSegmenter segmenter{object.segments};
  StubHandModel hand;

  explicit Fixture(std::vector<PartLabel> labels = {{"end a", 1}, {"end b", 1}})
      : provider(StubProvider::Options{{{"dumbbell", labels}}, {}, 0}) {}

  PipelineComponents components() {
    return {&provider, &encoders.category, &encoders.part, &segmenter, &hand, nullptr};
  }
  TaskRequest request(std::uint64_t seed) const { return {object.cloud, "dumbbell", "lift it", seed, "dumbbell.xyz"}; }
};

}  // namespace

TEST_CASE("stub hand model contract") {
  const StubHandModel hand;
  const auto zero = hand.surface(GraspParams());
  CHECK(zero.size() == 778);
  CHECK(hand.point_count() == 778);
  for (std::size_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == hand.template_cloud()[i]);

  const auto shifted = hand.surface(with(GraspParams::kTranslationOffset, {0.1, 0, 0}));
  for (std::size_t i = 0; i < zero.size(); ++i) CHECK((shifted[i] - zero[i] - Point(0.1, 0, 0)).norm() <= 1e-15);

  Rng rng(3);
  const GraspParams g(standard_normal(rng, 61));
  CHECK(hand.surface(g).size() == 778);
  CHECK(hand.surface(g).points == hand.surface(g).points);

  // A pure rotation preserves distances from the origin.
  const auto rotated = hand.surface(with(GraspParams::kGlobalRotOffset, {0.3, -0.2, 1.1}));
  for (std::size_t i = 0; i < zero.size(); ++i) CHECK(rotated[i].norm() == doctest::Approx(zero[i].norm()));
  CHECK(axis_angle_matrix(Eigen::Vector3d::Zero()).isIdentity());
  CHECK((axis_angle_matrix({0, 0, std::numbers::pi / 2}) * Point(1, 0, 0) - Point(0, 1, 0)).norm() < 1e-15);
}

TEST_CASE("reach-limited hand clamps the palm translation") {
  const StubHandModel base;
  const ReachLimitedHandModel hand(base, Point(1, 0, 0), 0.1);
  const auto far = hand.surface(with(GraspParams::kTranslationOffset, {-5, 0.05, 0}));
  const auto expect = base.surface(with(GraspParams::kTranslationOffset, {0.9, 0.05, 0}));
  CHECK(far.points == expect.points);
}

TEST_CASE("k-means segmenter") {
  PointCloud blobs;
  Rng rng(1);
  std::normal_distribution<double> n(0.0, 0.01);
  for (int i = 0; i < 60; ++i) blobs.points.emplace_back(1 + n(rng), n(rng), n(rng));
  for (int i = 0; i < 60; ++i) blobs.points.emplace_back(-1 + n(rng), n(rng), n(rng));
  const KMeansSegmenter seg(3);
  const auto parts = seg.segment(blobs, {{"right", 1}, {"left", 1}});
  REQUIRE(parts.size() == 2);
  // Sorted labels: "left" takes the cluster with the lower centroid x.
  const auto& left = parts[0].label == "left" ? parts[0] : parts[1];
  const auto& right = parts[0].label == "left" ? parts[1] : parts[0];
  CHECK(left.point_indices.size() == 60);
  CHECK(right.point_indices.size() == 60);
  for (int i : left.point_indices) CHECK(i >= 60);
  for (int i : right.point_indices) CHECK(i < 60);

  const auto whole = seg.segment(blobs, {{"all", 1}});
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].point_indices.size() == 120);

  // Levels are segmented independently.
  const auto multi = seg.segment(blobs, {{"a", 1}, {"b", 1}, {"c", 2}});
  CHECK(multi.size() == 3);
  for (const auto& s : multi) {
    if (s.scale_level == 2) CHECK(s.point_indices.size() == 120);
  }

  const PointCloud tiny({Point(0, 0, 0), Point(1, 1, 1)});
  CHECK_THROWS_AS(seg.segment(tiny, {{"a", 1}, {"b", 1}, {"c", 1}}), Error);
  CHECK(seg.segment(blobs, {{"right", 1}, {"left", 1}})[0].point_indices == parts[0].point_indices);
}

TEST_CASE("ground-truth segmenter and segment files") {
  const auto dir = fresh_dir("dextog_test_segments");
  PartSegment a{"lid", 2, {4, 1, 3}, false};
  PartSegment b{"body", 1, {0, 2}, false};
  save_segment(dir / "lid.json", a);
  save_segment(dir / "body.json", b);
  const auto loaded = load_segment(dir / "lid.json");
  CHECK(loaded.label == "lid");
  CHECK(loaded.scale_level == 2);
  CHECK(loaded.point_indices == a.point_indices);
  CHECK(segment_from_json(segment_to_json(b)).point_indices == b.point_indices);
  CHECK_THROWS_AS(segment_from_json(R"({"label": "x"})"), Error);

  const auto gt = GroundTruthSegmenter::from_directory(dir);
  const PointCloud cloud(std::vector<Point>(5, Point::Zero()));
  const auto out = gt.segment(cloud, {{"body", 1}, {"lid", 2}, {"handle", 1}});
  REQUIRE(out.size() == 3);
  CHECK(out[0].point_indices == b.point_indices);
  CHECK(out[1].point_indices == a.point_indices);
  CHECK(out[2].point_indices.empty());
  fs::remove_all(dir);
}

TEST_CASE("synthetic dataset contract") {
  const StubHandModel hand;
  const auto spec = two_part_spec();
  const auto ds = generate_synthetic_dataset(spec, 5, hand);
  REQUIRE(ds.objects.size() == 1);
  CHECK(ds.objects[0].segments.size() == 2);
  CHECK(ds.grasps.size() == 4);
  for (const auto& g : ds.grasps) {
    const auto& obj = ds.object(g.object);
    const int idx = contact_argmax(obj.cloud, obj.segments, hand.surface(g.grasp), spec.contact_threshold,
                                   spec.min_part_points);
    REQUIRE(idx >= 0);
    CHECK(obj.segments[static_cast<std::size_t>(idx)].label == g.part);
  }

  const auto d1 = fresh_dir("dextog_test_synth1");
  const auto d2 = fresh_dir("dextog_test_synth2");
  write_dataset(ds, d1);
  write_dataset(generate_synthetic_dataset(spec, 5, hand), d2);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(d1)) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(read_file(e.path()) == read_file(d2 / fs::relative(e.path(), d1)));
  }
  CHECK(files == 5);  // dataset.json, grasps.json, one cloud, two segment files

  const auto back = load_dataset(d1);
  REQUIRE(back.grasps.size() == 4);
  CHECK(back.grasps[2].grasp.values().isApprox(ds.grasps[2].grasp.values(), 1e-15));
  CHECK(back.objects[0].segments[1].point_indices == ds.objects[0].segments[1].point_indices);
  fs::remove_all(d1);
  fs::remove_all(d2);

  auto tiny = spec;
  tiny.points_per_part = 10;
  CHECK_THROWS_AS(generate_synthetic_dataset(tiny, 5, hand), Error);
}

TEST_CASE("training pairs follow the contact argmax") {
  const StubHandModel hand;
  const auto ds = generate_synthetic_dataset(two_part_spec(), 9, hand);
  auto config = testing::small_config();
  const auto model = Model::create(config);
  const TextEncoders enc(config.language_aggregation);
  StubProvider provider(ds.provider_options());
  const auto pairs = build_training_pairs(ds, model, enc, provider, hand);
  CHECK(pairs.samples.size() == 4);
  CHECK(pairs.dropped == 0);
  for (std::size_t i = 0; i < pairs.samples.size(); ++i) {
    CHECK(pairs.part_label[i] == ds.grasps[pairs.grasp_index[i]].part);
    CHECK(pairs.samples[i].conditions.size() == 2);
    CHECK(pairs.samples[i].conditions[0].size() == config.condition_dim());
  }

  // A grasp far from the object is dropped; one enclosing a single part is paired with it.
  auto moved = ds;
  Vec far = moved.grasps[0].grasp.values();
  far.segment<3>(GraspParams::kTranslationOffset) += Eigen::Vector3d(5, 5, 5);
  moved.grasps[0].grasp = GraspParams(far);
  const auto parts = assign_grasp_parts(moved.objects, moved.grasps, hand, 0.005, 32);
  CHECK(parts[0] == -1);
  const auto dropped = build_training_pairs(moved, model, enc, provider, hand);
  CHECK(dropped.dropped == 1);
  CHECK(dropped.samples.size() == 3);

  auto empty = ds;
  empty.grasps.clear();
  CHECK(build_training_pairs(empty, model, enc, provider, hand).samples.empty());
}

TEST_CASE("contact argmax breaks ties by lowest index") {
  const PointCloud object({Point(0, 0, 0), Point(1, 0, 0)});
  const std::vector<PartSegment> segs{{"a", 1, {0}, false}, {"b", 1, {1}, false}};
  const PointCloud hand({Point(0, 0, 0), Point(1, 0, 0)});
  CHECK(contact_argmax(object, segs, hand, 0.1, 1) == 0);
  const PointCloud only_b({Point(1, 0, 0)});
  CHECK(contact_argmax(object, segs, only_b, 0.1, 1) == 1);
  CHECK(contact_argmax(object, segs, PointCloud({Point(9, 9, 9)}), 0.1, 1) == -1);
}

TEST_CASE("pipeline run structure and determinism") {
  Fixture f;
  const Pipeline pipe(f.model, f.components());
  const auto r = pipe.run(f.request(7));
  REQUIRE(r.candidates.size() == 2);
  double best = -1;
  for (const auto& c : r.candidates) best = std::max(best, c.score);
  CHECK(r.selected.score == best);
  CHECK(r.candidates[0].part.label == "end a");
  CHECK(r.candidates[1].part.label == "end b");
  CHECK(r.descriptions.part_texts.size() == 2);
  CHECK(!r.descriptions.category_text.empty());

  std::vector<std::string> stages;
  for (const auto& t : r.timings) stages.push_back(t.stage);
  CHECK(stages == std::vector<std::string>{"descriptions", "labels", "segmentation", "filtering", "sampling",
                                           "selection"});

  const auto json = to_record(r).to_json();
  CHECK(to_record(pipe.run(f.request(7))).to_json() == json);
  CHECK(to_record(pipe.run(f.request(8))).to_json() != json);
  const auto parsed = ResultRecord::from_json(json);
  CHECK(parsed == to_record(r));
  CHECK(parsed.to_json() == json);
  CHECK(parsed.selected.grasp.size() == 61);
  CHECK(parsed.config_hash == f.config.hash());
}

TEST_CASE("part label order does not change the outcome") {
  Fixture ab({{"end a", 1}, {"end b", 1}});
  Fixture ba({{"end b", 1}, {"end a", 1}});
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r1 = Pipeline(ab.model, ab.components()).run(ab.request(seed));
    const auto r2 = Pipeline(ba.model, ba.components()).run(ba.request(seed));
    CHECK(r1.selected.part.label == r2.selected.part.label);
    CHECK(r1.selected.score == r2.selected.score);
    CHECK(r1.selected.grasp == r2.selected.grasp);
  }
}

TEST_CASE("pipeline error paths") {
  Fixture f;
  auto cfg = f.config;
  cfg.pipeline.min_part_points = 10000;
  const auto big = Model::create(cfg);
  try {
    Pipeline(big, f.components()).run(f.request(1));
    FAIL("expected no valid parts");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoValidParts);
    CHECK(std::string(e.what()).find("filtering") != std::string::npos);
  }

  // A segmenter that returns an out-of-range index fails in the segmentation stage.
  GroundTruthSegmenter broken({{"end a", 1, {0, 99999}, false}});
  auto comps = f.components();
  comps.segmenter = &broken;
  try {
    Pipeline(f.model, comps).run(f.request(1));
    FAIL("expected index error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Index);
    CHECK(std::string(e.what()).find("segmentation") != std::string::npos);
  }

  auto bad = f.request(1);
  bad.category.clear();
  CHECK_THROWS_AS(Pipeline(f.model, f.components()).run(bad), Error);
  bad = f.request(1);
  bad.object_cloud = PointCloud();
  CHECK_THROWS_AS(Pipeline(f.model, f.components()).run(bad), Error);
}

TEST_CASE("samples per part multiplies candidates") {
  Fixture f;
  auto cfg = f.config;
  cfg.pipeline.samples_per_part = 3;
  const auto model = Model::create(cfg);
  const auto r = Pipeline(model, f.components()).run(f.request(4));
  CHECK(r.candidates.size() == 6);
  std::set<std::vector<double>> distinct;
  for (const auto& c : r.candidates) distinct.insert({c.grasp.values().begin(), c.grasp.values().end()});
  CHECK(distinct.size() == 6);
}
