#include "dextog/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

namespace dextog {

using nlohmann::json;

void TaskRequest::validate() const {
  if (category.empty() || task.empty()) throw Error(Errc::Precondition, "category and task must be non-empty");
  if (object_cloud.empty()) throw Error(Errc::Precondition, "object cloud is empty");
  object_cloud.validate();
}

Vec make_condition(const Model& model, const TextEncoder& category_encoder, const TextEncoder& part_encoder,
                   const GeoFeature& object_feature, const GeoFeature& part_feature,
                   const std::string& category_text, const std::string& part_text) {
  const auto cat_tokens = encode_text(category_encoder, category_text);
  const auto part_tokens = encode_text(part_encoder, part_text);
  return model.conditioning.condition(object_feature, part_feature, cat_tokens, part_tokens).vector;
}

std::uint64_t category_description_seed(std::uint64_t seed) { return derive_seed(seed, "category"); }

std::uint64_t part_description_seed(std::uint64_t seed, const std::string& label) {
  return derive_seed(seed, "part:" + label);
}

std::uint64_t grasp_seed(std::uint64_t seed, const std::string& label, int sample_index) {
  return derive_seed(seed, "grasp:" + label + "#" + std::to_string(sample_index));
}

Pipeline::Pipeline(const Model& model, PipelineComponents components) : model_(model), c_(components) {
  if (!c_.provider || !c_.category_encoder || !c_.part_encoder || !c_.segmenter || !c_.hand) {
    throw Error(Errc::Config, "pipeline components are incomplete");
  }
  if (!model_.denoiser) throw Error(Errc::Config, "model has no denoiser");
}

namespace {

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& out) : out_(out) {}

  template <typename F>
  auto run(const std::string& stage, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    auto finish = [&] {
      out_.push_back({stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
    };
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        finish();
      } else {
        auto r = body();
        finish();
        return r;
      }
    } catch (const Error& e) {
      throw Error(e.code(), stage + " stage: " + e.what());
    }
  }

 private:
  std::vector<StageTiming>& out_;
};

struct PartOutcome {
  std::string text;
  std::vector<GraspCandidate> candidates;
};

}  // namespace

GraspResult Pipeline::run(const TaskRequest& request) const {
  request.validate();
  const auto& cfg = model_.config.pipeline;
  GraspResult result;
  result.request = request;
  result.config_hash = model_.config.hash();
  result.descriptions.provider = c_.provider->id();
  result.descriptions.seed = request.seed;
  StageClock clock(result.timings);
  GenerationOptions gen;
  gen.k = cfg.num_descriptions;

  clock.run("descriptions", [&] {
    const auto req = PromptRequest::make(PromptKind::CategoryTask, request.category, request.task);
    result.descriptions.category_text =
        sample_descriptions(*c_.provider, req, category_description_seed(request.seed), gen, c_.cache).chosen();
  });

  clock.run("labels", [&] {
    result.descriptions.part_labels = generate_part_labels(*c_.provider, request.category, c_.cache);
  });

  auto segments = clock.run("segmentation", [&] {
    auto s = c_.segmenter->segment(request.object_cloud, result.descriptions.part_labels);
    for (const auto& seg : s) seg.validate(request.object_cloud.size());
    return s;
  });

  const auto valid = clock.run("filtering", [&] {
    auto v = filter_valid_parts(segments, cfg.min_part_points);
    if (v.empty()) throw Error(Errc::NoValidParts, "no segment has at least " + std::to_string(cfg.min_part_points) +
                                                       " points");
    return v;
  });

  clock.run("sampling", [&] {
    const auto object_feature = model_.conditioning.encode_object(request.object_cloud);
    const auto predictor = model_.denoiser->predictor();
    std::vector<std::future<PartOutcome>> jobs;
    for (const auto& part : valid) {
      jobs.push_back(std::async(std::launch::async, [&, part]() {
        PartOutcome out;
        const auto req = PromptRequest::make(PromptKind::PartDescription, request.category, std::nullopt, part.label);
        out.text = sample_descriptions(*c_.provider, req, part_description_seed(request.seed, part.label), gen,
                                       c_.cache).chosen();
        const auto part_cloud = request.object_cloud.subset(part.point_indices);
        const Vec cond = make_condition(model_, *c_.category_encoder, *c_.part_encoder, object_feature,
                                        model_.conditioning.encode_part(part_cloud),
                                        result.descriptions.category_text, out.text);
        for (int s = 0; s < cfg.samples_per_part; ++s) {
          GraspParams g(sample(predictor, cond, model_.schedule, grasp_seed(request.seed, part.label, s)));
          const double score = contact_score(part_cloud, c_.hand->surface(g), cfg.contact_threshold);
          out.candidates.push_back({part, std::move(g), score});
        }
        return out;
      }));
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      auto out = jobs[i].get();
      result.descriptions.part_texts[valid[i].label] = std::move(out.text);
      for (auto& cand : out.candidates) result.candidates.push_back(std::move(cand));
    }
  });

  clock.run("selection", [&] {
    // Label order, not segmenter order, so candidate order cannot depend on label listing.
    std::stable_sort(result.candidates.begin(), result.candidates.end(),
                     [](const GraspCandidate& a, const GraspCandidate& b) { return a.part.label < b.part.label; });
    result.selected = select_best(result.candidates);
  });

  spdlog::debug("selected part '{}' with score {:.4f} from {} candidates", result.selected.part.label,
                result.selected.score, result.candidates.size());
  return result;
}

namespace {

json candidate_json(const CandidateRecord& c) {
  return {{"part_label", c.part_label}, {"score", c.score}, {"grasp", c.grasp}};
}

CandidateRecord candidate_from(const json& j) {
  CandidateRecord c;
  c.part_label = j.at("part_label").get<std::string>();
  c.score = j.at("score").get<double>();
  c.grasp = j.at("grasp").get<std::vector<double>>();
  if (c.grasp.size() != static_cast<std::size_t>(GraspParams::kDim)) {
    throw Error(Errc::Parse, "grasp must have 61 entries");
  }
  return c;
}

CandidateRecord record_of(const GraspCandidate& c) {
  const auto& v = c.grasp.values();
  return {c.part.label, c.score, std::vector<double>(v.data(), v.data() + v.size())};
}

}  // namespace

ResultRecord to_record(const GraspResult& result) {
  ResultRecord r;
  r.category = result.request.category;
  r.task = result.request.task;
  r.seed = result.request.seed;
  r.object = result.request.object;
  r.selected = record_of(result.selected);
  for (const auto& c : result.candidates) r.candidates.push_back(record_of(c));
  r.config_hash = result.config_hash;
  r.prompt_version = std::string(kPromptVersion);
  return r;
}

std::string ResultRecord::to_json() const {
  json cands = json::array();
  for (const auto& c : candidates) cands.push_back(candidate_json(c));
  const json j = {{"request", {{"category", category}, {"task", task}, {"seed", seed}, {"object", object}}},
                  {"selected", candidate_json(selected)},
                  {"candidates", std::move(cands)},
                  {"versions", {{"config_hash", config_hash}, {"prompt_version", prompt_version}}}};
  return j.dump(2) + "\n";
}

ResultRecord ResultRecord::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ResultRecord r;
    const auto& req = j.at("request");
    r.category = req.at("category").get<std::string>();
    r.task = req.at("task").get<std::string>();
    r.seed = req.at("seed").get<std::uint64_t>();
    r.object = req.value("object", std::string());
    r.selected = candidate_from(j.at("selected"));
    for (const auto& c : j.at("candidates")) r.candidates.push_back(candidate_from(c));
    r.config_hash = j.at("versions").at("config_hash").get<std::string>();
    r.prompt_version = j.at("versions").at("prompt_version").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::Parse, std::string("malformed result JSON: ") + e.what());
  }
}

ResultRecord ResultRecord::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void ResultRecord::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << to_json();
}

}  // namespace dextog
