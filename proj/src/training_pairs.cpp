#include "dextog/training_pairs.hpp"

#include <map>

#include <spdlog/spdlog.h>

namespace dextog {

std::vector<int> assign_grasp_parts(const std::vector<SynthObject>& objects, const std::vector<GraspRecord>& grasps,
                                    const HandModel& hand, double lambda, int min_part_points) {
  std::map<std::string, const SynthObject*> by_id;
  for (const auto& o : objects) by_id[o.id] = &o;
  std::vector<int> out;
  out.reserve(grasps.size());
  for (const auto& g : grasps) {
    auto it = by_id.find(g.object);
    if (it == by_id.end()) throw Error(Errc::Precondition, "grasp refers to unknown object '" + g.object + "'");
    const auto& obj = *it->second;
    out.push_back(contact_argmax(obj.cloud, obj.segments, hand.surface(g.grasp), lambda, min_part_points));
  }
  return out;
}

TrainingPairs build_training_pairs(const SyntheticDataset& dataset, const Model& model, const TextEncoders& encoders,
                                   DescriptionProvider& provider, const HandModel& hand, DescriptionCache* cache) {
  const auto& cfg = model.config;
  const auto assigned = assign_grasp_parts(dataset.objects, dataset.grasps, hand, cfg.pipeline.contact_threshold,
                                           cfg.pipeline.min_part_points);
  GenerationOptions gen;
  gen.k = cfg.pipeline.num_descriptions;
  const int variants = cfg.training.description_variants;
  const auto seed = cfg.training.seed;

  std::map<std::string, GeoFeature> object_features;
  std::map<std::pair<std::string, std::string>, GeoFeature> part_features;
  std::map<std::tuple<std::string, std::string, int>, std::string> category_texts;
  std::map<std::tuple<std::string, std::string, int>, std::string> part_texts;

  TrainingPairs out;
  for (std::size_t i = 0; i < dataset.grasps.size(); ++i) {
    const auto& g = dataset.grasps[i];
    if (assigned[i] < 0) {
      spdlog::warn("dropping grasp {} on {}: it touches no valid part", i, g.object);
      ++out.dropped;
      continue;
    }
    const auto& obj = dataset.object(g.object);
    const auto& seg = obj.segments[static_cast<std::size_t>(assigned[i])];

    auto oit = object_features.find(obj.id);
    if (oit == object_features.end()) {
      oit = object_features.emplace(obj.id, model.conditioning.encode_object(obj.cloud)).first;
    }
    const auto pkey = std::make_pair(obj.id, seg.label);
    auto pit = part_features.find(pkey);
    if (pit == part_features.end()) {
      pit = part_features.emplace(pkey, model.conditioning.encode_part(obj.cloud.subset(seg.point_indices))).first;
    }

    TrainingSample sample;
    sample.grasp = g.grasp.values();
    for (int v = 0; v < variants; ++v) {
      const auto vs = "#" + std::to_string(v);
      const auto ckey = std::make_tuple(g.category, g.task, v);
      auto cit = category_texts.find(ckey);
      if (cit == category_texts.end()) {
        const auto req = PromptRequest::make(PromptKind::CategoryTask, g.category, g.task);
        const auto s = derive_seed(seed, "category:" + g.category + "/" + g.task + vs);
        cit = category_texts.emplace(ckey, sample_descriptions(provider, req, s, gen, cache).chosen()).first;
      }
      const auto tkey = std::make_tuple(g.category, seg.label, v);
      auto tit = part_texts.find(tkey);
      if (tit == part_texts.end()) {
        const auto req = PromptRequest::make(PromptKind::PartDescription, g.category, std::nullopt, seg.label);
        const auto s = derive_seed(seed, "part:" + g.category + "/" + seg.label + vs);
        tit = part_texts.emplace(tkey, sample_descriptions(provider, req, s, gen, cache).chosen()).first;
      }
      sample.conditions.push_back(make_condition(model, encoders.category, encoders.part, oit->second, pit->second,
                                                 cit->second, tit->second));
    }
    out.samples.push_back(std::move(sample));
    out.grasp_index.push_back(i);
    out.part_label.push_back(seg.label);
  }
  return out;
}

}  // namespace dextog
