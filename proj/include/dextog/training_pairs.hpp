#pragma once

#include <string>
#include <vector>

#include "dextog/denoiser.hpp"
#include "dextog/pipeline.hpp"
#include "dextog/synth.hpp"

namespace dextog {

/// For each grasp, the index of the valid segment of its object with the
/// highest contact score against the grasp's hand surface (lowest index on
/// ties), or -1 when no valid segment is touched.
std::vector<int> assign_grasp_parts(const std::vector<SynthObject>& objects, const std::vector<GraspRecord>& grasps,
                                    const HandModel& hand, double lambda, int min_part_points);

struct TrainingPairs {
  std::vector<TrainingSample> samples;
  std::vector<std::size_t> grasp_index;   // source grasp of each sample
  std::vector<std::string> part_label;    // assigned part of each sample
  int dropped = 0;
};

/// Pairs every grasp with its contact-argmax part and builds
/// `training.description_variants` condition vectors per pair, each from an
/// independently sampled category and part description.
TrainingPairs build_training_pairs(const SyntheticDataset& dataset, const Model& model, const TextEncoders& encoders,
                                   DescriptionProvider& provider, const HandModel& hand,
                                   DescriptionCache* cache = nullptr);

}  // namespace dextog
