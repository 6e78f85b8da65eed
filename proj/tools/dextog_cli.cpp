// Command-line front end: generate, train, synth, eval.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dextog/eval.hpp"
#include "dextog/pipeline.hpp"
#include "dextog/synth.hpp"
#include "dextog/tensor_archive.hpp"
#include "dextog/training_pairs.hpp"

namespace fs = std::filesystem;
using namespace dextog;

namespace {

Config load_config(const std::string& path) { return path.empty() ? Config{} : Config::load(path); }

Model load_or_create(const Config& cfg) {
  if (!cfg.pipeline.checkpoint.empty()) {
    auto m = Model::load(cfg.pipeline.checkpoint);
    if (m.config.model_hash() != cfg.model_hash()) {
      spdlog::warn("checkpoint model settings differ from --config; using the checkpoint's");
    }
    m.config.pipeline = cfg.pipeline;
    return m;
  }
  spdlog::warn("no checkpoint configured; sampling from untrained weights");
  return Model::create(cfg);
}

std::unique_ptr<DescriptionProvider> make_provider(const Config& cfg, StubProvider::Options stub = {}) {
  if (cfg.pipeline.provider == "http") return std::make_unique<HttpProvider>(HttpProvider::from_environment());
  return std::make_unique<StubProvider>(std::move(stub));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
}

int cmd_generate(const std::string& object, const std::string& category, const std::string& task,
                 std::uint64_t seed, const std::string& config_path, const std::string& out,
                 const std::string& segments_dir) {
  auto cfg = load_config(config_path);
  if (!segments_dir.empty()) cfg.pipeline.segments_dir = segments_dir;
  const auto model = load_or_create(cfg);
  auto provider = make_provider(cfg);
  const TextEncoders encoders(model.config.language_aggregation);
  std::unique_ptr<Segmenter> segmenter;
  if (!cfg.pipeline.segments_dir.empty()) {
    segmenter = std::make_unique<GroundTruthSegmenter>(GroundTruthSegmenter::from_directory(cfg.pipeline.segments_dir));
  } else {
    segmenter = std::make_unique<KMeansSegmenter>(seed);
  }
  const StubHandModel hand;
  std::unique_ptr<DescriptionCache> cache;
  if (!cfg.pipeline.cache_dir.empty()) cache = std::make_unique<DescriptionCache>(cfg.pipeline.cache_dir);

  const Pipeline pipeline(model, {provider.get(), &encoders.category, &encoders.part, segmenter.get(), &hand,
                                  cache.get()});
  TaskRequest req{load_xyz(object), category, task, seed, object};
  const auto result = pipeline.run(req);
  for (const auto& t : result.timings) spdlog::info("{:<13} {:.3f}s", t.stage, t.seconds);
  spdlog::info("selected '{}' (score {:.4f})", result.selected.part.label, result.selected.score);
  to_record(result).save(out);
  return 0;
}

int cmd_train(const std::string& dataset_dir, const std::string& config_path, const std::string& out) {
  const auto cfg = load_config(config_path);
  const auto dataset = load_dataset(dataset_dir);
  auto model = Model::create(cfg);
  auto provider = make_provider(cfg, dataset.provider_options());
  const TextEncoders encoders(cfg.language_aggregation);
  const StubHandModel hand;
  std::unique_ptr<DescriptionCache> cache;
  if (!cfg.pipeline.cache_dir.empty()) cache = std::make_unique<DescriptionCache>(cfg.pipeline.cache_dir);

  const auto pairs = build_training_pairs(dataset, model, encoders, *provider, hand, cache.get());
  spdlog::info("{} training pairs ({} dropped)", pairs.samples.size(), pairs.dropped);
  auto tc = cfg.train();
  tc.on_epoch = [](int epoch, double loss) {
    if (epoch % 50 == 0) spdlog::info("epoch {:>5}  loss {:.5f}", epoch, loss);
  };
  tc.on_checkpoint = [&](int epoch) {
    model.save(out);
    spdlog::info("checkpoint at epoch {} -> {}", epoch, out);
  };
  const auto report = train(*model.denoiser, pairs.samples, model.schedule, tc);
  model.save(out);
  spdlog::info("{} steps in {:.1f}s; final loss {:.5f}", report.steps, report.seconds,
               report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back());
  return 0;
}

int cmd_synth(const std::string& spec_path, std::uint64_t seed, const std::string& out) {
  const auto spec = SynthSpec::load(spec_path);
  const StubHandModel hand;
  const auto ds = generate_synthetic_dataset(spec, seed, hand);
  write_dataset(ds, out);
  spdlog::info("{} objects, {} grasps -> {}", ds.objects.size(), ds.grasps.size(), out);
  return 0;
}

std::vector<ResultRecord> load_results(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ResultRecord> out;
  for (const auto& f : files) out.push_back(ResultRecord::load(f));
  return out;
}

int cmd_eval(const std::string& results_dir, const std::string& report_path, const std::string& reference_dir,
             const std::string& csv_path, const std::string& config_path) {
  const auto cfg = load_config(config_path);
  const auto model = load_or_create(cfg);
  const StubHandModel hand;
  const auto results = load_results(results_dir);
  std::vector<ResultRecord> reference;
  if (!reference_dir.empty()) reference = load_results(reference_dir);
  const auto report = evaluate_results(results, reference_dir.empty() ? nullptr : &reference, model, hand,
                                       fs::current_path());
  write_text(report_path, report.to_json());
  if (!csv_path.empty()) write_text(csv_path, report.to_csv());
  spdlog::info("evaluated {} results -> {}", report.sample_count, report_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Part-aware task-oriented dexterous grasp generation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string object, category, task, config, out, segments;
  std::uint64_t seed = 0;
  auto* gen = app.add_subcommand("generate", "Generate a grasp for an object and task");
  gen->add_option("--object", object, "Object point cloud (.xyz)")->required();
  gen->add_option("--category", category, "Object category")->required();
  gen->add_option("--task", task, "Manipulation task")->required();
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--config", config, "Config JSON");
  gen->add_option("--out", out, "Result JSON path")->required();
  gen->add_option("--segments", segments, "Directory of ground-truth segment files");

  std::string dataset;
  auto* tr = app.add_subcommand("train", "Train the denoiser on a synthetic dataset");
  tr->add_option("--dataset", dataset, "Dataset directory")->required();
  tr->add_option("--config", config, "Config JSON");
  tr->add_option("--out", out, "Checkpoint path")->required();

  std::string spec;
  auto* sy = app.add_subcommand("synth", "Write a synthetic dataset");
  sy->add_option("--spec", spec, "Dataset spec JSON")->required();
  sy->add_option("--seed", seed, "Random seed");
  sy->add_option("--out", out, "Output directory")->required();

  std::string results, report, reference, csv;
  auto* ev = app.add_subcommand("eval", "Compute metrics over result files");
  ev->add_option("--results", results, "Directory of result JSON files")->required();
  ev->add_option("--report", report, "Report JSON path")->required();
  ev->add_option("--reference", reference, "Reference result directory for the feature distance");
  ev->add_option("--csv", csv, "Optional CSV table");
  ev->add_option("--config", config, "Config JSON");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  try {
    if (*gen) return cmd_generate(object, category, task, seed, config, out, segments);
    if (*tr) return cmd_train(dataset, config, out);
    if (*sy) return cmd_synth(spec, seed, out);
    if (*ev) return cmd_eval(results, report, reference, csv, config);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
