#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dextog/common.hpp"

namespace dextog {

/// The three prompts of the description pipeline.
enum class PromptKind { CategoryTask, PartLabels, PartDescription };

const char* to_string(PromptKind kind);

/// Bumped whenever template wording changes so cached live outputs stay attributable.
inline constexpr std::string_view kPromptVersion = "prompts-v1";

/// Number of segmentation scales requested from the part-label prompt.
inline constexpr int kNumScales = 2;

/// Expands one of the prompt templates.
///
/// CategoryTask requires `task`. PartDescription requires `part_label` and
/// rejects `task` with Errc::Contract, since part descriptions must stay
/// task-agnostic. PartLabels takes only the category.
std::string render_prompt(PromptKind kind, std::string_view category,
                          const std::optional<std::string>& task = std::nullopt,
                          const std::optional<std::string>& part_label = std::nullopt);

/// Rendered prompt plus the structured fields it was rendered from, so that
/// offline providers can answer by key instead of by parsing prose.
struct PromptRequest {
  PromptKind kind = PromptKind::CategoryTask;
  std::string category;
  std::optional<std::string> task;
  std::optional<std::string> part_label;
  std::string text;

  static PromptRequest make(PromptKind kind, std::string category,
                            std::optional<std::string> task = std::nullopt,
                            std::optional<std::string> part_label = std::nullopt);
};

class DescriptionProvider {
 public:
  virtual ~DescriptionProvider() = default;
  virtual std::string id() const = 0;
  /// Returns exactly `n` completions or throws.
  virtual std::vector<std::string> complete(const PromptRequest& request, int n) = 0;
};

struct PartLabel {
  std::string label;
  int scale_level = 1;

  bool operator==(const PartLabel&) const = default;
};

/// Offline provider. Ships canned responses keyed by (category, prompt kind);
/// unseen keys fall back to a seeded synthetic text generator. Completion i > 0
/// is a sentence rotation of completion 0, so k-sample selection has real variants.
class StubProvider : public DescriptionProvider {
 public:
  struct Options {
    // Extra part-label answers, e.g. for synthetic categories.
    std::map<std::string, std::vector<PartLabel>> part_labels;
    // (category, task) -> part the category-level text recommends.
    std::map<std::pair<std::string, std::string>, std::string> task_parts;
    std::uint64_t seed = 0;
  };

  StubProvider() = default;
  explicit StubProvider(Options options) : options_(std::move(options)) {}

  std::string id() const override { return "stub-v1"; }
  std::vector<std::string> complete(const PromptRequest& request, int n) override;

  int call_count() const { return calls_.load(); }

  /// Labels the stub would answer for `category`, if it has canned ones.
  std::optional<std::vector<PartLabel>> canned_labels(const std::string& category) const;

 private:
  std::string base_text(const PromptRequest& request) const;

  Options options_;
  std::atomic<int> calls_{0};
};

/// Renders part labels the way a well-behaved provider answers the PartLabels prompt.
std::string format_part_labels(const std::vector<PartLabel>& labels);

/// Parses a PartLabels answer: a JSON object with exactly the keys
/// "scale_1" and "scale_2", each a list of strings. Surrounding prose or code
/// fences are tolerated. Labels are trimmed and lowercased; a label repeated
/// across scales keeps its lowest scale.
std::vector<PartLabel> parse_part_labels(const std::string& raw);

struct CacheEntry {
  std::string prompt_hash;
  std::string provider;
  std::uint64_t seed = 0;
  int k = 0;
  int chosen_index = 0;
  std::vector<std::string> texts;

  bool operator==(const CacheEntry&) const = default;
};

/// One JSON file per entry; filename is the hex digest of (prompt, provider, seed).
/// Safe for concurrent use within a process; writes are atomic renames.
class DescriptionCache {
 public:
  explicit DescriptionCache(std::filesystem::path dir);

  static std::string key(std::string_view prompt, std::string_view provider, std::uint64_t seed);

  std::optional<CacheEntry> get(const std::string& key) const;
  void put(const std::string& key, const CacheEntry& entry);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

struct GenerationOptions {
  int k = 10;
  int retries = 3;
  // First backoff delay; doubles per retry. Zero disables sleeping.
  int backoff_ms = 0;
};

struct DescriptionSample {
  std::vector<std::string> texts;
  int chosen_index = 0;
  bool from_cache = false;

  const std::string& chosen() const { return texts.at(static_cast<std::size_t>(chosen_index)); }
};

/// Requests k completions and picks one uniformly with a seeded RNG.
DescriptionSample sample_descriptions(DescriptionProvider& provider, const PromptRequest& request,
                                      std::uint64_t seed, const GenerationOptions& options = {},
                                      DescriptionCache* cache = nullptr);

std::string generate_description(DescriptionProvider& provider, const PromptRequest& request, int k,
                                 std::uint64_t seed, DescriptionCache* cache = nullptr);

std::vector<PartLabel> generate_part_labels(DescriptionProvider& provider, const std::string& category,
                                            DescriptionCache* cache = nullptr);

/// All language outputs for one (category, task) request.
struct DescriptionBundle {
  std::string category_text;
  std::map<std::string, std::string> part_texts;
  std::vector<PartLabel> part_labels;
  std::string provider;
  std::uint64_t seed = 0;

  bool operator==(const DescriptionBundle&) const = default;
};

/// HTTP client for a completion service. POSTs {"prompt", "n"} as JSON and
/// expects {"texts": [...]} back.
class HttpProvider : public DescriptionProvider {
 public:
  struct Options {
    std::string endpoint;  // http[s]://host[:port]/path
    std::string api_key;
    int timeout_seconds = 60;
  };

  explicit HttpProvider(Options options);
  /// Reads LLM_ENDPOINT and LLM_API_KEY; throws Errc::Config when the endpoint is unset.
  static HttpProvider from_environment(int timeout_seconds = 60);

  std::string id() const override;
  std::vector<std::string> complete(const PromptRequest& request, int n) override;

 private:
  Options options_;
};

}  // namespace dextog
