#include "dextog/language.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

namespace dextog {

const char* to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::CategoryTask: return "category_task";
    case PromptKind::PartLabels: return "part_labels";
    case PromptKind::PartDescription: return "part_description";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Prompt templates (prompts-v1)

namespace {

std::string require_nonempty(const std::optional<std::string>& value, const char* what) {
  if (!value || value->empty()) throw Error(Errc::Template, std::string("missing required argument: ") + what);
  return *value;
}

}  // namespace

std::string render_prompt(PromptKind kind, std::string_view category, const std::optional<std::string>& task,
                          const std::optional<std::string>& part_label) {
  if (category.empty()) throw Error(Errc::Template, "missing required argument: category");
  const std::string cat(category);
  std::ostringstream out;
  switch (kind) {
    case PromptKind::CategoryTask: {
      const std::string t = require_nonempty(task, "task");
      out << "You are an expert in human hand-object interaction.\n"
          << "Object category: \"" << cat << "\". Manipulation task: \"" << t << "\".\n"
          << "Describe how a human hand should grasp a typical " << cat << " to complete the task \"" << t
          << "\". Name the part of the object to interact with, describe the geometric and shape "
             "characteristics of that part, and explain the role the part plays in completing the task.\n"
          << "Answer in one paragraph.";
      break;
    }
    case PromptKind::PartLabels: {
      out << "You are an expert in object part analysis for robotic grasping.\n"
          << "Object category: \"" << cat << "\".\n"
          << "List the parts of a typical " << cat << " following these rules:\n"
          << "1) Visibility: only list parts that are visible from the outside.\n"
          << "2) Functionality: prioritize parts that are typically involved in hand-object interaction.\n"
          << "3) Generality: prefer common part names such as head, body, handle.\n"
          << "4) Multi-scale: give parts at two segmentation scales, scale 1 for coarse parts and scale 2 "
             "for finer parts.\n"
          << "Answer only with JSON of the form {\"scale_1\": [...], \"scale_2\": [...]}.";
      break;
    }
    case PromptKind::PartDescription: {
      if (task) throw Error(Errc::Contract, "part description prompts must not take a task");
      const std::string part = require_nonempty(part_label, "part_label");
      out << "You are an expert in human hand-object interaction.\n"
          << "Object category: \"" << cat << "\". Part: \"" << part << "\".\n"
          << "Describe the geometry and shape of the " << part << " of a " << cat
          << ", and explain the functionality of this part with respect to its geometry in hand-object "
             "interaction.\n"
          << "Answer in one paragraph.";
      break;
    }
  }
  return out.str();
}

PromptRequest PromptRequest::make(PromptKind kind, std::string category, std::optional<std::string> task,
                                  std::optional<std::string> part_label) {
  PromptRequest r;
  r.kind = kind;
  r.text = render_prompt(kind, category, task, part_label);
  r.category = std::move(category);
  r.task = std::move(task);
  r.part_label = std::move(part_label);
  return r;
}

// ---------------------------------------------------------------------------
// Part-label answers

std::string format_part_labels(const std::vector<PartLabel>& labels) {
  nlohmann::json j;
  for (int s = 1; s <= kNumScales; ++s) j["scale_" + std::to_string(s)] = nlohmann::json::array();
  for (const auto& l : labels) j["scale_" + std::to_string(l.scale_level)].push_back(l.label);
  return j.dump();
}

namespace {

std::string normalize_label(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  const auto last = s.find_last_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  s = s.substr(first, last - first + 1);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

std::vector<PartLabel> parse_part_labels(const std::string& raw) {
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw Error(Errc::Parse, "no JSON object in part-label answer: " + raw);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.substr(open, close - open + 1));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Parse, std::string(e.what()) + "; raw answer: " + raw);
  }
  if (!j.is_object() || j.size() != static_cast<std::size_t>(kNumScales)) {
    throw Error(Errc::Parse, "expected exactly 2 scales; raw answer: " + raw);
  }

  std::vector<PartLabel> out;
  std::set<std::string> seen;
  for (int s = 1; s <= kNumScales; ++s) {
    const auto it = j.find("scale_" + std::to_string(s));
    if (it == j.end() || !it->is_array()) {
      throw Error(Errc::Parse, "missing list scale_" + std::to_string(s) + "; raw answer: " + raw);
    }
    for (const auto& item : *it) {
      if (!item.is_string()) throw Error(Errc::Parse, "non-string label; raw answer: " + raw);
      std::string label = normalize_label(item.get<std::string>());
      if (label.empty()) continue;
      // Scales are visited in increasing order, so the first sighting is the lowest scale.
      if (seen.insert(label).second) out.push_back(PartLabel{label, s});
    }
  }
  if (out.empty()) throw Error(Errc::Parse, "answer lists no parts; raw answer: " + raw);
  return out;
}

// ---------------------------------------------------------------------------
// Stub provider

namespace {

using Labels = std::vector<PartLabel>;

Labels two_scale(std::initializer_list<const char*> coarse, std::initializer_list<const char*> fine) {
  Labels out;
  for (const char* l : coarse) out.push_back({l, 1});
  for (const char* l : fine) out.push_back({l, 2});
  return out;
}

const std::map<std::string, Labels>& canned_part_labels() {
  static const std::map<std::string, Labels> table = {
      {"bottle", two_scale({"body", "lid"}, {"neck", "rim"})},
      {"bowl", two_scale({"body", "bottom"}, {"rim", "surface"})},
      {"camera", two_scale({"body", "lens", "display"}, {"buttons", "surface", "lens_body", "glass"})},
      {"cup", two_scale({"body", "base"}, {"rim", "surface"})},
      {"cylinder_bottle", two_scale({"body", "head", "cap"}, {"neck", "surface"})},
      {"headphones", two_scale({"body", "band", "cable"}, {"cap", "mic"})},
      {"knife", two_scale({"blade", "handle"}, {"edge", "spine", "tip", "grip", "butt"})},
      {"lotion_pump", two_scale({"head", "body"}, {"nozzle", "neck", "container surface"})},
      {"mug", two_scale({"body", "handle"}, {"rim", "side surface", "base"})},
      {"pen", two_scale({"body", "head", "clip"}, {"barrel", "grip", "nib", "sleeve", "end plug"})},
      {"pincer", two_scale({"handle", "jaws"}, {"pivot", "hinge", "tip", "blade"})},
      {"power_drill", two_scale({"body", "handle", "chuck"}, {"trigger", "switch", "chuck key"})},
      {"scissors",
       two_scale({"blade", "handle"}, {"blade edge", "blade surface", "finger loop", "handle grip", "pivot screw"})},
      {"squeezable", two_scale({"body", "head"}, {"body surface", "neck", "spout", "grip_section"})},
      {"trigger_sprayer", two_scale({"head", "body"}, {"nozzle", "container surface", "neck"})},
      {"wrench", two_scale({"handle", "jaw"}, {"slider", "movable jaw", "fixed jaw", "adjustment screw"})},
  };
  return table;
}

// Canned category-level answers keyed by (category, task).
const std::map<std::pair<std::string, std::string>, std::string>& canned_category_texts() {
  static const std::map<std::pair<std::string, std::string>, std::string> table = {
      {{"bottle", "hold"},
       "Hold the bottle around its body. The body is a long cylinder with a steady diameter that fits "
       "inside a closed palm. Wrapping the fingers around it spreads the contact over a large area. This keeps "
       "the bottle upright and secure while it is carried."},
      {{"bottle", "liftup"},
       "Lift the bottle by the middle of its body. The body is round and smooth, so the thumb and fingers can "
       "close on opposite sides. Grasping near the center of mass balances the weight. This gives a controlled "
       "upward motion without tipping."},
      {{"bottle", "use"},
       "Use the bottle by turning its lid. The lid is a short cylinder at the top with a ridged rim. The "
       "fingertips pinch its sides while the other hand steadies the body. Twisting the lid opens or seals the "
       "bottle."},
      {{"bottle", "open"},
       "Open the bottle through its lid. The lid sits on the neck and is small enough for a fingertip pinch. "
       "Ridges on its side give friction for a twist. Rotating it releases the seal."},
      {{"mug", "hold"},
       "Hold the mug by its handle. The handle is a curved loop on the side of the body. The index and middle "
       "fingers pass through the loop while the thumb rests on top. This keeps the mug level and the hand away "
       "from the hot body."},
      {{"mug", "use"},
       "Use the mug by gripping its handle and tilting it toward the mouth. The handle loop gives a lever arm "
       "against the weight of the liquid. Fingers hook the loop and the thumb presses its top. This allows a "
       "smooth pouring motion."},
      {{"knife", "use"},
       "Use the knife by gripping its handle. The handle is an elongated, slightly flattened bar behind the "
       "blade. The fingers wrap it and the thumb presses its spine side. This transmits cutting force to the "
       "blade while keeping the fingers clear of the edge."},
      {{"knife", "handover"},
       "Hand over the knife by holding the spine of the blade. The spine is the blunt upper edge opposite the "
       "cutting edge. A pinch on the spine leaves the handle free for the receiver. This keeps the edge pointed "
       "away from both people."},
      {{"trigger_sprayer", "use"},
       "Use the trigger sprayer by pulling its trigger. The trigger is a curved lever under the nozzle. The "
       "index and middle fingers hook it while the palm supports the head. Squeezing it drives the pump and "
       "sprays the liquid."},
      {{"trigger_sprayer", "hold"},
       "Hold the trigger sprayer by its body below the head. The body is a tapered column that the palm can "
       "wrap. A full-hand grasp supports the weight of the filled container. This keeps the sprayer stable."},
  };
  return table;
}

// Canned part-level answers keyed by (category, part).
const std::map<std::pair<std::string, std::string>, std::string>& canned_part_texts() {
  static const std::map<std::pair<std::string, std::string>, std::string> table = {
      {{"bottle", "body"},
       "The body is the largest section of the bottle and holds its contents. It is a cylinder or a gently "
       "curved column with a nearly constant cross-section. Its surface offers the main area for a power grasp. "
       "Texture or contouring on it increases friction for the palm and fingers."},
      {{"bottle", "lid"},
       "The lid is a small disc or short cylinder that closes the opening. It matches the diameter of the neck "
       "and often has threads inside. Its ridged side is pinched by the fingertips. It is turned or pressed to "
       "open and close the bottle."},
      {{"bottle", "neck"},
       "The neck is the narrow column between the body and the opening. It tapers from the wide body to the "
       "small mouth. Its small diameter suits a precision grasp. It is a secondary grip point during pouring."},
      {{"bottle", "rim"},
       "The rim is the thin raised edge around the opening. It is a ring at the top of the neck. It guides the "
       "liquid when pouring and seals against the lid. Fingers rarely grasp it directly."},
      {{"mug", "handle"},
       "The handle is a curved loop attached to the side of the mug. Its opening admits one or more fingers. "
       "It acts as a lever for lifting and tilting. It keeps the hand away from the heated body."},
      {{"mug", "body"},
       "The body is an open cylinder that holds the drink. Its wall is smooth and of constant radius. A palm "
       "can wrap around it when the contents are cool. It is the main volume of the mug."},
      {{"knife", "handle"},
       "The handle is an elongated grip behind the blade. Its cross-section is oval or rounded for the palm. "
       "It is wrapped by the fingers in a power grasp. It transfers force from the hand to the blade."},
      {{"knife", "blade"},
       "The blade is a thin flat plate with a sharp edge. It narrows toward the tip. It does the cutting and "
       "is not meant to be grasped. Its blunt spine can be pinched for a safe handover."},
  };
  return table;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find(". ", start);
    if (end == std::string::npos) {
      out.push_back(text.substr(start));
      break;
    }
    out.push_back(text.substr(start, end - start + 1));
    start = end + 2;
  }
  return out;
}

std::string join_sentences(const std::vector<std::string>& sentences) {
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) out += ' ';
    out += sentences[i];
  }
  return out;
}

template <std::size_t N>
const char* pick(Rng& rng, const char* const (&options)[N]) {
  return options[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

std::string synthetic_category_text(const std::string& category, const std::string& task,
                                    const std::optional<std::string>& part, Rng& rng) {
  static const char* const shapes[] = {"rounded", "elongated", "compact", "cylindrical", "flattened"};
  static const char* const grips[] = {"a power grasp", "a precision pinch", "a wrap grasp", "a lateral pinch"};
  const std::string target = part.value_or(std::string("main ") + pick(rng, shapes) + " section");
  std::ostringstream out;
  out << "To " << task << " the " << category << ", interact with its " << target << ". ";
  out << "The " << target << " has a " << pick(rng, shapes) << " shape that suits " << pick(rng, grips) << ". ";
  out << "Contact on the " << target << " lets the hand control the " << category << " during the " << task
      << " motion. ";
  out << "This part is the most reliable place to apply force for the task.";
  return out.str();
}

std::string synthetic_part_text(const std::string& category, const std::string& part, Rng& rng) {
  static const char* const shapes[] = {"rounded", "elongated", "compact", "cylindrical", "flattened"};
  static const char* const roles[] = {"a primary grip area", "a secondary support point", "a fingertip contact",
                                      "a functional interface"};
  std::ostringstream out;
  out << "The " << part << " of the " << category << " is a " << pick(rng, shapes) << " region. ";
  out << "Its geometry makes it " << pick(rng, roles) << " in hand-object interaction. ";
  out << "The hand reaches the " << part << " with fingers aligned to its surface. ";
  out << "Its size determines how many fingers can touch it.";
  return out.str();
}

}  // namespace

std::optional<std::vector<PartLabel>> StubProvider::canned_labels(const std::string& category) const {
  if (auto it = options_.part_labels.find(category); it != options_.part_labels.end()) return it->second;
  const auto& table = canned_part_labels();
  if (auto it = table.find(category); it != table.end()) return it->second;
  return std::nullopt;
}

std::string StubProvider::base_text(const PromptRequest& request) const {
  const std::uint64_t key_seed =
      derive_seed(options_.seed, std::string(to_string(request.kind)) + '\x1f' + request.category + '\x1f' +
                                     request.task.value_or("") + '\x1f' + request.part_label.value_or(""));
  Rng rng(key_seed);
  switch (request.kind) {
    case PromptKind::PartLabels: {
      if (auto labels = canned_labels(request.category)) return format_part_labels(*labels);
      return format_part_labels({{"body", 1}, {"head", 1}, {"surface", 2}, {"base", 2}});
    }
    case PromptKind::CategoryTask: {
      const std::string task = request.task.value_or("");
      if (auto it = canned_category_texts().find({request.category, task}); it != canned_category_texts().end()) {
        return it->second;
      }
      std::optional<std::string> part;
      if (auto it = options_.task_parts.find({request.category, task}); it != options_.task_parts.end()) {
        part = it->second;
      }
      return synthetic_category_text(request.category, task, part, rng);
    }
    case PromptKind::PartDescription: {
      const std::string part = request.part_label.value_or("");
      if (auto it = canned_part_texts().find({request.category, part}); it != canned_part_texts().end()) {
        return it->second;
      }
      return synthetic_part_text(request.category, part, rng);
    }
  }
  return {};
}

std::vector<std::string> StubProvider::complete(const PromptRequest& request, int n) {
  if (n < 1) throw Error(Errc::Config, "completion count must be >= 1");
  ++calls_;
  const std::string base = base_text(request);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  if (request.kind == PromptKind::PartLabels) {
    out.assign(static_cast<std::size_t>(n), base);
    return out;
  }
  const auto sentences = split_sentences(base);
  for (int i = 0; i < n; ++i) {
    auto rotated = sentences;
    std::rotate(rotated.begin(), rotated.begin() + static_cast<long>(i % sentences.size()), rotated.end());
    out.push_back(join_sentences(rotated));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation

DescriptionSample sample_descriptions(DescriptionProvider& provider, const PromptRequest& request,
                                      std::uint64_t seed, const GenerationOptions& options,
                                      DescriptionCache* cache) {
  if (options.k < 1) throw Error(Errc::Config, "k must be >= 1");
  const std::string provider_id = provider.id();
  const std::string key = DescriptionCache::key(request.text, provider_id, seed);

  if (cache) {
    if (auto hit = cache->get(key); hit && hit->k == options.k &&
                                    hit->texts.size() == static_cast<std::size_t>(options.k)) {
      return DescriptionSample{hit->texts, hit->chosen_index, true};
    }
  }

  std::vector<std::string> texts;
  std::string last_error;
  int delay = options.backoff_ms;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    try {
      texts = provider.complete(request, options.k);
      if (texts.size() != static_cast<std::size_t>(options.k)) {
        throw Error(Errc::Provider, "expected " + std::to_string(options.k) + " completions, got " +
                                        std::to_string(texts.size()));
      }
      last_error.clear();
      break;
    } catch (const std::exception& e) {
      last_error = e.what();
      texts.clear();
      spdlog::warn("provider {} attempt {} failed: {}", provider_id, attempt + 1, last_error);
      if (attempt < options.retries && delay > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        delay *= 2;
      }
    }
  }
  if (!last_error.empty()) {
    throw Error(Errc::Provider, "provider " + provider_id + " failed after " + std::to_string(options.retries + 1) +
                                    " attempts: " + last_error);
  }

  Rng rng(seed);
  const int chosen = std::uniform_int_distribution<int>(0, options.k - 1)(rng);
  if (cache) {
    cache->put(key, CacheEntry{sha256_hex(request.text), provider_id, seed, options.k, chosen, texts});
  }
  return DescriptionSample{std::move(texts), chosen, false};
}

std::string generate_description(DescriptionProvider& provider, const PromptRequest& request, int k,
                                 std::uint64_t seed, DescriptionCache* cache) {
  GenerationOptions options;
  options.k = k;
  return sample_descriptions(provider, request, seed, options, cache).chosen();
}

std::vector<PartLabel> generate_part_labels(DescriptionProvider& provider, const std::string& category,
                                            DescriptionCache* cache) {
  if (category.empty()) throw Error(Errc::Precondition, "category must be non-empty");
  const auto request = PromptRequest::make(PromptKind::PartLabels, category);
  GenerationOptions options;
  options.k = 1;
  return parse_part_labels(sample_descriptions(provider, request, 0, options, cache).chosen());
}

}  // namespace dextog
