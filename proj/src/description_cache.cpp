#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "dextog/language.hpp"

namespace dextog {

namespace {

nlohmann::json to_json(const CacheEntry& e) {
  return {{"prompt_hash", e.prompt_hash}, {"provider", e.provider}, {"seed", e.seed},
          {"k", e.k},                     {"chosen_index", e.chosen_index}, {"texts", e.texts}};
}

CacheEntry from_json(const nlohmann::json& j) {
  CacheEntry e;
  e.prompt_hash = j.at("prompt_hash").get<std::string>();
  e.provider = j.at("provider").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.k = j.at("k").get<int>();
  e.chosen_index = j.at("chosen_index").get<int>();
  e.texts = j.at("texts").get<std::vector<std::string>>();
  if (e.chosen_index < 0 || e.chosen_index >= static_cast<int>(e.texts.size())) {
    throw Error(Errc::Parse, "cache entry chosen_index out of range");
  }
  return e;
}

}  // namespace

DescriptionCache::DescriptionCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string DescriptionCache::key(std::string_view prompt, std::string_view provider, std::uint64_t seed) {
  std::string buf(prompt);
  buf += '\x1f';
  buf += provider;
  buf += '\x1f';
  buf += std::to_string(seed);
  return sha256_hex(buf);
}

std::optional<CacheEntry> DescriptionCache::get(const std::string& key) const {
  const auto path = dir_ / (key + ".json");
  std::lock_guard lock(mu_);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable cache entry {}: {}", path.string(), e.what());
    return std::nullopt;
  }
}

void DescriptionCache::put(const std::string& key, const CacheEntry& entry) {
  const auto path = dir_ / (key + ".json");
  std::ostringstream tid;
  tid << std::this_thread::get_id();
  const auto tmp = dir_ / (key + ".json.tmp." + tid.str());
  std::lock_guard lock(mu_);
  {
    std::ofstream out(tmp);
    if (!out) throw Error(Errc::Io, "cannot write cache entry " + tmp.string());
    out << to_json(entry).dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace dextog
