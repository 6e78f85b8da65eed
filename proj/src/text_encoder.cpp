#include "dextog/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace dextog {

int TokenFeatures::token_count() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), true));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      current += static_cast<char>(std::tolower(c));
    } else {
      flush();
      if (!std::isspace(c)) tokens.emplace_back(1, ch);
    }
  }
  flush();
  return tokens;
}

HashTextEncoder::HashTextEncoder(std::uint64_t seed, int dim, int max_len)
    : seed_(seed), dim_(dim), max_len_(max_len) {
  if (dim_ < 1 || max_len_ < 1) throw Error(Errc::Config, "encoder dim and max_len must be positive");
}

std::string HashTextEncoder::id() const {
  return "hash-encoder(seed=" + std::to_string(seed_) + ",dim=" + std::to_string(dim_) + ")";
}

TokenFeatures HashTextEncoder::encode(std::string_view text) const {
  const auto tokens = tokenize(text);
  TokenFeatures out;
  out.matrix = Mat::Zero(max_len_, dim_);
  out.mask.assign(static_cast<std::size_t>(max_len_), false);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  const auto n = std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(max_len_));
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed_, tokens[i]));
    out.matrix.row(static_cast<Eigen::Index>(i)) = standard_normal(rng, dim_).transpose() * scale;
    out.mask[i] = true;
  }
  return out;
}

TokenFeatures encode_text(const TextEncoder& encoder, std::string_view text) {
  if (tokenize(text).empty()) throw Error(Errc::Precondition, "text has no tokens");
  return encoder.encode(text);
}

}  // namespace dextog
