#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dextog/common.hpp"

namespace dextog {

/// Per-token features, padded to the encoder's max length. Rows whose mask
/// entry is false are padding and are exactly zero.
struct TokenFeatures {
  Mat matrix;               // max_len x dim
  std::vector<bool> mask;   // max_len

  Eigen::Index rows() const { return matrix.rows(); }
  Eigen::Index dim() const { return matrix.cols(); }
  int token_count() const;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual int max_len() const = 0;
  /// Encodes already-validated text. Called through encode_text().
  virtual TokenFeatures encode(std::string_view text) const = 0;
};

/// Lowercased alphanumeric runs; every other non-space character is its own token.
std::vector<std::string> tokenize(std::string_view text);

/// Test-only encoder: each token maps to a fixed pseudo-random vector derived
/// from a seeded hash of the token. Carries no semantics.
class HashTextEncoder : public TextEncoder {
 public:
  explicit HashTextEncoder(std::uint64_t seed = 0, int dim = 768, int max_len = 200);

  std::string id() const override;
  int dim() const override { return dim_; }
  int max_len() const override { return max_len_; }
  TokenFeatures encode(std::string_view text) const override;

 private:
  std::uint64_t seed_;
  int dim_;
  int max_len_;
};

/// Throws Errc::Precondition when the text yields no tokens.
TokenFeatures encode_text(const TextEncoder& encoder, std::string_view text);

}  // namespace dextog
