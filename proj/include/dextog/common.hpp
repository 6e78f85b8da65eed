#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace dextog {

enum class Errc {
  Precondition,
  Config,
  Shape,
  Index,
  Size,
  Template,
  Contract,
  Parse,
  Provider,
  Attention,
  NoValidParts,
  NumericalDivergence,
  Numerical,
  Geometry,
  Generation,
  InsufficientData,
  Io,
};

const char* to_string(Errc code);

/// Single exception type for the library; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

using Rng = std::mt19937_64;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// SHA-256 of the input, lowercase hex.
std::string sha256_hex(std::string_view data);

// First 8 bytes of SHA-256, big-endian. Stable across platforms and runs.
std::uint64_t stable_hash64(std::string_view data);

// Seed for an independent RNG stream keyed by (master seed, key).
std::uint64_t derive_seed(std::uint64_t master, std::string_view key);

// Vector of iid N(0,1) draws.
Vec standard_normal(Rng& rng, Eigen::Index n);

}  // namespace dextog
