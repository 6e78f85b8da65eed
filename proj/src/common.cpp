#include "dextog/common.hpp"

#include <array>
#include <cstdio>

#include <openssl/evp.h>

namespace dextog {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::Precondition: return "precondition violation";
    case Errc::Config: return "configuration error";
    case Errc::Shape: return "shape error";
    case Errc::Index: return "index error";
    case Errc::Size: return "size error";
    case Errc::Template: return "template error";
    case Errc::Contract: return "contract violation";
    case Errc::Parse: return "parse error";
    case Errc::Provider: return "provider error";
    case Errc::Attention: return "attention error";
    case Errc::NoValidParts: return "no valid parts";
    case Errc::NumericalDivergence: return "numerical divergence";
    case Errc::Numerical: return "numerical error";
    case Errc::Geometry: return "geometry error";
    case Errc::Generation: return "generation error";
    case Errc::InsufficientData: return "insufficient data";
    case Errc::Io: return "io error";
  }
  return "error";
}

namespace {

std::array<unsigned char, 32> sha256(std::string_view data) {
  std::array<unsigned char, 32> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != digest.size()) {
    throw Error(Errc::Numerical, "SHA-256 digest failed");
  }
  return digest;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  const auto digest = sha256(data);
  std::string out;
  out.reserve(64);
  char buf[3];
  for (unsigned char byte : digest) {
    std::snprintf(buf, sizeof(buf), "%02x", byte);
    out += buf;
  }
  return out;
}

std::uint64_t stable_hash64(std::string_view data) {
  const auto digest = sha256(data);
  std::uint64_t h = 0;
  for (int i = 0; i < 8; ++i) h = (h << 8) | digest[i];
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
  std::string buf = std::to_string(master);
  buf += '\x1f';
  buf += key;
  return stable_hash64(buf);
}

Vec standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = dist(rng);
  return out;
}

}  // namespace dextog
