#pragma once

#include <cstdint>
#include <vector>

#include "dextog/geometry.hpp"
#include "dextog/text_encoder.hpp"

namespace dextog {

/// Hierarchy of the point-cloud set-abstraction encoder.
struct SetAbstractionConfig {
  int num_layers = 4;
  std::vector<int> sampled_points{1024, 256, 64, 16};
  std::vector<int> embedding_sizes{64, 128, 256, 512};
  int group_size = 32;

  /// Throws Errc::Config on inconsistent lists or non-decreasing sample counts.
  void validate() const;
  int output_dim() const { return embedding_sizes.back(); }
};

/// Shared two-layer point map of one set-abstraction stage.
struct SetAbstractionLayer {
  Mat w1, b1, w2, b2;
};

struct EncoderWeights {
  std::vector<SetAbstractionLayer> layers;

  static EncoderWeights random(const SetAbstractionConfig& cfg, std::uint64_t seed);
  /// Throws Errc::Shape unless the weight shapes match `cfg`.
  void check(const SetAbstractionConfig& cfg) const;
};

struct GeoFeature {
  Vec vector;
};

/// Greedy farthest-point subsampling. Starts at `seed_index`; each next pick
/// maximizes the distance to the chosen set, lowest index on ties.
std::vector<int> farthest_point_sample(const PointCloud& pc, int m, int seed_index);

/// Lexicographically sorted, centered at the centroid, scaled to unit max radius.
/// The sort makes everything downstream independent of input point order.
PointCloud normalize_cloud(const PointCloud& pc);

/// Cycles through the cloud until it has `n` points; returns it unchanged if already large enough.
PointCloud upsample_by_repetition(const PointCloud& pc, std::size_t n);

/// Set-abstraction encoding of a normalized copy of `pc`.
/// Requires |pc| >= cfg.sampled_points[0]; callers upsample smaller clouds first.
GeoFeature encode_pointcloud(const PointCloud& pc, const SetAbstractionConfig& cfg, const EncoderWeights& weights);

/// Query/key/value projections from token width to attention width.
struct AttentionWeights {
  Mat wq, bq, wk, bk, wv, bv;

  static AttentionWeights random(int token_dim, int attn_dim, std::uint64_t seed);
  int token_dim() const { return static_cast<int>(wq.rows()); }
  int attn_dim() const { return static_cast<int>(wq.cols()); }
};

struct FusedFeature {
  Mat matrix;     // query tokens x attn_dim; zero on padded query rows
  Vec pooled;     // mean of matrix rows over the query mask
  Mat attention;  // query tokens x key tokens, row-stochastic over unmasked keys
};

/// Scaled dot-product attention with category tokens as queries and part
/// tokens as keys/values. Padded keys are excluded; throws Errc::Attention when
/// no key (or no query) token is valid.
FusedFeature cross_attention(const TokenFeatures& f_cat, const TokenFeatures& f_part, const AttentionWeights& weights);

/// [object geometry | part geometry | pooled language fusion].
struct ConditionVector {
  Vec vector;
  Eigen::Index geo_dim = 0;
  Eigen::Index attn_dim = 0;

  auto object_slice() const { return vector.segment(0, geo_dim); }
  auto part_slice() const { return vector.segment(geo_dim, geo_dim); }
  auto fused_slice() const { return vector.segment(2 * geo_dim, attn_dim); }
};

/// Concatenates the three features; throws Errc::Shape when widths disagree
/// with the expected geometry and attention widths.
ConditionVector build_condition(const GeoFeature& f_obj, const GeoFeature& f_part, const FusedFeature& f_fused,
                                Eigen::Index geo_dim = 512, Eigen::Index attn_dim = 128);

/// All frozen conditioning weights. Object and part encoders are separate.
struct ConditioningModel {
  SetAbstractionConfig sa;
  EncoderWeights object_encoder;
  EncoderWeights part_encoder;
  AttentionWeights attention;

  static ConditioningModel random(const SetAbstractionConfig& sa, int token_dim, int attn_dim, std::uint64_t seed);

  int condition_dim() const { return 2 * sa.output_dim() + attention.attn_dim(); }
  GeoFeature encode_object(const PointCloud& cloud) const;
  GeoFeature encode_part(const PointCloud& cloud) const;
  ConditionVector condition(const GeoFeature& object, const GeoFeature& part, const TokenFeatures& category_tokens,
                            const TokenFeatures& part_tokens) const;
};

}  // namespace dextog
