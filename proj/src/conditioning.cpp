#include "dextog/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dextog {

void SetAbstractionConfig::validate() const {
  if (num_layers < 1) throw Error(Errc::Config, "set abstraction needs at least one layer");
  if (static_cast<int>(sampled_points.size()) != num_layers ||
      static_cast<int>(embedding_sizes.size()) != num_layers) {
    throw Error(Errc::Config, "sampled_points and embedding_sizes must have num_layers entries");
  }
  for (int i = 0; i < num_layers; ++i) {
    if (sampled_points[i] < 1 || embedding_sizes[i] < 1) throw Error(Errc::Config, "sizes must be positive");
    if (i > 0 && sampled_points[i] >= sampled_points[i - 1]) {
      throw Error(Errc::Config, "sampled_points must be strictly decreasing");
    }
  }
  if (group_size < 1) throw Error(Errc::Config, "group_size must be positive");
}

namespace {

Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

EncoderWeights EncoderWeights::random(const SetAbstractionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  EncoderWeights w;
  int in = 3;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const int emb = cfg.embedding_sizes[l];
    // He-style scaling keeps ReLU activations from shrinking layer over layer.
    const double b1 = std::sqrt(6.0 / in);
    const double b2 = std::sqrt(6.0 / emb);
    w.layers.push_back(SetAbstractionLayer{uniform_matrix(in, emb, b1, rng), Mat::Zero(1, emb),
                                           uniform_matrix(emb, emb, b2, rng), Mat::Zero(1, emb)});
    in = 3 + emb;
  }
  return w;
}

void EncoderWeights::check(const SetAbstractionConfig& cfg) const {
  if (static_cast<int>(layers.size()) != cfg.num_layers) throw Error(Errc::Shape, "encoder layer count mismatch");
  int in = 3;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const int emb = cfg.embedding_sizes[l];
    const auto& L = layers[l];
    if (L.w1.rows() != in || L.w1.cols() != emb || L.b1.rows() != 1 || L.b1.cols() != emb ||
        L.w2.rows() != emb || L.w2.cols() != emb || L.b2.rows() != 1 || L.b2.cols() != emb) {
      throw Error(Errc::Shape, "encoder layer " + std::to_string(l) + " has wrong weight shapes");
    }
    in = 3 + emb;
  }
}

std::vector<int> farthest_point_sample(const PointCloud& pc, int m, int seed_index) {
  const int n = static_cast<int>(pc.size());
  if (m < 1) throw Error(Errc::Size, "farthest_point_sample needs m >= 1");
  if (m > n) throw Error(Errc::Size, "cannot sample " + std::to_string(m) + " of " + std::to_string(n) + " points");
  if (seed_index < 0 || seed_index >= n) throw Error(Errc::Index, "seed index out of range");

  std::vector<int> chosen{seed_index};
  chosen.reserve(static_cast<std::size_t>(m));
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  taken[static_cast<std::size_t>(seed_index)] = 1;
  std::vector<double> min_d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());

  int last = seed_index;
  while (static_cast<int>(chosen.size()) < m) {
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      auto& d = min_d2[static_cast<std::size_t>(i)];
      d = std::min(d, squared_distance(pc[static_cast<std::size_t>(i)], pc[static_cast<std::size_t>(last)]));
      if (!taken[static_cast<std::size_t>(i)] && d > best_d2) {
        best_d2 = d;
        best = i;
      }
    }
    taken[static_cast<std::size_t>(best)] = 1;
    chosen.push_back(best);
    last = best;
  }
  return chosen;
}

PointCloud normalize_cloud(const PointCloud& pc) {
  if (pc.empty()) throw Error(Errc::Precondition, "cannot normalize an empty cloud");
  PointCloud out = pc;
  std::sort(out.points.begin(), out.points.end(), [](const Point& a, const Point& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  });
  const Point c = out.centroid();
  double radius = 0.0;
  for (auto& p : out.points) {
    p -= c;
    radius = std::max(radius, p.norm());
  }
  if (radius > 0.0) {
    for (auto& p : out.points) p /= radius;
  }
  return out;
}

PointCloud upsample_by_repetition(const PointCloud& pc, std::size_t n) {
  if (pc.empty()) throw Error(Errc::Precondition, "cannot upsample an empty cloud");
  if (pc.size() >= n) return pc;
  PointCloud out;
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.points.push_back(pc[i % pc.size()]);
  return out;
}

namespace {

// Indices of the k nearest points to `center`, ordered by (distance, index).
std::vector<int> knn(const PointCloud& pts, const Point& center, int k) {
  std::vector<std::pair<double, int>> d(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) d[i] = {squared_distance(pts[i], center), static_cast<int>(i)};
  const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<long>(kk), d.end());
  std::vector<int> out(kk);
  for (std::size_t i = 0; i < kk; ++i) out[i] = d[i].second;
  return out;
}

}  // namespace

GeoFeature encode_pointcloud(const PointCloud& pc, const SetAbstractionConfig& cfg, const EncoderWeights& weights) {
  cfg.validate();
  weights.check(cfg);
  if (static_cast<int>(pc.size()) < cfg.sampled_points.front()) {
    throw Error(Errc::Size, "cloud has " + std::to_string(pc.size()) + " points, encoder needs " +
                                std::to_string(cfg.sampled_points.front()));
  }
  pc.validate();

  PointCloud positions = normalize_cloud(pc);
  Mat features(static_cast<Eigen::Index>(positions.size()), 0);

  for (int l = 0; l < cfg.num_layers; ++l) {
    const auto& W = weights.layers[static_cast<std::size_t>(l)];
    const int m = cfg.sampled_points[static_cast<std::size_t>(l)];
    const auto centers = farthest_point_sample(positions, m, 0);
    const int k = std::min<int>(cfg.group_size, static_cast<int>(positions.size()));
    const Eigen::Index in_dim = 3 + features.cols();

    Mat grouped(static_cast<Eigen::Index>(m) * k, in_dim);
    for (int c = 0; c < m; ++c) {
      const Point& center = positions[static_cast<std::size_t>(centers[static_cast<std::size_t>(c)])];
      const auto nbrs = knn(positions, center, k);
      for (int j = 0; j < k; ++j) {
        const Eigen::Index row = static_cast<Eigen::Index>(c) * k + j;
        const int idx = nbrs[static_cast<std::size_t>(j)];
        grouped.block<1, 3>(row, 0) = (positions[static_cast<std::size_t>(idx)] - center).transpose();
        if (features.cols() > 0) grouped.row(row).tail(features.cols()) = features.row(idx);
      }
    }
    Mat h = ((grouped * W.w1).rowwise() + W.b1.row(0)).cwiseMax(0.0);
    h = ((h * W.w2).rowwise() + W.b2.row(0)).cwiseMax(0.0);

    Mat pooled(m, h.cols());
    for (int c = 0; c < m; ++c) pooled.row(c) = h.middleRows(static_cast<Eigen::Index>(c) * k, k).colwise().maxCoeff();

    PointCloud next;
    next.points.reserve(static_cast<std::size_t>(m));
    for (int idx : centers) next.points.push_back(positions[static_cast<std::size_t>(idx)]);
    positions = std::move(next);
    features = std::move(pooled);
  }
  return GeoFeature{features.colwise().maxCoeff().transpose()};
}

AttentionWeights AttentionWeights::random(int token_dim, int attn_dim, std::uint64_t seed) {
  if (token_dim < 1 || attn_dim < 1) throw Error(Errc::Config, "attention widths must be positive");
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(token_dim));
  AttentionWeights w;
  w.wq = uniform_matrix(token_dim, attn_dim, bound, rng);
  w.bq = uniform_matrix(1, attn_dim, bound, rng);
  w.wk = uniform_matrix(token_dim, attn_dim, bound, rng);
  w.bk = uniform_matrix(1, attn_dim, bound, rng);
  w.wv = uniform_matrix(token_dim, attn_dim, bound, rng);
  w.bv = uniform_matrix(1, attn_dim, bound, rng);
  return w;
}

FusedFeature cross_attention(const TokenFeatures& f_cat, const TokenFeatures& f_part, const AttentionWeights& w) {
  if (f_cat.dim() != w.token_dim() || f_part.dim() != w.token_dim()) {
    throw Error(Errc::Shape, "token width does not match attention projections");
  }
  if (static_cast<Eigen::Index>(f_cat.mask.size()) != f_cat.rows() ||
      static_cast<Eigen::Index>(f_part.mask.size()) != f_part.rows()) {
    throw Error(Errc::Shape, "token mask length mismatch");
  }
  if (f_part.token_count() == 0) throw Error(Errc::Attention, "all part tokens are masked");
  if (f_cat.token_count() == 0) throw Error(Errc::Attention, "all category tokens are masked");

  const Mat q = (f_cat.matrix * w.wq).rowwise() + w.bq.row(0);
  const Mat k = (f_part.matrix * w.wk).rowwise() + w.bk.row(0);
  const Mat v = (f_part.matrix * w.wv).rowwise() + w.bv.row(0);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(w.attn_dim()));

  Mat scores = (q * k.transpose()) * inv_sqrt_dk;
  FusedFeature out;
  out.attention = Mat::Zero(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (f_part.mask[static_cast<std::size_t>(j)]) mx = std::max(mx, scores(i, j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (f_part.mask[static_cast<std::size_t>(j)]) {
        out.attention(i, j) = std::exp(scores(i, j) - mx);
        sum += out.attention(i, j);
      }
    }
    out.attention.row(i) /= sum;
  }
  out.matrix = out.attention * v;

  out.pooled = Vec::Zero(w.attn_dim());
  int valid = 0;
  for (Eigen::Index i = 0; i < out.matrix.rows(); ++i) {
    if (f_cat.mask[static_cast<std::size_t>(i)]) {
      out.pooled += out.matrix.row(i).transpose();
      ++valid;
    } else {
      out.matrix.row(i).setZero();
    }
  }
  out.pooled /= static_cast<double>(valid);
  return out;
}

ConditionVector build_condition(const GeoFeature& f_obj, const GeoFeature& f_part, const FusedFeature& f_fused,
                                Eigen::Index geo_dim, Eigen::Index attn_dim) {
  if (f_obj.vector.size() != geo_dim || f_part.vector.size() != geo_dim || f_fused.pooled.size() != attn_dim) {
    throw Error(Errc::Shape, "condition inputs have widths " + std::to_string(f_obj.vector.size()) + ", " +
                                 std::to_string(f_part.vector.size()) + ", " + std::to_string(f_fused.pooled.size()) +
                                 "; expected " + std::to_string(geo_dim) + ", " + std::to_string(geo_dim) + ", " +
                                 std::to_string(attn_dim));
  }
  ConditionVector c;
  c.geo_dim = geo_dim;
  c.attn_dim = attn_dim;
  c.vector.resize(2 * geo_dim + attn_dim);
  c.vector << f_obj.vector, f_part.vector, f_fused.pooled;
  return c;
}

ConditioningModel ConditioningModel::random(const SetAbstractionConfig& sa, int token_dim, int attn_dim,
                                            std::uint64_t seed) {
  ConditioningModel m;
  m.sa = sa;
  m.object_encoder = EncoderWeights::random(sa, derive_seed(seed, "object_encoder"));
  m.part_encoder = EncoderWeights::random(sa, derive_seed(seed, "part_encoder"));
  m.attention = AttentionWeights::random(token_dim, attn_dim, derive_seed(seed, "attention"));
  return m;
}

GeoFeature ConditioningModel::encode_object(const PointCloud& cloud) const {
  return encode_pointcloud(upsample_by_repetition(cloud, static_cast<std::size_t>(sa.sampled_points.front())), sa,
                           object_encoder);
}

GeoFeature ConditioningModel::encode_part(const PointCloud& cloud) const {
  return encode_pointcloud(upsample_by_repetition(cloud, static_cast<std::size_t>(sa.sampled_points.front())), sa,
                           part_encoder);
}

ConditionVector ConditioningModel::condition(const GeoFeature& object, const GeoFeature& part,
                                             const TokenFeatures& category_tokens,
                                             const TokenFeatures& part_tokens) const {
  return build_condition(object, part, cross_attention(category_tokens, part_tokens, attention), sa.output_dim(),
                         attention.attn_dim());
}

}  // namespace dextog
