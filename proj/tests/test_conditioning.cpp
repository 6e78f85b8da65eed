#include "dextog/conditioning.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace dextog;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  std::vector<Point> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  return PointCloud(std::move(pts));
}

SetAbstractionConfig small_sa() {
  SetAbstractionConfig sa;
  sa.num_layers = 2;
  sa.sampled_points = {64, 16};
  sa.embedding_sizes = {16, 32};
  sa.group_size = 8;
  return sa;
}

TokenFeatures tokens(const Mat& m, std::vector<bool> mask) {
  TokenFeatures t;
  t.matrix = m;
  t.mask = std::move(mask);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!t.mask[static_cast<std::size_t>(i)]) t.matrix.row(i).setZero();
  }
  return t;
}

AttentionWeights identity_weights(int dim) {
  AttentionWeights w;
  w.wq = w.wk = w.wv = Mat::Identity(dim, dim);
  w.bq = w.bk = w.bv = Mat::Zero(1, dim);
  return w;
}

}  // namespace

TEST_CASE("farthest point sampling examples") {
  const PointCloud line({Point(0, 0, 0), Point(1, 0, 0), Point(2, 0, 0)});
  CHECK(farthest_point_sample(line, 1, 1) == std::vector<int>{1});
  CHECK(farthest_point_sample(line, 2, 0) == std::vector<int>{0, 2});
  // From the middle both ends are at distance 1; the lower index wins.
  CHECK(farthest_point_sample(line, 2, 1) == std::vector<int>{1, 0});
  auto all = farthest_point_sample(line, 3, 0);
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(farthest_point_sample(line, 4, 0), Error);
  CHECK_THROWS_AS(farthest_point_sample(line, 0, 0), Error);
}

TEST_CASE("farthest point sampling matches a brute-force greedy oracle") {
  const auto pc = random_cloud(200, 3);
  const auto got = farthest_point_sample(pc, 40, 7);
  std::vector<int> expect{7};
  while (expect.size() < 40) {
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < 200; ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (int j : expect) d = std::min(d, squared_distance(pc[i], pc[static_cast<std::size_t>(j)]));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    expect.push_back(best);
  }
  CHECK(got == expect);
  CHECK(std::set<int>(got.begin(), got.end()).size() == got.size());
  CHECK(farthest_point_sample(pc, 40, 7) == got);
}

TEST_CASE("set abstraction config validation") {
  SetAbstractionConfig sa;
  CHECK_NOTHROW(sa.validate());
  CHECK(sa.output_dim() == 512);
  auto bad = sa;
  bad.sampled_points = {1024, 256, 256, 16};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = sa;
  bad.embedding_sizes.pop_back();
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("encoder is deterministic and invariant to translation and point order") {
  const auto sa = small_sa();
  const auto w = EncoderWeights::random(sa, 5);
  const auto pc = random_cloud(300, 9);
  const auto f = encode_pointcloud(pc, sa, w);
  CHECK(f.vector.size() == 32);
  CHECK(f.vector.allFinite());
  CHECK(encode_pointcloud(pc, sa, w).vector == f.vector);

  CHECK(encode_pointcloud(pc.translated(Point(0.3, -1.0, 2.0)), sa, w).vector.isApprox(f.vector, 1e-9));

  std::vector<int> perm(pc.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), Rng(11));
  CHECK(encode_pointcloud(pc.subset(perm), sa, w).vector == f.vector);

  CHECK_THROWS_AS(encode_pointcloud(random_cloud(20, 1), sa, w), Error);
  const auto other = EncoderWeights::random(SetAbstractionConfig{}, 5);
  CHECK_THROWS_AS(encode_pointcloud(pc, sa, other), Error);
}

TEST_CASE("default encoder produces 512 values") {
  const auto model = ConditioningModel::random(SetAbstractionConfig{}, 768, 128, 1);
  const auto f = model.encode_object(random_cloud(600, 2));
  CHECK(f.vector.size() == 512);
  CHECK(model.condition_dim() == 1152);
}

TEST_CASE("upsample by repetition cycles the cloud") {
  const auto pc = random_cloud(3, 4);
  const auto up = upsample_by_repetition(pc, 7);
  REQUIRE(up.size() == 7);
  CHECK(up[6] == pc[0]);
  CHECK(upsample_by_repetition(pc, 2).size() == 3);
}

TEST_CASE("single unmasked key gives its value row for every query") {
  const auto w = AttentionWeights::random(6, 4, 3);
  Mat cat = Mat::Random(5, 6);
  Mat part = Mat::Random(4, 6);
  const auto fc = tokens(cat, {true, true, true, true, true});
  const auto fp = tokens(part, {false, false, true, false});
  const auto out = cross_attention(fc, fp, w);
  const Mat v = (fp.matrix * w.wv).rowwise() + w.bv.row(0);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(out.matrix.row(i) == v.row(2));
}

TEST_CASE("attention rows are stochastic and outputs lie in the value hull") {
  const auto w = AttentionWeights::random(8, 6, 4);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Mat cat = Mat::Random(7, 8) * 3.0;
    Mat part = Mat::Random(9, 8) * 3.0;
    std::vector<bool> qm(7), km(9);
    for (auto&& b : qm) b = rng() % 3 != 0;
    for (auto&& b : km) b = rng() % 3 != 0;
    qm[0] = true;
    km[4] = true;
    const auto fc = tokens(cat, qm);
    const auto fp = tokens(part, km);
    const auto out = cross_attention(fc, fp, w);
    const Mat v = (fp.matrix * w.wv).rowwise() + w.bv.row(0);
    Vec lo = Vec::Constant(6, 1e300), hi = Vec::Constant(6, -1e300);
    for (Eigen::Index j = 0; j < 9; ++j) {
      if (!km[static_cast<std::size_t>(j)]) continue;
      lo = lo.cwiseMin(v.row(j).transpose());
      hi = hi.cwiseMax(v.row(j).transpose());
    }
    Vec pooled = Vec::Zero(6);
    int valid = 0;
    for (Eigen::Index i = 0; i < 7; ++i) {
      CHECK(std::abs(out.attention.row(i).sum() - 1.0) <= 1e-6);
      for (Eigen::Index j = 0; j < 9; ++j) {
        if (!km[static_cast<std::size_t>(j)]) CHECK(out.attention(i, j) == 0.0);
      }
      if (!qm[static_cast<std::size_t>(i)]) {
        CHECK(out.matrix.row(i).isZero());
        continue;
      }
      ++valid;
      pooled += out.matrix.row(i).transpose();
      for (int c = 0; c < 6; ++c) {
        CHECK(out.matrix(i, c) >= lo(c) - 1e-6);
        CHECK(out.matrix(i, c) <= hi(c) + 1e-6);
      }
    }
    CHECK(out.pooled.isApprox(pooled / valid, 1e-12));
  }
}

TEST_CASE("2 x 3 cross-attention matches a scalar computation") {
  Mat cat(2, 2), part(3, 2);
  cat << 1.0, 0.0, 0.5, -1.0;
  part << 0.0, 1.0, 2.0, 0.5, -1.0, 1.5;
  const auto w = identity_weights(2);
  const auto out = cross_attention(tokens(cat, {true, true}), tokens(part, {true, true, true}), w);
  for (int i = 0; i < 2; ++i) {
    double s[3];
    double z = 0.0;
    for (int j = 0; j < 3; ++j) {
      s[j] = std::exp((cat(i, 0) * part(j, 0) + cat(i, 1) * part(j, 1)) / std::sqrt(2.0));
      z += s[j];
    }
    for (int c = 0; c < 2; ++c) {
      double expect = 0.0;
      for (int j = 0; j < 3; ++j) expect += s[j] / z * part(j, c);
      CHECK(std::abs(out.matrix(i, c) - expect) <= 1e-12);
    }
  }
}

TEST_CASE("cross-attention errors") {
  const auto w = identity_weights(2);
  const Mat m = Mat::Ones(2, 2);
  CHECK_THROWS_AS(cross_attention(tokens(m, {true, true}), tokens(m, {false, false}), w), Error);
  CHECK_THROWS_AS(cross_attention(tokens(m, {false, false}), tokens(m, {true, true}), w), Error);
  CHECK_THROWS_AS(cross_attention(tokens(Mat::Ones(2, 3), {true, true}), tokens(m, {true, true}), w), Error);
  try {
    cross_attention(tokens(m, {true, true}), tokens(m, {false, false}), w);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Attention);
  }
}

TEST_CASE("build_condition concatenates and slices back") {
  GeoFeature zo{Vec::Zero(512)}, zp{Vec::Zero(512)};
  FusedFeature zf;
  zf.pooled = Vec::Zero(128);
  const auto zero = build_condition(zo, zp, zf);
  CHECK(zero.vector.size() == 1152);
  CHECK(zero.vector.isZero());

  GeoFeature o{Vec::Random(512)}, p{Vec::Random(512)};
  FusedFeature f;
  f.pooled = Vec::Random(128);
  const auto c = build_condition(o, p, f);
  CHECK(c.object_slice() == o.vector);
  CHECK(c.part_slice() == p.vector);
  CHECK(c.fused_slice() == f.pooled);

  GeoFeature short_geo{Vec::Zero(511)};
  CHECK_THROWS_AS(build_condition(short_geo, p, f), Error);
}

TEST_CASE("conditioning model end to end") {
  const auto model = ConditioningModel::random(small_sa(), 16, 8, 3);
  const HashTextEncoder enc(1, 16, 20);
  const auto obj = model.encode_object(random_cloud(100, 1));
  const auto part = model.encode_part(random_cloud(70, 2));
  const auto c = model.condition(obj, part, encode_text(enc, "a mug for drinking"), encode_text(enc, "handle"));
  CHECK(c.vector.size() == model.condition_dim());
  CHECK(c.vector.size() == 2 * 32 + 8);
  CHECK(c.vector.allFinite());
  // Object and part encoders carry separate weights.
  CHECK(model.encode_object(random_cloud(100, 1)).vector != model.encode_part(random_cloud(100, 1)).vector);
}
