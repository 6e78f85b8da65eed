#pragma once

// Shared synthetic shapes for the test binaries.

#include <cmath>
#include <numbers>

#include "dextog/config.hpp"
#include "dextog/geometry.hpp"

namespace dextog::testing {

/// Fibonacci-spiral samples of a sphere surface.
inline PointCloud sphere_surface(const Point& center, double r, int n) {
  PointCloud pc;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double rho = std::sqrt(1.0 - z * z);
    const double phi = golden * i;
    pc.points.push_back(center + r * Point(rho * std::cos(phi), rho * std::sin(phi), z));
  }
  return pc;
}

/// Regular grid samples of an axis-aligned cube surface with `per_edge` samples per edge.
inline PointCloud cube_surface(const Point& lo, double side, int per_edge) {
  PointCloud pc;
  const double h = side / (per_edge - 1);
  for (int i = 0; i < per_edge; ++i) {
    for (int j = 0; j < per_edge; ++j) {
      for (int k = 0; k < per_edge; ++k) {
        const bool on_face = i == 0 || j == 0 || k == 0 || i == per_edge - 1 || j == per_edge - 1 || k == per_edge - 1;
        if (on_face) pc.points.push_back(lo + Point(i * h, j * h, k * h));
      }
    }
  }
  return pc;
}

struct Dumbbell {
  PointCloud cloud;
  std::vector<PartSegment> segments;  // "end a" at -x, "end b" at +x
  Point center_a;
  Point center_b;
};

/// Two spheres of radius 0.04 centered at x = -0.15 and x = +0.15.
inline Dumbbell dumbbell(int points_per_end = 600) {
  Dumbbell d;
  d.center_a = Point(-0.15, 0, 0);
  d.center_b = Point(0.15, 0, 0);
  const auto a = sphere_surface(d.center_a, 0.04, points_per_end);
  const auto b = sphere_surface(d.center_b, 0.04, points_per_end);
  PartSegment sa{"end a", 1, {}, false}, sb{"end b", 1, {}, false};
  for (const auto& p : a.points) {
    sa.point_indices.push_back(static_cast<int>(d.cloud.size()));
    d.cloud.points.push_back(p);
  }
  for (const auto& p : b.points) {
    sb.point_indices.push_back(static_cast<int>(d.cloud.size()));
    d.cloud.points.push_back(p);
  }
  d.segments = {sa, sb};
  return d;
}

/// A fast model configuration for pipeline-level unit tests.
inline Config small_config() {
  Config c;
  c.language_aggregation.T_td = 40;
  c.language_aggregation.T_pd = 40;
  c.language_aggregation.T_d = 16;
  c.language_aggregation.dimension_in_cross_attention = 8;
  c.pointnet.num_layers = 2;
  c.pointnet.sampled_points = {64, 16};
  c.pointnet.embedding_sizes = {16, 32};
  c.pointnet.group_size = 8;
  c.diffusion.diffusion_steps = 20;
  c.diffusion.mlp_hidden = 32;
  c.diffusion.time_embed_dim = 16;
  c.pipeline.num_descriptions = 3;
  c.training.description_variants = 2;
  return c;
}

}  // namespace dextog::testing
