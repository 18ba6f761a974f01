#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "cdog/geometry.hpp"
#include "cdog/random.hpp"
#include "cdog/scene.hpp"

namespace cdog {

/// Ring of cameras looking at a common target.
struct RigSpec {
  int n_cameras = 10;
  double radius = 500.0;
  Vec3 look_at = Vec3::Zero();
  double focal_px = 800.0;
  Vec2 principal_point{640.0, 360.0};
  Vec2 image_size{1280.0, 720.0};
  double elevation = 0.35;         // radians above the target plane
  double elevation_jitter = 0.1;   // uniform +/- per camera
};

struct Bounds {
  Vec3 lo{-100.0, -100.0, -100.0};
  Vec3 hi{100.0, 100.0, 100.0};
};

/// Pose looking from `center` towards `target`, image y pointing down.
inline CameraPose look_at_pose(int view_id, const Vec3& center, const Vec3& target, const Mat3& K) {
  const Vec3 forward = (target - center).normalized();
  Vec3 up_world = Vec3::UnitZ();
  if (std::abs(forward.dot(up_world)) > 0.999) up_world = Vec3::UnitY();
  const Vec3 right = forward.cross(up_world).normalized();
  const Vec3 down = forward.cross(right);
  CameraPose pose;
  pose.view_id = view_id;
  pose.K = K;
  pose.R.row(0) = right.transpose();
  pose.R.row(1) = down.transpose();
  pose.R.row(2) = forward.transpose();
  pose.T = -pose.R * center;
  return pose;
}

inline std::vector<CameraPose> make_rig(const RigSpec& spec, std::uint64_t seed) {
  Xoshiro256pp rng(hash_seed(seed, 0x726967ULL));
  Mat3 K = Mat3::Identity();
  K(0, 0) = K(1, 1) = spec.focal_px;
  K(0, 2) = spec.principal_point.x();
  K(1, 2) = spec.principal_point.y();
  std::vector<CameraPose> cams;
  cams.reserve(static_cast<std::size_t>(spec.n_cameras));
  for (int k = 0; k < spec.n_cameras; ++k) {
    const double azimuth = 2.0 * std::numbers::pi * k / spec.n_cameras;
    const double elevation = spec.elevation + spec.elevation_jitter * (2.0 * rng.uniform() - 1.0);
    const Vec3 offset(std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                      std::sin(elevation));
    cams.push_back(look_at_pose(k, spec.look_at + spec.radius * offset, spec.look_at, K));
  }
  return cams;
}

struct SceneOptions {
  Bounds bounds;
  // When positive, resample points until every pair is at least this far
  // apart (pixels) in every view.
  double min_separation_px = 0.0;
  int max_resample = 10000;
};

/// n points uniform in the bounds, projected into every camera with
/// independent per-axis Gaussian noise of standard deviation sigma.
inline Scene generate_scene(int n_points, const std::vector<CameraPose>& rig, double sigma, std::uint64_t seed,
                            const SceneOptions& opts = {}) {
  Scene scene;
  scene.cameras = rig;
  scene.sigma = sigma;
  scene.seed = seed;
  Xoshiro256pp point_rng(hash_seed(seed, 0x706f696e74ULL));
  Xoshiro256pp noise_rng(hash_seed(seed, 0x6e6f697365ULL));

  std::vector<std::vector<Vec2>> exact(rig.size());
  for (int g = 0; g < n_points; ++g) {
    Point3D x;
    std::vector<Vec2> proj(rig.size());
    for (int attempt = 0;; ++attempt) {
      for (int a = 0; a < 3; ++a) x(a) = point_rng.uniform(opts.bounds.lo(a), opts.bounds.hi(a));
      for (std::size_t k = 0; k < rig.size(); ++k) proj[k] = project(rig[k], x);
      if (opts.min_separation_px <= 0.0 || attempt >= opts.max_resample) break;
      bool separated = true;
      for (std::size_t k = 0; k < rig.size() && separated; ++k)
        for (const Vec2& other : exact[k])
          if ((other - proj[k]).norm() < opts.min_separation_px) {
            separated = false;
            break;
          }
      if (separated) break;
    }
    scene.gt_points.push_back({g, x});
    for (std::size_t k = 0; k < rig.size(); ++k) exact[k].push_back(proj[k]);
  }

  scene.observations.assign(rig.size(), {});
  for (std::size_t k = 0; k < rig.size(); ++k) {
    for (int g = 0; g < n_points; ++g) {
      const auto [nx, ny] = noise_rng.gaussian_pair();
      Observation o;
      o.index = g;
      o.gt = g;
      o.xy = exact[k][static_cast<std::size_t>(g)] + sigma * Vec2(nx, ny);
      scene.observations[k].push_back(o);
    }
  }
  // Detection order within a view must not leak the ground-truth id.
  for (std::size_t k = 0; k < rig.size(); ++k) {
    auto& view = scene.observations[k];
    for (std::size_t i = view.size(); i > 1; --i) std::swap(view[i - 1], view[noise_rng.below(i)]);
    for (std::size_t i = 0; i < view.size(); ++i) view[i].index = static_cast<int>(i);
  }
  return scene;
}

/// Keeps a uniformly sampled subset of `keep` views (original ids and labels).
inline Scene drop_views(const Scene& scene, int keep, std::uint64_t seed) {
  const int n = static_cast<int>(scene.num_views());
  if (keep < 2 || keep > n)
    throw Error("keep_views must be in [2, " + std::to_string(n) + "], got " + std::to_string(keep));
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Xoshiro256pp rng(hash_seed(seed, 0x64726f70ULL));
  for (std::size_t i = 0; i < static_cast<std::size_t>(keep); ++i)
    std::swap(order[i], order[i + rng.below(order.size() - i)]);
  order.resize(static_cast<std::size_t>(keep));
  std::sort(order.begin(), order.end());

  Scene out;
  out.gt_points = scene.gt_points;
  out.sigma = scene.sigma;
  out.seed = scene.seed;
  for (std::size_t k : order) {
    out.cameras.push_back(scene.cameras[k]);
    out.observations.push_back(scene.observations[k]);
  }
  return out;
}

/// Restricts a scene to the listed view ids; unknown ids are an error.
inline Scene select_views(const Scene& scene, const std::vector<int>& view_ids) {
  Scene out;
  out.gt_points = scene.gt_points;
  out.sigma = scene.sigma;
  out.seed = scene.seed;
  std::vector<int> ids = view_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (int id : ids) {
    const int k = scene.view_position(id);
    if (k < 0) throw FormatError("view " + std::to_string(id) + " is not part of the scene");
    out.cameras.push_back(scene.cameras[static_cast<std::size_t>(k)]);
    out.observations.push_back(scene.observations[static_cast<std::size_t>(k)]);
  }
  return out;
}

struct BenchmarkSpec {
  std::vector<int> point_counts;
  std::vector<double> sigmas;
  int batches = 5;
  std::uint64_t seed = 0;
  SceneOptions scene_options;

  static std::vector<int> default_counts() {
    std::vector<int> c;
    for (int n = 1; n <= 20; ++n) c.push_back(n);
    for (int n = 25; n <= 130; n += 5) c.push_back(n);
    return c;
  }

  static std::vector<double> default_sigmas() {
    std::vector<double> s;
    for (int q = 0; q <= 20; ++q) s.push_back(0.25 * q);
    return s;
  }

  static BenchmarkSpec defaults() {
    BenchmarkSpec spec;
    spec.point_counts = default_counts();
    spec.sigmas = default_sigmas();
    return spec;
  }
};

struct SceneEntry {
  int count = 0;
  int batch = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  /// File name unique per (count, batch, sigma); sigma encoded in 1/100 px.
  std::string file_name() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "scene_n%03d_b%02d_s%03d.json", count, batch,
                  static_cast<int>(std::lround(sigma * 100.0)));
    return buf;
  }
};

/// The 3D points of (count, batch) are shared by every sigma level; only the
/// noise amplitude changes between levels.
inline std::uint64_t scene_seed(std::uint64_t seed, int count, int batch) {
  return hash_seed(seed, static_cast<std::uint64_t>(count), static_cast<std::uint64_t>(batch));
}

/// Enumerates the dataset in (sigma, count, batch) order.
inline std::vector<SceneEntry> benchmark_entries(const BenchmarkSpec& spec) {
  std::vector<SceneEntry> out;
  for (double sigma : spec.sigmas)
    for (int count : spec.point_counts)
      for (int batch = 0; batch < spec.batches; ++batch)
        out.push_back({count, batch, sigma, scene_seed(spec.seed, count, batch)});
  return out;
}

inline Scene generate_entry(const SceneEntry& e, const std::vector<CameraPose>& rig, const SceneOptions& opts = {}) {
  return generate_scene(e.count, rig, e.sigma, e.seed, opts);
}

}  // namespace cdog
