#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cdog/geometry.hpp"
#include "cdog/graph.hpp"
#include "cdog/refine.hpp"
#include "cdog/scene.hpp"

namespace cdog {

struct CdogConfig {
  std::optional<double> sigma;  // unset: scene metadata, else estimated
  double tau_alpha = 2.0;
  double tau_min = 1.0;
  double delta = 0.5;
  RefineConfig refine;
  GapConfig gap;
};

struct StageTimings {
  double init_ms = 0.0;
  double prune_ms = 0.0;
  double iqr_ms = 0.0;
  double gap_ms = 0.0;
  double total_ms = 0.0;
};

struct ReconstructedPoint {
  int group_id = 0;
  Point3D xyz = Point3D::Zero();
  double bpe = 0.0;
};

struct AssociationResult {
  std::string method = "cdog";
  std::vector<AssociationGroup> groups;
  std::vector<NodeId> outliers;
  std::vector<ReconstructedPoint> points3d;
  StageTimings timings;
  std::vector<int> views;  // view ids of the scene the result refers to
  double sigma = 0.0;
  double tau = 0.0;
};

namespace detail {

class Stopwatch {
 public:
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Moves groups smaller than two into the outliers, then sorts and renumbers.
inline void finalize_result(AssociationResult& result, const Scene& scene) {
  std::vector<AssociationGroup> kept;
  for (auto& g : result.groups) {
    if (g.members.size() < 2) {
      result.outliers.insert(result.outliers.end(), g.members.begin(), g.members.end());
      continue;
    }
    std::sort(g.members.begin(), g.members.end());
    g.isolated = false;
    kept.push_back(std::move(g));
  }
  std::sort(kept.begin(), kept.end(),
            [](const AssociationGroup& a, const AssociationGroup& b) { return a.members < b.members; });
  for (std::size_t k = 0; k < kept.size(); ++k) kept[k].id = static_cast<int>(k);
  result.groups = std::move(kept);
  std::sort(result.outliers.begin(), result.outliers.end());
  result.views.clear();
  for (const auto& c : scene.cameras) result.views.push_back(c.view_id);
}

/// Noise estimate from every cross-view epipolar distance. Wrong pairings form
/// a smooth background around zero; it is fitted on two outer annuli and
/// subtracted, and the median of the remaining excess is the MAD of the
/// true residuals. Iterated from a narrow initial window.
inline double estimate_sigma(const Scene& scene) {
  const std::size_t views = scene.num_views();
  if (views < 2) return 0.0;
  const auto F = pairwise_fundamentals(scene);

  std::vector<double> dist;
  double max_true = 0.0;  // at most one true partner per observation and view
  for (std::size_t m = 0; m < views; ++m) {
    for (std::size_t mp = m + 1; mp < views; ++mp) {
      max_true += static_cast<double>(std::min(scene.observations[m].size(), scene.observations[mp].size()));
      for (const Observation& o : scene.observations[m]) {
        const Vec3 abc = F[mp][m] * o.xy.homogeneous();
        const double norm = std::hypot(abc.x(), abc.y());
        if (norm < kDefaultTolerances.line_direction) continue;
        for (const Observation& q : scene.observations[mp])
          dist.push_back(std::abs(abc.x() * q.xy.x() + abc.y() * q.xy.y() + abc.z()) / norm);
      }
    }
  }
  if (dist.empty()) return 0.0;
  std::sort(dist.begin(), dist.end());
  auto below = [&](double r) {
    return static_cast<double>(std::upper_bound(dist.begin(), dist.end(), r) - dist.begin());
  };

  constexpr double kMad = 0.6744897501960817;  // median of |N(0,1)|
  constexpr double kMinWindow = 0.05;
  double s = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double R = std::max(4.0 * s, kMinWindow);
    // Background density, linear in r, from the annuli [R,2R] and [2R,3R].
    const double d1 = (below(2.0 * R) - below(R)) / R;
    const double d2 = (below(3.0 * R) - below(2.0 * R)) / R;
    const double slope = (d2 - d1) / R;
    auto background = [&](double r) { return d1 * r + slope * (0.5 * r * r - 1.5 * R * r); };
    const double excess = below(R) - background(R);
    if (excess <= 0.0) {
      // Window too narrow: true residuals leak into the annuli.
      if (R > 1e4) break;
      s = 2.0 * R;
      continue;
    }
    if (excess > 1.25 * max_true && R > kMinWindow) {
      // Window too wide: background curvature dominates.
      s = 0.5 * s;
      continue;
    }
    // Smallest r whose background-corrected count reaches half the excess.
    double lo = 0.0, hi = R;
    for (int k = 0; k < 60; ++k) {
      const double mid = 0.5 * (lo + hi);
      (below(mid) - background(mid) < 0.5 * excess ? lo : hi) = mid;
    }
    const double next = hi / kMad;
    const bool settled = std::abs(next - s) <= 1e-9 + 1e-6 * s;
    s = next;
    if (settled) break;
  }
  return s / std::numbers::sqrt2;
}

/// Explicit config value, else the scene's recorded noise, else an estimate.
inline double resolve_sigma(const Scene& scene, const CdogConfig& cfg) {
  if (cfg.sigma) return *cfg.sigma;
  if (scene.sigma) return *scene.sigma;
  return estimate_sigma(scene);
}

/// Triangulates each group over all of its members. Groups whose rays are
/// degenerate are skipped.
inline std::vector<ReconstructedPoint> reconstruct(const AssociationResult& result, const Scene& scene) {
  std::vector<ReconstructedPoint> out;
  for (const AssociationGroup& g : result.groups) {
    if (g.members.size() < 2) continue;
    const AlignedViews v = gather(scene, g.members);
    try {
      const Point3D r = triangulate(std::span<const CameraPose* const>(v.cams), std::span<const Vec2>(v.pts));
      const double bpe =
          back_projection_error(std::span<const CameraPose* const>(v.cams), std::span<const Vec2>(v.pts), r);
      out.push_back({g.id, r, bpe});
    } catch (const Error&) {
    }
  }
  return out;
}

/// The full association: gate -> initial graph -> weak-edge pruning ->
/// components -> per-group outlier removal -> error-group removal.
inline AssociationResult associate(const Scene& scene, const CdogConfig& cfg = {}) {
  AssociationResult result;
  result.method = "cdog";
  detail::Stopwatch total;
  detail::Stopwatch watch;

  const double sigma = resolve_sigma(scene, cfg);
  result.sigma = sigma;
  result.tau = threshold_from_sigma(sigma, cfg.tau_alpha, cfg.tau_min);

  AssociationGraph graph = init_graph(scene, result.tau);
  result.timings.init_ms = watch.lap_ms();

  graph = prune_weak_edges(std::move(graph), cfg.delta);
  std::vector<AssociationGroup> components = connected_components(graph);
  result.timings.prune_ms = watch.lap_ms();

  std::vector<AssociationGroup> groups;
  for (AssociationGroup& c : components) {
    if (c.members.size() < 2) {
      result.outliers.insert(result.outliers.end(), c.members.begin(), c.members.end());
      continue;
    }
    OutlierRemoval refined = remove_outliers(std::move(c), scene, cfg.refine);
    result.outliers.insert(result.outliers.end(), refined.removed.begin(), refined.removed.end());
    if (refined.group.members.size() >= 2) groups.push_back(std::move(refined.group));
    else result.outliers.insert(result.outliers.end(), refined.group.members.begin(), refined.group.members.end());
  }
  result.timings.iqr_ms = watch.lap_ms();

  GroupSplit split = remove_error_groups(std::move(groups), scene, result.tau, cfg.gap);
  for (const auto& g : split.discarded)
    result.outliers.insert(result.outliers.end(), g.members.begin(), g.members.end());
  result.groups = std::move(split.kept);
  result.timings.gap_ms = watch.lap_ms();

  finalize_result(result, scene);
  result.timings.total_ms = total.lap_ms();
  return result;
}

}  // namespace cdog
