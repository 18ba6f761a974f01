#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cdog/geometry.hpp"
#include "cdog/graph.hpp"
#include "cdog/scene.hpp"

namespace cdog {

struct NodeBpeScore {
  NodeId node;
  double mean_bpe = 0.0;  // squared pixels
};

struct IqrBounds {
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double lb = 0.0;
  double ub = 0.0;
};

struct RefineConfig {
  double iqr_alpha = 2.0;
  // Scores at or below this (squared pixels) are never outliers; keeps the
  // filter from acting on floating-point noise in noise-free groups.
  double bpe_floor = 1e-6;
};

struct GapConfig {
  bool enabled = true;
  double gamma = 10.0;
  double beta = 2.0;
  double epsilon = 1e-6;
};

/// Linear interpolation between closest ranks with inclusive endpoints:
/// position p * (n - 1) in the sorted sample.
inline double percentile_inclusive(std::span<const double> sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// IQR bounds of the scores padded with one zero; lb is pinned at zero.
inline IqrBounds iqr_bounds(std::span<const double> scores, double alpha = 2.0) {
  std::vector<double> padded(scores.begin(), scores.end());
  padded.push_back(0.0);
  std::sort(padded.begin(), padded.end());
  IqrBounds b;
  b.q1 = percentile_inclusive(padded, 0.25);
  b.q3 = percentile_inclusive(padded, 0.75);
  b.iqr = b.q3 - b.q1;
  b.lb = 0.0;
  b.ub = b.q3 + alpha * b.iqr;
  return b;
}

/// Per-node mean back-projection error over all pair triangulations of the
/// group. Every pair is triangulated and reprojected into each remaining view;
/// an error sample is credited to both pair members and to the held-out node.
/// Returns nullopt when the group is too small to hold out a view.
inline std::optional<std::vector<NodeBpeScore>> node_mean_bpe(const AssociationGroup& group,
                                                              const Scene& scene) {
  const auto& members = group.members;
  const std::size_t n = members.size();
  if (n < 3) return std::nullopt;

  std::vector<const CameraPose*> cams(n);
  std::vector<Vec2> pts(n);
  for (std::size_t k = 0; k < n; ++k) {
    cams[k] = &scene.camera(members[k].view);
    pts[k] = scene.xy(members[k]);
  }

  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (members[a].view == members[b].view) continue;
      Point3D r;
      try {
        const std::array<const CameraPose*, 2> pc{cams[a], cams[b]};
        const std::array<Vec2, 2> pp{pts[a], pts[b]};
        r = triangulate(std::span<const CameraPose* const>(pc), std::span<const Vec2>(pp));
      } catch (const DegenerateConfiguration&) {
        continue;
      }
      for (std::size_t h = 0; h < n; ++h) {
        if (members[h].view == members[a].view || members[h].view == members[b].view) continue;
        double err;
        try {
          err = (pts[h] - project(*cams[h], r)).squaredNorm();
        } catch (const BehindCamera&) {
          continue;
        }
        for (std::size_t k : {a, b, h}) {
          sum[k] += err;
          ++count[k];
        }
      }
    }
  }

  std::vector<NodeBpeScore> out(n);
  for (std::size_t k = 0; k < n; ++k)
    out[k] = {members[k], count[k] ? sum[k] / static_cast<double>(count[k]) : 0.0};
  return out;
}

/// Mean two-view reprojection error of `node` paired with each member of the
/// group that lives in a different view.
inline double pairwise_consistency(const AssociationGroup& group, const NodeId& node,
                                   const Scene& scene) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const NodeId& other : group.members) {
    if (other.view == node.view) continue;
    const std::vector<NodeId> pair{node, other};
    const AlignedViews v = gather(scene, pair);
    try {
      const Point3D r = triangulate(std::span<const CameraPose* const>(v.cams), std::span<const Vec2>(v.pts));
      sum += back_projection_error(std::span<const CameraPose* const>(v.cams), std::span<const Vec2>(v.pts), r);
      ++count;
    } catch (const Error&) {
    }
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::infinity();
}

/// Keeps one node per view: the duplicate most consistent with the rest of
/// the group (ties to the lowest NodeId). Returns the evicted nodes.
inline std::vector<NodeId> resolve_duplicates(AssociationGroup& group, const Scene& scene) {
  std::map<int, std::vector<NodeId>> by_view;
  for (const NodeId& m : group.members) by_view[m.view].push_back(m);
  std::vector<NodeId> removed;
  std::vector<NodeId> kept;
  for (auto& [view, nodes] : by_view) {
    if (nodes.size() == 1) {
      kept.push_back(nodes.front());
      continue;
    }
    std::size_t best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const double s = pairwise_consistency(group, nodes[k], scene);
      if (s < best_score) {
        best_score = s;
        best = k;
      }
    }
    for (std::size_t k = 0; k < nodes.size(); ++k) (k == best ? kept : removed).push_back(nodes[k]);
  }
  std::sort(kept.begin(), kept.end());
  group.members = std::move(kept);
  return removed;
}

struct OutlierRemoval {
  AssociationGroup group;
  std::vector<NodeId> removed;
  int iterations = 0;  // scoring rounds run
};

/// Repeats scoring and IQR filtering until no node is flagged or the group
/// drops below three members.
inline OutlierRemoval remove_outliers(AssociationGroup group, const Scene& scene,
                                      const RefineConfig& cfg = {}) {
  OutlierRemoval out;
  out.removed = resolve_duplicates(group, scene);
  while (group.members.size() >= 3) {
    const auto scores = node_mean_bpe(group, scene);
    if (!scores) break;
    ++out.iterations;
    std::vector<double> values;
    values.reserve(scores->size());
    for (const auto& s : *scores) values.push_back(s.mean_bpe);
    const IqrBounds bounds = iqr_bounds(values, cfg.iqr_alpha);
    std::vector<NodeId> flagged;
    for (const auto& s : *scores)
      if (s.mean_bpe > bounds.ub && s.mean_bpe > cfg.bpe_floor) flagged.push_back(s.node);
    if (flagged.empty()) break;
    std::erase_if(group.members, [&](const NodeId& m) {
      return std::find(flagged.begin(), flagged.end(), m) != flagged.end();
    });
    out.removed.insert(out.removed.end(), flagged.begin(), flagged.end());
  }
  std::sort(out.removed.begin(), out.removed.end());
  out.group = std::move(group);
  return out;
}

/// Mean back-projection error of the group's own triangulation, or nullopt
/// when it cannot be triangulated.
inline std::optional<double> group_bpe(const AssociationGroup& group, const Scene& scene) {
  if (group.members.size() < 2) return std::nullopt;
  const AlignedViews v = gather(scene, group.members);
  try {
    const Point3D r = triangulate(std::span<const CameraPose* const>(v.cams), std::span<const Vec2>(v.pts));
    return back_projection_error(std::span<const CameraPose* const>(v.cams), std::span<const Vec2>(v.pts), r);
  } catch (const Error&) {
    return std::nullopt;
  }
}

/// Index of the first sorted BPE that jumps away from the rest, or size()
/// when there is none. `sorted` must be ascending.
inline std::size_t find_bpe_gap(std::span<const double> sorted, double tau, const GapConfig& cfg) {
  std::vector<double> diffs;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const double d = sorted[i] - sorted[i - 1];
    double baseline = 0.0;
    if (!diffs.empty()) {
      std::vector<double> tmp = diffs;
      const std::size_t mid = tmp.size() / 2;
      std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid), tmp.end());
      baseline = tmp[mid];
      if (tmp.size() % 2 == 0) {
        const double lower = *std::max_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(mid));
        baseline = 0.5 * (baseline + lower);
      }
    }
    if (d > cfg.gamma * std::max(baseline, cfg.epsilon) && sorted[i] > cfg.beta * tau * tau) return i;
    diffs.push_back(d);
  }
  return sorted.size();
}

struct GroupSplit {
  std::vector<AssociationGroup> kept;
  std::vector<AssociationGroup> discarded;
};

/// Sorts groups by BPE and drops everything from the first sudden jump on.
/// Groups that cannot be triangulated are discarded outright.
inline GroupSplit remove_error_groups(std::vector<AssociationGroup> groups, const Scene& scene, double tau,
                                      const GapConfig& cfg = {}) {
  GroupSplit out;
  if (!cfg.enabled) {
    out.kept = std::move(groups);
    return out;
  }
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (const auto bpe = group_bpe(groups[k], scene)) ranked.emplace_back(*bpe, k);
    else out.discarded.push_back(groups[k]);
  }
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return groups[a.second].members < groups[b.second].members;
  });
  std::vector<double> sorted;
  for (const auto& r : ranked) sorted.push_back(r.first);
  const std::size_t cut = find_bpe_gap(sorted, tau, cfg);
  for (std::size_t i = 0; i < ranked.size(); ++i)
    (i < cut ? out.kept : out.discarded).push_back(std::move(groups[ranked[i].second]));
  auto by_first = [](const AssociationGroup& a, const AssociationGroup& b) { return a.members < b.members; };
  std::sort(out.kept.begin(), out.kept.end(), by_first);
  std::sort(out.discarded.begin(), out.discarded.end(), by_first);
  return out;
}

}  // namespace cdog
