#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdog/error.hpp"
#include "cdog/geometry.hpp"

namespace cdog {

/// A 2D observation addressed by (camera view id, index within that view).
struct NodeId {
  int view = 0;
  int index = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct Point2D {
  int view = 0;
  int index = 0;
  Vec2 xy = Vec2::Zero();
};

struct Observation {
  int index = 0;
  Vec2 xy = Vec2::Zero();
  std::optional<int> gt;
};

struct GtPoint {
  int id = 0;
  Point3D xyz = Point3D::Zero();
};

/// Cameras plus their per-view detections. observations[k] belongs to cameras[k].
/// Cameras are kept sorted by view id and each view's observations by index.
struct Scene {
  std::vector<CameraPose> cameras;
  std::vector<std::vector<Observation>> observations;
  std::vector<GtPoint> gt_points;
  std::optional<double> sigma;
  std::uint64_t seed = 0;

  std::size_t num_views() const { return cameras.size(); }

  std::size_t num_observations() const {
    std::size_t n = 0;
    for (const auto& v : observations) n += v.size();
    return n;
  }

  bool has_ground_truth() const {
    if (gt_points.empty()) return false;
    for (const auto& view : observations)
      for (const auto& o : view)
        if (!o.gt) return false;
    return true;
  }

  /// Position of a view id in `cameras`, or -1.
  int view_position(int view_id) const {
    const auto it = std::lower_bound(cameras.begin(), cameras.end(), view_id,
                                     [](const CameraPose& c, int id) { return c.view_id < id; });
    if (it == cameras.end() || it->view_id != view_id) return -1;
    return static_cast<int>(it - cameras.begin());
  }

  const CameraPose& camera(int view_id) const {
    const int pos = view_position(view_id);
    if (pos < 0) throw FormatError("unknown view id " + std::to_string(view_id));
    return cameras[static_cast<std::size_t>(pos)];
  }

  const Observation& observation(const NodeId& id) const {
    const int pos = view_position(id.view);
    if (pos < 0) throw FormatError("unknown view id " + std::to_string(id.view));
    const auto& view = observations[static_cast<std::size_t>(pos)];
    const auto it = std::lower_bound(view.begin(), view.end(), id.index,
                                     [](const Observation& o, int i) { return o.index < i; });
    if (it == view.end() || it->index != id.index)
      throw FormatError("unknown observation (" + std::to_string(id.view) + ", " +
                        std::to_string(id.index) + ")");
    return *it;
  }

  const Vec2& xy(const NodeId& id) const { return observation(id).xy; }

  const GtPoint* gt_point(int id) const {
    for (const GtPoint& g : gt_points)
      if (g.id == id) return &g;
    return nullptr;
  }

  /// All node ids in canonical (view, index) order.
  std::vector<NodeId> node_ids() const {
    std::vector<NodeId> ids;
    ids.reserve(num_observations());
    for (std::size_t k = 0; k < cameras.size(); ++k)
      for (const Observation& o : observations[k]) ids.push_back({cameras[k].view_id, o.index});
    return ids;
  }

  /// Sorts cameras/observations into canonical order and checks invariants.
  void normalize() {
    if (observations.size() != cameras.size())
      throw FormatError("observation lists do not match camera count");
    std::vector<std::size_t> order(cameras.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return cameras[a].view_id < cameras[b].view_id; });
    std::vector<CameraPose> cams;
    std::vector<std::vector<Observation>> obs;
    for (std::size_t i : order) {
      cams.push_back(cameras[i]);
      obs.push_back(std::move(observations[i]));
    }
    cameras = std::move(cams);
    observations = std::move(obs);
    for (std::size_t k = 0; k < cameras.size(); ++k) {
      if (k > 0 && cameras[k].view_id == cameras[k - 1].view_id)
        throw FormatError("duplicate view id " + std::to_string(cameras[k].view_id));
      if (const std::string why = cameras[k].validate(); !why.empty())
        throw FormatError("camera " + std::to_string(cameras[k].view_id) + ": " + why);
      auto& view = observations[k];
      std::sort(view.begin(), view.end(),
                [](const Observation& a, const Observation& b) { return a.index < b.index; });
      for (std::size_t i = 0; i < view.size(); ++i) {
        if (i > 0 && view[i].index == view[i - 1].index)
          throw FormatError("duplicate observation index " + std::to_string(view[i].index) +
                            " in view " + std::to_string(cameras[k].view_id));
        if (!view[i].xy.allFinite()) throw FormatError("non-finite observation coordinates");
      }
    }
    std::sort(gt_points.begin(), gt_points.end(),
              [](const GtPoint& a, const GtPoint& b) { return a.id < b.id; });
  }
};

/// Cameras and observations of a node list, aligned for triangulation.
struct AlignedViews {
  std::vector<const CameraPose*> cams;
  std::vector<Vec2> pts;
};

inline AlignedViews gather(const Scene& scene, const std::vector<NodeId>& nodes) {
  AlignedViews out;
  out.cams.reserve(nodes.size());
  out.pts.reserve(nodes.size());
  for (const NodeId& n : nodes) {
    out.cams.push_back(&scene.camera(n.view));
    out.pts.push_back(scene.xy(n));
  }
  return out;
}

inline Point3D triangulate_nodes(const Scene& scene, std::vector<NodeId> nodes) {
  std::sort(nodes.begin(), nodes.end());  // result independent of member order
  const AlignedViews v = gather(scene, nodes);
  return triangulate(std::span<const CameraPose* const>(v.cams), std::span<const Vec2>(v.pts));
}

}  // namespace cdog
