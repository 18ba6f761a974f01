#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "cdog/graph.hpp"
#include "cdog/pipeline.hpp"
#include "cdog/scene.hpp"

namespace cdog {

struct SymmetricEdge {
  double distance = 0.0;
  int u = 0;  // dense node indices, u < v
  int v = 0;

  friend bool operator<(const SymmetricEdge& a, const SymmetricEdge& b) {
    return std::tie(a.distance, a.u, a.v) < std::tie(b.distance, b.u, b.v);
  }
};

/// Every cross-view pair whose mean two-way epipolar distance is below tau,
/// sorted by (distance, u, v).
inline std::vector<SymmetricEdge> symmetric_edges(const Scene& scene, double tau) {
  const auto F = pairwise_fundamentals(scene);
  std::vector<int> offset(scene.num_views() + 1, 0);
  for (std::size_t k = 0; k < scene.num_views(); ++k)
    offset[k + 1] = offset[k] + static_cast<int>(scene.observations[k].size());

  std::vector<SymmetricEdge> edges;
  for (std::size_t a = 0; a < scene.num_views(); ++a) {
    for (std::size_t b = a + 1; b < scene.num_views(); ++b) {
      for (std::size_t i = 0; i < scene.observations[a].size(); ++i) {
        const Vec2& pa = scene.observations[a][i].xy;
        for (std::size_t j = 0; j < scene.observations[b].size(); ++j) {
          const Vec2& pb = scene.observations[b][j].xy;
          const double d = 0.5 * (transfer_distance(F[a][b], pb, pa) + transfer_distance(F[b][a], pa, pb));
          if (d < tau) edges.push_back({d, offset[a] + static_cast<int>(i), offset[b] + static_cast<int>(j)});
        }
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

namespace detail {

/// Union-find whose roots carry the sorted view ids of their set.
class ViewSets {
 public:
  explicit ViewSets(const std::vector<NodeId>& nodes) : parent_(nodes.size()), views_(nodes.size()) {
    std::iota(parent_.begin(), parent_.end(), 0);
    for (std::size_t k = 0; k < nodes.size(); ++k) views_[k] = {nodes[k].view};
  }

  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      parent_[static_cast<std::size_t>(x)] = parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(x)])];
      x = parent_[static_cast<std::size_t>(x)];
    }
    return x;
  }

  bool disjoint_views(int ra, int rb) const {
    const auto& a = views_[static_cast<std::size_t>(ra)];
    const auto& b = views_[static_cast<std::size_t>(rb)];
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
      if (*i < *j) ++i;
      else if (*j < *i) ++j;
      else return false;
    }
    return true;
  }

  /// Joins two roots; returns the surviving root.
  int unite(int ra, int rb) {
    if (ra > rb) std::swap(ra, rb);
    parent_[static_cast<std::size_t>(rb)] = ra;
    auto& va = views_[static_cast<std::size_t>(ra)];
    auto& vb = views_[static_cast<std::size_t>(rb)];
    std::vector<int> merged;
    std::merge(va.begin(), va.end(), vb.begin(), vb.end(), std::back_inserter(merged));
    va = std::move(merged);
    vb.clear();
    return ra;
  }

 private:
  std::vector<int> parent_;
  std::vector<std::vector<int>> views_;
};

inline AssociationResult collect_sets(std::string method, const std::vector<NodeId>& nodes,
                                      const std::vector<int>& set_of, const Scene& scene) {
  AssociationResult result;
  result.method = std::move(method);
  std::map<int, std::vector<NodeId>> sets;
  for (std::size_t k = 0; k < nodes.size(); ++k) sets[set_of[k]].push_back(nodes[k]);
  for (auto& [id, members] : sets) result.groups.push_back({0, std::move(members), false});
  finalize_result(result, scene);
  return result;
}

}  // namespace detail

/// Merges along the globally smallest symmetric epipolar distances, skipping
/// any merge that would put two observations of one view in a group.
inline AssociationResult greedy_associate(const Scene& scene, double tau) {
  detail::Stopwatch total;
  detail::Stopwatch watch;
  const std::vector<NodeId> nodes = scene.node_ids();
  const auto edges = symmetric_edges(scene, tau);
  const double init_ms = watch.lap_ms();

  detail::ViewSets sets(nodes);
  for (const SymmetricEdge& e : edges) {
    const int ra = sets.find(e.u);
    const int rb = sets.find(e.v);
    if (ra != rb && sets.disjoint_views(ra, rb)) sets.unite(ra, rb);
  }
  std::vector<int> set_of(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) set_of[k] = sets.find(static_cast<int>(k));
  AssociationResult result = detail::collect_sets("greedy", nodes, set_of, scene);
  result.tau = tau;
  result.timings.init_ms = init_ms;
  result.timings.prune_ms = watch.lap_ms();
  result.timings.total_ms = total.lap_ms();
  return result;
}

/// Connected components of the thresholded symmetric-distance graph. A
/// component that holds two observations of one view is split by removing
/// its longest edges until every piece is valid; this equals cutting the
/// single-linkage dendrogram at its maximal valid clusters.
inline AssociationResult cca_associate(const Scene& scene, double tau) {
  detail::Stopwatch total;
  detail::Stopwatch watch;
  const std::vector<NodeId> nodes = scene.node_ids();
  const auto edges = symmetric_edges(scene, tau);
  const double init_ms = watch.lap_ms();

  const int n = static_cast<int>(nodes.size());
  detail::ViewSets sets(nodes);
  // Per root: still one-per-view? Invalid roots freeze their valid children.
  std::vector<char> valid(static_cast<std::size_t>(n), 1);
  std::vector<int> final_cluster(static_cast<std::size_t>(n), -1);  // frozen cluster root per node
  std::vector<std::vector<int>> members(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) members[static_cast<std::size_t>(k)] = {k};

  auto freeze = [&](int root) {
    for (int m : members[static_cast<std::size_t>(root)]) final_cluster[static_cast<std::size_t>(m)] = root;
  };

  for (const SymmetricEdge& e : edges) {
    const int ra = sets.find(e.u);
    const int rb = sets.find(e.v);
    if (ra == rb) continue;
    const bool va = valid[static_cast<std::size_t>(ra)];
    const bool vb = valid[static_cast<std::size_t>(rb)];
    const bool ok = va && vb && sets.disjoint_views(ra, rb);
    if (!ok) {
      if (va) freeze(ra);
      if (vb) freeze(rb);
    }
    const int root = sets.unite(ra, rb);
    const int other = root == ra ? rb : ra;
    auto& keep = members[static_cast<std::size_t>(root)];
    auto& gone = members[static_cast<std::size_t>(other)];
    if (ok) keep.insert(keep.end(), gone.begin(), gone.end());
    else keep.clear();  // an invalid cluster never becomes a group
    gone.clear();
    gone.shrink_to_fit();
    valid[static_cast<std::size_t>(root)] = ok;
  }
  std::vector<int> set_of(nodes.size());
  for (int k = 0; k < n; ++k) {
    const int root = sets.find(k);
    set_of[static_cast<std::size_t>(k)] =
        valid[static_cast<std::size_t>(root)] ? root : final_cluster[static_cast<std::size_t>(k)];
  }
  AssociationResult result = detail::collect_sets("cca", nodes, set_of, scene);
  result.tau = tau;
  result.timings.init_ms = init_ms;
  result.timings.prune_ms = watch.lap_ms();
  result.timings.total_ms = total.lap_ms();
  return result;
}

/// Any association method: (scene, config) -> result.
using Associator = std::function<AssociationResult(const Scene&, const CdogConfig&)>;

/// Name -> method table. Extra methods can be added with add().
class MethodRegistry {
 public:
  static MethodRegistry with_defaults() {
    MethodRegistry r;
    r.add("cdog", [](const Scene& s, const CdogConfig& c) { return associate(s, c); });
    r.add("greedy", [](const Scene& s, const CdogConfig& c) {
      const double sigma = resolve_sigma(s, c);
      AssociationResult res = greedy_associate(s, threshold_from_sigma(sigma, c.tau_alpha, c.tau_min));
      res.sigma = sigma;
      return res;
    });
    r.add("cca", [](const Scene& s, const CdogConfig& c) {
      const double sigma = resolve_sigma(s, c);
      AssociationResult res = cca_associate(s, threshold_from_sigma(sigma, c.tau_alpha, c.tau_min));
      res.sigma = sigma;
      return res;
    });
    return r;
  }

  void add(std::string name, Associator fn) { methods_[std::move(name)] = std::move(fn); }

  bool contains(const std::string& name) const { return methods_.contains(name); }

  AssociationResult run(const std::string& name, const Scene& scene, const CdogConfig& cfg) const {
    const auto it = methods_.find(name);
    if (it == methods_.end()) throw Error("unknown method '" + name + "'");
    return it->second(scene, cfg);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, fn] : methods_) out.push_back(name);
    return out;
  }

 private:
  std::map<std::string, Associator> methods_;
};

}  // namespace cdog
