#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "cdog/geometry.hpp"
#include "cdog/scene.hpp"

namespace cdog {

/// Epipolar gate tau = alpha * sqrt(2) * sigma, never below `tau_min`.
inline double threshold_from_sigma(double sigma, double alpha, double tau_min = 1.0) {
  const double tau = alpha * std::numbers::sqrt2 * sigma;
  return std::max(tau, tau_min);
}

struct Edge {
  int from = 0;  // dense node indices
  int to = 0;
  double weight = 0.0;
};

struct AssociationGroup {
  int id = 0;
  std::vector<NodeId> members;  // sorted
  bool isolated = false;        // singleton component, i.e. an outlier
};

/// Directed candidate-match graph over a scene's observations. Nodes are
/// addressed densely in canonical NodeId order; the undirected adjacency is
/// the union of both edge directions.
class AssociationGraph {
 public:
  AssociationGraph() = default;

  explicit AssociationGraph(std::vector<NodeId> nodes) : nodes_(std::move(nodes)), adjacency_(nodes_.size()) {
    std::sort(nodes_.begin(), nodes_.end());
  }

  std::size_t num_nodes() const { return nodes_.size(); }
  const std::vector<NodeId>& nodes() const { return nodes_; }
  const NodeId& node(int u) const { return nodes_[static_cast<std::size_t>(u)]; }
  const std::vector<Edge>& edges() const { return edges_; }

  int find(const NodeId& id) const {
    const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id);
    if (it == nodes_.end() || *it != id) return -1;
    return static_cast<int>(it - nodes_.begin());
  }

  /// Undirected neighbors of u, sorted ascending (open neighborhood).
  std::span<const int> neighbors(int u) const { return adjacency_[static_cast<std::size_t>(u)]; }

  bool connected(int u, int v) const {
    const auto n = neighbors(u);
    return std::binary_search(n.begin(), n.end(), v);
  }

  void add_edge(int from, int to, double weight) {
    edges_.push_back({from, to, weight});
    link(from, to);
    link(to, from);
  }

  /// Drops both directions of every listed undirected pair (u < v).
  void remove_pairs(std::vector<std::pair<int, int>> pairs) {
    if (pairs.empty()) return;
    std::sort(pairs.begin(), pairs.end());
    auto doomed = [&](int a, int b) {
      return std::binary_search(pairs.begin(), pairs.end(), std::pair{std::min(a, b), std::max(a, b)});
    };
    std::erase_if(edges_, [&](const Edge& e) { return doomed(e.from, e.to); });
    for (const auto& [a, b] : pairs) {
      std::erase(adjacency_[static_cast<std::size_t>(a)], b);
      std::erase(adjacency_[static_cast<std::size_t>(b)], a);
    }
  }

  /// Distinct undirected pairs (u < v) in ascending order.
  std::vector<std::pair<int, int>> undirected_pairs() const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t u = 0; u < adjacency_.size(); ++u)
      for (int v : adjacency_[u])
        if (static_cast<int>(u) < v) out.emplace_back(static_cast<int>(u), v);
    return out;
  }

 private:
  void link(int a, int b) {
    auto& n = adjacency_[static_cast<std::size_t>(a)];
    const auto it = std::lower_bound(n.begin(), n.end(), b);
    if (it == n.end() || *it != b) n.insert(it, b);
  }

  std::vector<NodeId> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
};

/// fundamentals[a][b] = fundamental_matrix(cameras[a], cameras[b]) for a != b.
inline std::vector<std::vector<Mat3>> pairwise_fundamentals(const Scene& scene) {
  const std::size_t n = scene.num_views();
  std::vector<std::vector<Mat3>> F(n, std::vector<Mat3>(n, Mat3::Zero()));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (a != b) F[a][b] = fundamental_matrix(scene.cameras[a], scene.cameras[b]);
  return F;
}

/// For each node and each other view, a directed edge to the observation with
/// the smallest epipolar distance, kept only if that distance is below tau.
/// Ties go to the lowest index.
inline AssociationGraph init_graph(const Scene& scene, double tau) {
  AssociationGraph g(scene.node_ids());
  const auto F = pairwise_fundamentals(scene);
  const std::size_t views = scene.num_views();

  std::vector<int> offset(views + 1, 0);
  for (std::size_t k = 0; k < views; ++k)
    offset[k + 1] = offset[k] + static_cast<int>(scene.observations[k].size());

  for (std::size_t m = 0; m < views; ++m) {
    for (std::size_t mp = 0; mp < views; ++mp) {
      if (mp == m) continue;
      const auto& target = scene.observations[mp];
      if (target.empty()) continue;
      // Line in view m' of a point in view m: F(m', m) * x_m.
      const Mat3& F_line = F[mp][m];
      for (std::size_t i = 0; i < scene.observations[m].size(); ++i) {
        const Vec3 abc = F_line * scene.observations[m][i].xy.homogeneous();
        const double norm = std::hypot(abc.x(), abc.y());
        if (norm < kDefaultTolerances.line_direction) continue;  // epipole: no line
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < target.size(); ++j) {
          const Vec2& p = target[j].xy;
          const double d = std::abs(abc.x() * p.x() + abc.y() * p.y() + abc.z()) / norm;
          if (d < best) {
            best = d;
            best_j = j;
          }
        }
        if (best < tau)
          g.add_edge(offset[m] + static_cast<int>(i), offset[mp] + static_cast<int>(best_j), best);
      }
    }
  }
  return g;
}

/// |N[u] ∩ N[v]| / max(|N[u]|, |N[v]|) over closed undirected neighborhoods.
inline double overlap_score(const AssociationGraph& g, int u, int v) {
  const auto nu = g.neighbors(u);
  const auto nv = g.neighbors(v);
  // Closed neighborhoods add u and v themselves.
  std::size_t common = 0;
  auto a = nu.begin();
  auto b = nv.begin();
  while (a != nu.end() && b != nv.end()) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      ++common;
      ++a;
      ++b;
    }
  }
  // Adjacency is symmetric, so u and v are both shared exactly when u ~ v.
  if (g.connected(u, v)) common += 2;
  const std::size_t denom = std::max(nu.size(), nv.size()) + 1;
  return static_cast<double>(common) / static_cast<double>(denom);
}

inline double overlap_score(const AssociationGraph& g, const NodeId& u, const NodeId& v) {
  return overlap_score(g, g.find(u), g.find(v));
}

/// Removes every undirected edge whose overlap score is <= delta. All scores
/// are taken from the unpruned graph before any edge is removed.
inline AssociationGraph prune_weak_edges(AssociationGraph g, double delta) {
  std::vector<std::pair<int, int>> weak;
  for (const auto& [u, v] : g.undirected_pairs())
    if (overlap_score(g, u, v) <= delta) weak.emplace_back(u, v);
  g.remove_pairs(std::move(weak));
  return g;
}

/// Partition by undirected connectivity, ordered by smallest member.
inline std::vector<AssociationGroup> connected_components(const AssociationGraph& g) {
  const int n = static_cast<int>(g.num_nodes());
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  std::vector<AssociationGroup> groups;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    if (label[static_cast<std::size_t>(s)] >= 0) continue;
    AssociationGroup group;
    group.id = static_cast<int>(groups.size());
    label[static_cast<std::size_t>(s)] = group.id;
    stack.push_back(s);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      group.members.push_back(g.node(u));
      for (int v : g.neighbors(u)) {
        if (label[static_cast<std::size_t>(v)] < 0) {
          label[static_cast<std::size_t>(v)] = group.id;
          stack.push_back(v);
        }
      }
    }
    std::sort(group.members.begin(), group.members.end());
    group.isolated = group.members.size() == 1;
    groups.push_back(std::move(group));
  }
  return groups;
}

}  // namespace cdog
