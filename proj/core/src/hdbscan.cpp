#include "flsim/hdbscan.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace flsim {
namespace {

constexpr double kDistFloor = 1e-12;  // keeps lambda = 1/d finite at d == 0

double to_lambda(double d) { return 1.0 / std::max(d, kDistFloor); }

struct DendroNode {
  int left = -1;   // node id: leaves are [0,n), internals [n, 2n-1)
  int right = -1;
  double dist = 0.0;
  int size = 1;
};

struct Condensed {
  std::vector<int> parent;          // per cluster, -1 for root
  std::vector<double> birth;        // per cluster, birth lambda
  std::vector<double> stability;    // per cluster
  std::vector<std::vector<int>> children;
  std::vector<int> exit_cluster;    // per point
  std::vector<double> exit_lambda;  // per point
};

std::vector<std::size_t> collect_leaves(const std::vector<DendroNode>& nodes, int node,
                                        std::size_t n) {
  std::vector<std::size_t> out;
  std::vector<int> stack{node};
  while (!stack.empty()) {
    int cur = stack.back();
    stack.pop_back();
    if (cur < static_cast<int>(n)) {
      out.push_back(static_cast<std::size_t>(cur));
    } else {
      const auto& nd = nodes[static_cast<std::size_t>(cur)];
      stack.push_back(nd.left);
      stack.push_back(nd.right);
    }
  }
  return out;
}

}  // namespace

HdbscanResult hdbscan_largest_cluster(const std::vector<double>& distances, std::size_t n,
                                      std::size_t min_cluster_size) {
  if (n == 0) throw std::invalid_argument("hdbscan: no points");
  if (min_cluster_size < 2) throw std::invalid_argument("hdbscan: min_cluster_size must be >= 2");
  if (distances.size() != n * n) {
    throw std::invalid_argument("hdbscan: distance matrix size does not match point count");
  }
  for (double d : distances) {
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw std::invalid_argument("hdbscan: distances must be finite and non-negative");
    }
  }

  HdbscanResult result;
  if (n < min_cluster_size) {
    result.degenerate = true;
    result.members.resize(n);
    for (std::size_t i = 0; i < n; ++i) result.members[i] = i;
    return result;
  }

  auto dist = [&](std::size_t i, std::size_t j) { return distances[i * n + j]; };

  // Core distance: k-th nearest among the other points.
  const std::size_t k = std::min(min_cluster_size, n - 1);
  std::vector<double> core(n);
  {
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
      row.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) row.push_back(dist(i, j));
      }
      std::sort(row.begin(), row.end());
      core[i] = row[k - 1];
    }
  }

  auto mreach = [&](std::size_t i, std::size_t j) {
    return std::max({core[i], core[j], dist(i, j)});
  };

  // Single-linkage merge tree over the mutual-reachability graph: walk the
  // full edge list sorted by (weight, smaller index, larger index) and union
  // components (Kruskal; the accepted edges form the minimum spanning tree).
  // Sorting by index pair pins the merge order under equal weights, so the
  // tree is a pure function of the distance matrix.
  struct Edge {
    std::size_t a, b;
    double w;
  };
  std::vector<Edge> edges;
  edges.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back({i, j, mreach(i, j)});
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    return std::tie(x.w, x.a, x.b) < std::tie(y.w, y.a, y.b);
  });

  std::vector<DendroNode> nodes(2 * n - 1);
  {
    std::vector<int> uf(2 * n - 1);
    for (std::size_t i = 0; i < uf.size(); ++i) uf[i] = static_cast<int>(i);
    std::vector<int> comp_node(2 * n - 1);
    for (std::size_t i = 0; i < comp_node.size(); ++i) comp_node[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int x) {
      while (uf[static_cast<std::size_t>(x)] != x) {
        uf[static_cast<std::size_t>(x)] =
            uf[static_cast<std::size_t>(uf[static_cast<std::size_t>(x)])];
        x = uf[static_cast<std::size_t>(x)];
      }
      return x;
    };
    int next = static_cast<int>(n);
    for (const auto& e : edges) {
      int ra = find(static_cast<int>(e.a));
      int rb = find(static_cast<int>(e.b));
      if (ra == rb) continue;
      DendroNode nd;
      nd.left = comp_node[static_cast<std::size_t>(ra)];
      nd.right = comp_node[static_cast<std::size_t>(rb)];
      nd.dist = e.w;
      nd.size = nodes[static_cast<std::size_t>(nd.left)].size +
                nodes[static_cast<std::size_t>(nd.right)].size;
      nodes[static_cast<std::size_t>(next)] = nd;
      uf[static_cast<std::size_t>(ra)] = next;
      uf[static_cast<std::size_t>(rb)] = next;
      comp_node[static_cast<std::size_t>(next)] = next;
      ++next;
    }
  }
  const int root_node = static_cast<int>(2 * n - 2);

  // Condensed tree: walk top-down, spawning child clusters only at splits
  // where both sides reach min_cluster_size; smaller sides fall out as noise.
  Condensed ct;
  ct.parent.push_back(-1);
  ct.birth.push_back(0.0);
  ct.stability.push_back(0.0);
  ct.children.emplace_back();
  ct.exit_cluster.assign(n, 0);
  ct.exit_lambda.assign(n, 0.0);

  struct Item {
    int node;
    int cluster;
  };
  std::vector<Item> stack{{root_node, 0}};
  const int mcs = static_cast<int>(min_cluster_size);
  while (!stack.empty()) {
    Item it = stack.back();
    stack.pop_back();
    const DendroNode& nd = nodes[static_cast<std::size_t>(it.node)];
    const double lam = to_lambda(nd.dist);
    const int sl = nodes[static_cast<std::size_t>(nd.left)].size;
    const int sr = nodes[static_cast<std::size_t>(nd.right)].size;
    auto drop_points = [&](int sub) {
      for (std::size_t p : collect_leaves(nodes, sub, n)) {
        ct.exit_cluster[p] = it.cluster;
        ct.exit_lambda[p] = lam;
        ct.stability[static_cast<std::size_t>(it.cluster)] +=
            lam - ct.birth[static_cast<std::size_t>(it.cluster)];
      }
    };
    auto descend = [&](int sub, int cluster) {
      if (sub < static_cast<int>(n)) {
        // A bare point can only continue as its own cluster at a true split,
        // which requires size >= mcs >= 2, so this branch never runs.
        ct.exit_cluster[static_cast<std::size_t>(sub)] = cluster;
        ct.exit_lambda[static_cast<std::size_t>(sub)] = lam;
        return;
      }
      stack.push_back({sub, cluster});
    };
    if (sl >= mcs && sr >= mcs) {
      ct.stability[static_cast<std::size_t>(it.cluster)] +=
          (sl + sr) * (lam - ct.birth[static_cast<std::size_t>(it.cluster)]);
      for (int side = 0; side < 2; ++side) {
        int sub = side == 0 ? nd.left : nd.right;
        int cl = static_cast<int>(ct.parent.size());
        ct.parent.push_back(it.cluster);
        ct.birth.push_back(lam);
        ct.stability.push_back(0.0);
        ct.children.emplace_back();
        ct.children[static_cast<std::size_t>(it.cluster)].push_back(cl);
        descend(sub, cl);
      }
    } else if (sl >= mcs) {
      drop_points(nd.right);
      descend(nd.left, it.cluster);
    } else if (sr >= mcs) {
      drop_points(nd.left);
      descend(nd.right, it.cluster);
    } else {
      drop_points(nd.left);
      drop_points(nd.right);
    }
  }

  // Excess-of-mass selection, root allowed to compete.
  const std::size_t num_clusters = ct.parent.size();
  std::vector<double> subtree(num_clusters, 0.0);
  std::vector<bool> selected(num_clusters, false);
  for (std::size_t c = num_clusters; c-- > 0;) {
    if (ct.children[c].empty()) {
      selected[c] = true;
      subtree[c] = ct.stability[c];
    } else {
      double child_sum = 0.0;
      for (int ch : ct.children[c]) child_sum += subtree[static_cast<std::size_t>(ch)];
      if (child_sum > ct.stability[c]) {
        selected[c] = false;
        subtree[c] = child_sum;
      } else {
        selected[c] = true;
        subtree[c] = ct.stability[c];
      }
    }
  }
  std::vector<int> chosen;
  {
    std::vector<int> walk{0};
    while (!walk.empty()) {
      int c = walk.back();
      walk.pop_back();
      if (selected[static_cast<std::size_t>(c)]) {
        chosen.push_back(c);
      } else {
        for (int ch : ct.children[static_cast<std::size_t>(c)]) walk.push_back(ch);
      }
    }
    std::sort(chosen.begin(), chosen.end());
  }

  std::vector<std::vector<std::size_t>> members_of(num_clusters);
  if (chosen.size() == 1 && chosen[0] == 0) {
    // Sole-root case: keep only points whose exit lambda reaches the largest
    // lambda recorded directly under the root.
    double threshold = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (ct.exit_cluster[p] == 0) threshold = std::max(threshold, ct.exit_lambda[p]);
    }
    for (int ch : ct.children[0]) {
      threshold = std::max(threshold, ct.birth[static_cast<std::size_t>(ch)]);
    }
    for (std::size_t p = 0; p < n; ++p) {
      if (ct.exit_lambda[p] >= threshold) members_of[0].push_back(p);
    }
  } else {
    std::vector<bool> is_chosen(num_clusters, false);
    for (int c : chosen) is_chosen[static_cast<std::size_t>(c)] = true;
    for (std::size_t p = 0; p < n; ++p) {
      int c = ct.exit_cluster[p];
      while (c != -1 && !is_chosen[static_cast<std::size_t>(c)]) {
        c = ct.parent[static_cast<std::size_t>(c)];
      }
      if (c != -1) members_of[static_cast<std::size_t>(c)].push_back(p);
    }
  }

  std::size_t best = num_clusters;
  for (int c : chosen) {
    const auto& m = members_of[static_cast<std::size_t>(c)];
    if (m.empty()) continue;
    if (best == num_clusters) {
      best = static_cast<std::size_t>(c);
      continue;
    }
    const auto& bm = members_of[best];
    if (m.size() > bm.size() || (m.size() == bm.size() && m.front() < bm.front())) {
      best = static_cast<std::size_t>(c);
    }
  }
  if (best != num_clusters) result.members = members_of[best];
  return result;
}

}  // namespace flsim
