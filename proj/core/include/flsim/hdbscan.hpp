#pragma once

#include <cstddef>
#include <vector>

namespace flsim {

struct HdbscanResult {
  // Ascending indices of the largest extracted cluster (noise excluded).
  std::vector<std::size_t> members;
  // True when there were fewer points than min_cluster_size; members then
  // contains every point.
  bool degenerate = false;
};

// Density clustering over a precomputed symmetric distance matrix
// (row-major n x n), with min_samples = min_cluster_size:
//   1. core distance of a point = distance to its min(min_cluster_size, n-1)-th
//      nearest other point;
//   2. mutual-reachability graph, minimum spanning tree, single-linkage merge
//      tree (ties broken by smallest index pair);
//   3. condensed tree at min_cluster_size, cluster stabilities in lambda = 1/d
//      space, excess-of-mass flat extraction with the root allowed to compete;
//   4. when the root is the sole selected cluster, only points whose exit
//      lambda reaches the largest exit lambda under the root are members
//      (so one early-merging outlier is noise, while a single uniform blob
//      whose points all exit together is kept whole).
// Returns the largest selected cluster; ties prefer the cluster containing
// the smallest member index.
HdbscanResult hdbscan_largest_cluster(const std::vector<double>& distances, std::size_t n,
                                      std::size_t min_cluster_size);

}  // namespace flsim
