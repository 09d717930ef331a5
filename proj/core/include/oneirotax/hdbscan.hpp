#pragma once

#include <cstddef>
#include <vector>

#include "oneirotax/embedding.hpp"

namespace oneirotax {

struct HdbscanParams {
    std::size_t min_cluster_size = 100;
    std::size_t min_samples = 0;  // 0: same as min_cluster_size
};

/// One row of the condensed cluster tree. `child` is a point index when
/// child_size == 1, otherwise a cluster id (ids start at n_points).
struct CondensedEdge {
    std::size_t parent = 0;
    std::size_t child = 0;
    double lambda = 0.0;  // 1 / distance at which the child leaves the parent
    std::size_t child_size = 0;
};

struct HdbscanResult {
    std::vector<int> labels;  // -1 noise, else 0..n_clusters-1
    std::size_t n_clusters = 0;
    std::vector<CondensedEdge> condensed_tree;
    std::vector<double> cluster_stability;  // indexed by selected label
};

/// Hierarchical density clustering: core distances, mutual-reachability
/// minimum spanning tree (Prim, dense), single-linkage hierarchy, condensed
/// tree and excess-of-mass selection. The root is never selected, so a
/// single homogeneous cloud yields noise only. Deterministic: ties resolve
/// to the lower point index. Labels are numbered in the order selected
/// clusters appear in the condensed tree.
HdbscanResult hdbscan(const EmbeddingMatrix& points, const HdbscanParams& params);

}  // namespace oneirotax
