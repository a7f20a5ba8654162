#pragma once

#include <cstdint>
#include <vector>

#include "trajtok/trajectory.hpp"

namespace trajtok {

// Joint clustering of all H*W*T appearance tokens. Labels are contiguous in
// [0, num_clusters()); empty clusters are dropped, so num_clusters() can be
// below the requested L.
struct ClusterAssignment {
  Tensor labels;     // H x W x T, cluster ids stored as f32 integers
  Tensor centroids;  // L_eff x C, unit L2 norm
  std::vector<int> first_frame;            // earliest t with any member
  std::vector<std::size_t> member_counts;  // tokens per cluster
  std::vector<double> objective_history;   // sum of cosine distances per iteration

  int num_clusters() const { return static_cast<int>(member_counts.size()); }
};

// Spherical k-means (cosine distance on L2-normalized tokens) with
// k-means++ seeding. Deterministic for a given seed, and invariant to frame
// permutations of the input: seeding and centroid reductions run over a
// value-sorted token order, not storage order.
ClusterAssignment cluster_tokens(const FeatureVolume& fv, int L, std::uint64_t seed,
                                 int max_iters = 50);

// Rebuilds bookkeeping (centroids, first_frame, member_counts) from a label
// tensor, e.g. one loaded from disk.
ClusterAssignment assignment_from_labels(Tensor labels, const FeatureVolume& fv);

// Mean over clusters of (largest overlap with any ground-truth region) /
// (cluster size). gt_region_mask is H x W x T with integer region ids.
double cluster_purity(const ClusterAssignment& assignment, const Tensor& gt_region_mask);

}  // namespace trajtok
