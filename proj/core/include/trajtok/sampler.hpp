#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "trajtok/clustering.hpp"
#include "trajtok/trajectory.hpp"

namespace trajtok {

struct SeedPoint {
  float x = 0, y = 0;  // normalized coordinates
  int t0 = 0;          // frame the point is seeded at
  int cluster = -1;    // -1 for grid seeds
};

struct SeedPoints {
  std::vector<SeedPoint> points;
  std::size_t size() const { return points.size(); }
};

// Per-cluster point budget: floor(M / L) each, remainder to the largest
// clusters by member count (ties to the lower cluster id). Always sums to M.
std::vector<std::size_t> semantic_quotas(std::size_t M, const std::vector<std::size_t>& member_counts);

// Draws each cluster's quota uniformly without replacement from the member
// token centers at the cluster's first frame. Clusters with fewer members
// than their quota sample with replacement; duplicate picks are jittered by
// +-0.25 patch.
SeedPoints sample_semantic(const ClusterAssignment& assignment, std::size_t M, std::uint64_t seed);

// sqrt(M) x sqrt(M) grid of patch-cell centers, all at frame t0.
SeedPoints sample_uniform_grid(std::size_t M, int t0);

// Snaps every seed to the nearest source track at the seed's t0 and inherits
// that track's path; frames before t0 hold the t0 position (zero
// displacement, which the descriptors encode as empty histogram mass).
TrajectorySet track_points(const SeedPoints& seeds, const TrajectorySet& source);

void write_seeds(const std::filesystem::path& path, const SeedPoints& seeds);
SeedPoints read_seeds(const std::filesystem::path& path);

}  // namespace trajtok
