#pragma once

#include <filesystem>
#include <utility>

#include "trajtok/tensor.hpp"

namespace trajtok {

// M point tracks over T frames. Coordinates are normalized to [0,1] by the
// frame width/height so descriptors are resolution independent; frame_dims
// keeps the pixel provenance.
struct TrajectorySet {
  Tensor points;      // M x T x 2 (x, y)
  Tensor visibility;  // M x T, values in {0, 1}
  std::pair<int, int> frame_dims{0, 0};  // (width_px, height_px)

  std::size_t num_tracks() const { return points.empty() ? 0 : points.dim(0); }
  std::size_t num_frames() const { return points.empty() ? 0 : points.dim(1); }

  void validate() const;
};

// On disk a trajectory set is a single TROK tensor of shape M x T x 3 with
// channels (x, y, visibility).
void write_trajectories(const std::filesystem::path& path, const TrajectorySet& ts);
TrajectorySet read_trajectories(const std::filesystem::path& path);

// Appearance token grid.
struct FeatureVolume {
  Tensor features;  // H x W x T x C

  std::size_t height() const { return features.dim(0); }
  std::size_t width() const { return features.dim(1); }
  std::size_t frames() const { return features.dim(2); }
  std::size_t channels() const { return features.dim(3); }

  void validate() const;
};

FeatureVolume read_features(const std::filesystem::path& path);

}  // namespace trajtok
