#include "trajtok/trajectory.hpp"

#include "trajtok/tensor_io.hpp"

namespace trajtok {

void TrajectorySet::validate() const {
  if (points.rank() != 3 || points.dim(2) != 2)
    raise(ErrorCode::ShapeError, "trajectory points must be M x T x 2, got " + points.shape_str());
  const std::size_t m = points.dim(0);
  const std::size_t t = points.dim(1);
  if (t < 2) raise(ErrorCode::ShapeError, "trajectories need T >= 2 frames");
  if (visibility.rank() != 2 || visibility.dim(0) != m || visibility.dim(1) != t)
    raise(ErrorCode::ShapeError, "visibility must be M x T matching points");
  points.ensure_finite("trajectory points");
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      const float vis = visibility(i, j);
      if (vis != 0.0f && vis != 1.0f)
        raise(ErrorCode::ShapeError, "visibility values must be 0 or 1");
      if (vis == 1.0f) {
        const float x = points(i, j, 0);
        const float y = points(i, j, 1);
        if (x < 0.0f || x > 1.0f || y < 0.0f || y > 1.0f)
          raise(ErrorCode::ShapeError, "visible point outside [0,1]^2 at track " + std::to_string(i));
      }
    }
  }
}

void write_trajectories(const std::filesystem::path& path, const TrajectorySet& ts) {
  ts.validate();
  const std::size_t m = ts.num_tracks();
  const std::size_t t = ts.num_frames();
  Tensor packed({m, t, 3});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      packed(i, j, 0) = ts.points(i, j, 0);
      packed(i, j, 1) = ts.points(i, j, 1);
      packed(i, j, 2) = ts.visibility(i, j);
    }
  }
  write_tensor(path, packed);
}

TrajectorySet read_trajectories(const std::filesystem::path& path) {
  Tensor packed = read_tensor(path);
  if (packed.rank() != 3 || packed.dim(2) != 3)
    raise(ErrorCode::ShapeError, "trajectory file must hold an M x T x 3 tensor: " + path.string());
  const std::size_t m = packed.dim(0);
  const std::size_t t = packed.dim(1);
  TrajectorySet ts;
  ts.points = Tensor({m, t, 2});
  ts.visibility = Tensor({m, t});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      ts.points(i, j, 0) = packed(i, j, 0);
      ts.points(i, j, 1) = packed(i, j, 1);
      ts.visibility(i, j) = packed(i, j, 2);
    }
  }
  ts.validate();
  return ts;
}

void FeatureVolume::validate() const {
  if (features.rank() != 4)
    raise(ErrorCode::ShapeError, "feature volume must be H x W x T x C, got " + features.shape_str());
  features.ensure_finite("feature volume");
}

FeatureVolume read_features(const std::filesystem::path& path) {
  FeatureVolume fv{read_tensor(path)};
  fv.validate();
  return fv;
}

}  // namespace trajtok
