#include "trajtok/align.hpp"

#include <algorithm>
#include <cmath>

#include "trajtok/parallel.hpp"

namespace trajtok {

Tensor sample_trajectory_tokens(const FeatureVolume& fv, const TrajectorySet& traj, Interp interp,
                                int threads) {
  fv.validate();
  const std::size_t M = traj.num_tracks();
  const std::size_t T = traj.num_frames();
  if (T != fv.frames())
    raise(ErrorCode::ShapeError, "trajectory frames " + std::to_string(T) +
                                     " do not match feature volume frames " +
                                     std::to_string(fv.frames()));
  const std::size_t H = fv.height(), W = fv.width(), C = fv.channels();
  Tensor out({M, T, C});

  parallel_for(M, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t m = begin; m < end; ++m) {
      for (std::size_t t = 0; t < T; ++t) {
        const float gx = traj.points(m, t, 0) * static_cast<float>(W) - 0.5f;
        const float gy = traj.points(m, t, 1) * static_cast<float>(H) - 0.5f;
        float* dst = out.data() + out.offset(m, t, std::size_t(0));
        if (interp == Interp::Nearest) {
          const auto w = static_cast<std::size_t>(
              std::clamp<long>(std::lround(gx), 0, static_cast<long>(W) - 1));
          const auto h = static_cast<std::size_t>(
              std::clamp<long>(std::lround(gy), 0, static_cast<long>(H) - 1));
          const float* src = fv.features.data() + fv.features.offset(h, w, t, std::size_t(0));
          std::copy(src, src + C, dst);
          continue;
        }
        const float fx = std::floor(gx);
        const float fy = std::floor(gy);
        const float wx = gx - fx;
        const float wy = gy - fy;
        const auto clamp_w = [&](long v) {
          return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(W) - 1));
        };
        const auto clamp_h = [&](long v) {
          return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(H) - 1));
        };
        const std::size_t x0 = clamp_w(static_cast<long>(fx));
        const std::size_t x1 = clamp_w(static_cast<long>(fx) + 1);
        const std::size_t y0 = clamp_h(static_cast<long>(fy));
        const std::size_t y1 = clamp_h(static_cast<long>(fy) + 1);
        const float* p00 = fv.features.data() + fv.features.offset(y0, x0, t, std::size_t(0));
        const float* p01 = fv.features.data() + fv.features.offset(y0, x1, t, std::size_t(0));
        const float* p10 = fv.features.data() + fv.features.offset(y1, x0, t, std::size_t(0));
        const float* p11 = fv.features.data() + fv.features.offset(y1, x1, t, std::size_t(0));
        const float w00 = (1.0f - wx) * (1.0f - wy);
        const float w01 = wx * (1.0f - wy);
        const float w10 = (1.0f - wx) * wy;
        const float w11 = wx * wy;
        for (std::size_t c = 0; c < C; ++c)
          dst[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
      }
    }
  });
  return out;
}

Tensor align_tokens(const FeatureVolume& fv, const TrajectorySet& traj, const LinearLayer& app_proj,
                    Interp interp, int threads) {
  if (app_proj.in_dim() != fv.channels())
    raise(ErrorCode::ShapeError, "appearance projection expects in_dim " +
                                     std::to_string(fv.channels()));
  return apply_rows(app_proj, sample_trajectory_tokens(fv, traj, interp, threads), threads);
}

template <typename T>
TensorT<T> fuse(const TensorT<T>& appearance, const TensorT<T>& intra, const TensorT<T>& inter) {
  if (!appearance.same_shape(intra) || !appearance.same_shape(inter))
    raise(ErrorCode::ShapeError, "fuse inputs must share one shape; got " + appearance.shape_str() +
                                     ", " + intra.shape_str() + ", " + inter.shape_str());
  TensorT<T> out(appearance.shape());
  // double accumulation keeps the sum exactly invariant under permutations
  // of the three inputs (pairwise float sums are exact in double)
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(static_cast<double>(appearance[i]) + static_cast<double>(intra[i]) +
                            static_cast<double>(inter[i]));
  return out;
}

template TensorT<float> fuse<float>(const TensorT<float>&, const TensorT<float>&,
                                    const TensorT<float>&);
template TensorT<double> fuse<double>(const TensorT<double>&, const TensorT<double>&,
                                      const TensorT<double>&);

}  // namespace trajtok
