#include "trajtok/motion.hpp"

#include <cmath>
#include <numbers>

#include "trajtok/linalg.hpp"
#include "trajtok/parallel.hpp"

namespace trajtok {

namespace {

void check_delta(int delta, std::size_t T) {
  if (delta < 1 || static_cast<std::size_t>(delta) >= T)
    raise(ErrorCode::ConfigError,
          "delta must satisfy 1 <= delta < T; got delta=" + std::to_string(delta) +
              ", T=" + std::to_string(T));
}

}  // namespace

Tensor hod_descriptor(const TrajectorySet& traj, const HodConfig& cfg, int threads) {
  if (cfg.bins < 2) raise(ErrorCode::ConfigError, "need at least 2 orientation bins");
  const std::size_t M = traj.num_tracks();
  const std::size_t T = traj.num_frames();
  check_delta(cfg.delta, T);

  const auto B = static_cast<std::size_t>(cfg.bins);
  const double bin_width = 360.0 / static_cast<double>(cfg.bins);
  Tensor out({M, T, B});
  const auto delta = static_cast<std::size_t>(cfg.delta);

  parallel_for(M, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t m = begin; m < end; ++m) {
      for (std::size_t t = delta; t < T; ++t) {
        const double dx = static_cast<double>(traj.points(m, t, 0)) - traj.points(m, t - delta, 0);
        const double dy = static_cast<double>(traj.points(m, t, 1)) - traj.points(m, t - delta, 1);
        const double mag = std::sqrt(dx * dx + dy * dy);
        if (mag == 0.0) continue;  // direction undefined, contributes nothing
        double deg = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
        if (deg < 0.0) deg += 360.0;
        const double u = deg / bin_width;
        auto lo = static_cast<std::size_t>(u);
        const double frac = u - static_cast<double>(lo);
        lo %= B;  // deg == 360 lands here with frac 0
        const std::size_t hi = (lo + 1) % B;
        out(m, t, lo) += static_cast<float>(mag * (1.0 - frac));
        out(m, t, hi) += static_cast<float>(mag * frac);
      }
    }
  });
  return out;
}

Tensor displacement_only_descriptor(const TrajectorySet& traj, int delta, int threads) {
  const std::size_t M = traj.num_tracks();
  const std::size_t T = traj.num_frames();
  check_delta(delta, T);
  Tensor out({M, T, 2});
  const auto d = static_cast<std::size_t>(delta);
  parallel_for(M, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t m = begin; m < end; ++m)
      for (std::size_t t = d; t < T; ++t) {
        out(m, t, 0) = traj.points(m, t, 0) - traj.points(m, t - d, 0);
        out(m, t, 1) = traj.points(m, t, 1) - traj.points(m, t - d, 1);
      }
  });
  return out;
}

Tensor inter_descriptor(const TrajectorySet& traj, int threads) {
  const std::size_t M = traj.num_tracks();
  const std::size_t T = traj.num_frames();
  if (M < 1) raise(ErrorCode::ShapeError, "need at least one trajectory");
  Tensor out({M, T, 2 * M});
  parallel_for(M, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t m = begin; m < end; ++m)
      for (std::size_t t = 0; t < T; ++t) {
        const float x = traj.points(m, t, 0);
        const float y = traj.points(m, t, 1);
        float* row = out.data() + out.offset(m, t, std::size_t(0));
        for (std::size_t o = 0; o < M; ++o) {
          row[2 * o] = x - traj.points(o, t, 0);
          row[2 * o + 1] = y - traj.points(o, t, 1);
        }
      }
  });
  return out;
}

template <typename T>
LinearLayerT<T> make_linear(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  LinearLayerT<T> layer;
  layer.weight = TensorT<T>({out_dim, in_dim});
  layer.bias = TensorT<T>({out_dim});
  for (std::size_t i = 0; i < layer.weight.size(); ++i)
    layer.weight[i] = static_cast<T>(rng.uniform(-bound, bound));
  for (std::size_t i = 0; i < layer.bias.size(); ++i)
    layer.bias[i] = static_cast<T>(rng.uniform(-bound, bound));
  return layer;
}

template <typename T>
TensorT<T> apply_rows(const LinearLayerT<T>& layer, const TensorT<T>& input, int threads) {
  if (input.rank() != 3)
    raise(ErrorCode::ShapeError, "expected an M x T x D input, got " + input.shape_str());
  if (input.dim(2) != layer.in_dim())
    raise(ErrorCode::ShapeError, "input dim " + std::to_string(input.dim(2)) +
                                     " does not match layer in_dim " + std::to_string(layer.in_dim()));
  const std::size_t rows = input.dim(0) * input.dim(1);
  TensorT<T> out({input.dim(0), input.dim(1), layer.out_dim()});
  affine_rows(input.data(), rows, layer.in_dim(), layer.weight.data(), layer.bias.data(),
              layer.out_dim(), out.data(), threads);
  return out;
}

template <typename T>
TensorT<T> project_intra(const TensorT<T>& hod, const LinearLayerT<T>& layer, int threads) {
  return apply_rows(layer, hod, threads);
}

template <typename T>
TensorT<T> project_inter(const TensorT<T>& cross, const LinearLayerT<T>& layer, int threads) {
  if (cross.rank() == 3 && cross.dim(2) != 2 * cross.dim(0))
    raise(ErrorCode::ShapeError, "cross descriptor last dim must be 2M");
  return apply_rows(layer, cross, threads);
}

template LinearLayerT<float> make_linear<float>(std::size_t, std::size_t, Rng&);
template LinearLayerT<double> make_linear<double>(std::size_t, std::size_t, Rng&);
template TensorT<float> apply_rows<float>(const LinearLayerT<float>&, const TensorT<float>&, int);
template TensorT<double> apply_rows<double>(const LinearLayerT<double>&, const TensorT<double>&, int);
template TensorT<float> project_intra<float>(const TensorT<float>&, const LinearLayerT<float>&, int);
template TensorT<double> project_intra<double>(const TensorT<double>&, const LinearLayerT<double>&, int);
template TensorT<float> project_inter<float>(const TensorT<float>&, const LinearLayerT<float>&, int);
template TensorT<double> project_inter<double>(const TensorT<double>&, const LinearLayerT<double>&, int);

}  // namespace trajtok
