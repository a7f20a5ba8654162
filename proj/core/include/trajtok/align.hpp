#pragma once

#include "trajtok/motion.hpp"
#include "trajtok/tensor.hpp"
#include "trajtok/trajectory.hpp"

namespace trajtok {

enum class Interp { Bilinear, Nearest };

// Samples the appearance token at each trajectory coordinate. Normalized
// (x, y) maps to continuous patch-grid coordinates (x*W - 0.5, y*H - 0.5);
// bilinear blends the four surrounding tokens with edge clamping. Output is
// the raw M x T x C_app tokens, before any projection.
Tensor sample_trajectory_tokens(const FeatureVolume& fv, const TrajectorySet& traj,
                                Interp interp = Interp::Bilinear, int threads = 1);

// Trajectory-aligned appearance tokens in the model dimension: sample, then
// apply the appearance projection per (m, t) row.
Tensor align_tokens(const FeatureVolume& fv, const TrajectorySet& traj,
                    const LinearLayer& app_proj, Interp interp = Interp::Bilinear, int threads = 1);

// Element-wise sum of the appearance, intra-motion and inter-motion token
// tensors (all M x T x C).
template <typename T>
TensorT<T> fuse(const TensorT<T>& appearance, const TensorT<T>& intra, const TensorT<T>& inter);

using FusedTokens = Tensor;

}  // namespace trajtok
