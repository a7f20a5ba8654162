#pragma once

#include <cstdint>

#include "trajtok/rng.hpp"
#include "trajtok/tensor.hpp"
#include "trajtok/trajectory.hpp"

namespace trajtok {

struct HodConfig {
  int bins = 32;  // orientation bins over 360 degrees
  int delta = 1;  // temporal interval for displacements
};

// Per-timestep histogram of oriented displacements, M x T x B. Displacement
// at t is p[t] - p[t - delta]; its magnitude is split linearly between the
// two bin centers b * (360/B) enclosing the direction (wrapping between the
// last and first bin). Rows with t < delta are zero, as are zero-magnitude
// displacements. Row sums therefore equal the displacement magnitudes.
Tensor hod_descriptor(const TrajectorySet& traj, const HodConfig& cfg, int threads = 1);

// Raw per-timestep (dx, dy) rows, M x T x 2, zero-padded for t < delta.
// The "displacement only" intra-motion variant.
Tensor displacement_only_descriptor(const TrajectorySet& traj, int delta, int threads = 1);

// Pairwise relative positions, M x T x 2M laid out (dx to track 0, dy to
// track 0, dx to track 1, ...). Self pairs are exactly zero; the descriptor
// is invariant to global translation.
Tensor inter_descriptor(const TrajectorySet& traj, int threads = 1);

template <typename T>
struct LinearLayerT {
  TensorT<T> weight;  // out x in
  TensorT<T> bias;    // out

  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }
};

using LinearLayer = LinearLayerT<float>;

// Uniform init in +-1/sqrt(in_dim).
template <typename T>
LinearLayerT<T> make_linear(std::size_t out_dim, std::size_t in_dim, Rng& rng);

// Affine map applied independently to every (m, t) row of an M x T x in
// tensor, yielding M x T x out.
template <typename T>
TensorT<T> apply_rows(const LinearLayerT<T>& layer, const TensorT<T>& input, int threads = 1);

// Named projections from the descriptor spaces into the model dimension.
template <typename T>
TensorT<T> project_intra(const TensorT<T>& hod, const LinearLayerT<T>& layer, int threads = 1);
template <typename T>
TensorT<T> project_inter(const TensorT<T>& cross, const LinearLayerT<T>& layer, int threads = 1);

}  // namespace trajtok
