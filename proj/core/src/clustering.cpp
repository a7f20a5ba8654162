#include "trajtok/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "trajtok/rng.hpp"

namespace trajtok {

namespace {

// Token index -> (h, w, t) for the H x W x T layout.
inline int frame_of(std::size_t idx, std::size_t t_dim) { return static_cast<int>(idx % t_dim); }

}  // namespace

ClusterAssignment cluster_tokens(const FeatureVolume& fv, int L, std::uint64_t seed, int max_iters) {
  fv.validate();
  const std::size_t H = fv.height(), W = fv.width(), T = fv.frames(), C = fv.channels();
  const std::size_t n = H * W * T;
  if (L < 1 || static_cast<std::size_t>(L) > n)
    raise(ErrorCode::InvalidClusterCount, "L must be in [1, token count]; got " + std::to_string(L));
  if (max_iters < 1) raise(ErrorCode::ConfigError, "max_iters must be >= 1");

  // L2-normalized token rows. Zero tokens stay zero (cosine distance 1 to
  // every unit centroid).
  std::vector<float> tokens(n * C);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t idx = (h * W + w) * T + t;
        const float* src = fv.features.data() + fv.features.offset(h, w, t, std::size_t(0));
        float* dst = tokens.data() + idx * C;
        double norm = 0;
        for (std::size_t c = 0; c < C; ++c) norm += static_cast<double>(src[c]) * src[c];
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
          std::fill(dst, dst + C, 0.0f);
        } else {
          for (std::size_t c = 0; c < C; ++c) dst[c] = static_cast<float>(src[c] / norm);
        }
      }

  // Canonical token order: lexicographic by value. Reductions and seeding
  // walk this order so the result does not depend on storage order (frame
  // permutations reorder equal-valued tokens only).
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const float* pa = tokens.data() + a * C;
    const float* pb = tokens.data() + b * C;
    for (std::size_t c = 0; c < C; ++c) {
      if (pa[c] < pb[c]) return true;
      if (pa[c] > pb[c]) return false;
    }
    return false;
  });

  // k-means++ over the canonical order, D^2 weighting with cosine distance.
  Rng rng(seed);
  std::vector<double> centroid(static_cast<std::size_t>(L) * C);
  std::vector<double> min_dist(n, 1.0);
  {
    const std::size_t first = order[rng.index(n)];
    for (std::size_t c = 0; c < C; ++c) centroid[c] = tokens[first * C + c];
    for (std::size_t i = 0; i < n; ++i) {
      double d = 1.0;
      double dp = 0;
      for (std::size_t c = 0; c < C; ++c) dp += tokens[i * C + c] * centroid[c];
      d = 1.0 - dp;
      min_dist[i] = std::max(0.0, d);
    }
    for (int k = 1; k < L; ++k) {
      double total = 0;
      for (std::size_t i : order) total += min_dist[i] * min_dist[i];
      std::size_t pick = order[0];
      if (total <= 0) {
        pick = order[rng.index(n)];
      } else {
        const double threshold = rng.uniform() * total;
        double acc = 0;
        for (std::size_t i : order) {
          acc += min_dist[i] * min_dist[i];
          if (acc >= threshold) {
            pick = i;
            break;
          }
        }
      }
      double* ck = centroid.data() + static_cast<std::size_t>(k) * C;
      for (std::size_t c = 0; c < C; ++c) ck[c] = tokens[pick * C + c];
      for (std::size_t i = 0; i < n; ++i) {
        double dp = 0;
        for (std::size_t c = 0; c < C; ++c) dp += tokens[i * C + c] * ck[c];
        min_dist[i] = std::min(min_dist[i], std::max(0.0, 1.0 - dp));
      }
    }
  }

  // Lloyd iterations; always finish on an assignment so labels match the
  // returned centroids exactly.
  std::vector<int> labels(n, -1);
  std::vector<double> objective_history;
  for (int iter = 0;; ++iter) {
    bool changed = false;
    double objective = 0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_dot = -2;
      for (int k = 0; k < L; ++k) {
        double dp = 0;
        const double* ck = centroid.data() + static_cast<std::size_t>(k) * C;
        for (std::size_t c = 0; c < C; ++c) dp += tokens[i * C + c] * ck[c];
        if (dp > best_dot + 1e-15) {
          best_dot = dp;
          best = k;
        }
      }
      objective += 1.0 - best_dot;
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    objective_history.push_back(objective);
    if (!changed || iter + 1 >= max_iters) break;

    // Update step: normalized mean per cluster, accumulated in canonical
    // order. Clusters that lose all members keep their previous centroid.
    std::vector<double> sums(static_cast<std::size_t>(L) * C, 0.0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(L), 0);
    for (std::size_t i : order) {
      const int k = labels[i];
      double* sk = sums.data() + static_cast<std::size_t>(k) * C;
      const float* ti = tokens.data() + i * C;
      for (std::size_t c = 0; c < C; ++c) sk[c] += ti[c];
      ++counts[static_cast<std::size_t>(k)];
    }
    for (int k = 0; k < L; ++k) {
      if (counts[static_cast<std::size_t>(k)] == 0) continue;
      double* sk = sums.data() + static_cast<std::size_t>(k) * C;
      double norm = 0;
      for (std::size_t c = 0; c < C; ++c) norm += sk[c] * sk[c];
      norm = std::sqrt(norm);
      if (norm < 1e-12) continue;
      double* ck = centroid.data() + static_cast<std::size_t>(k) * C;
      for (std::size_t c = 0; c < C; ++c) ck[c] = sk[c] / norm;
    }
  }

  // Drop empty clusters, relabel contiguously preserving id order.
  std::vector<std::size_t> counts(static_cast<std::size_t>(L), 0);
  for (int k : labels) ++counts[static_cast<std::size_t>(k)];
  std::vector<int> remap(static_cast<std::size_t>(L), -1);
  int l_eff = 0;
  for (int k = 0; k < L; ++k)
    if (counts[static_cast<std::size_t>(k)] > 0) remap[static_cast<std::size_t>(k)] = l_eff++;

  ClusterAssignment out;
  out.labels = Tensor({H, W, T});
  out.centroids = Tensor({static_cast<std::size_t>(l_eff), C});
  out.first_frame.assign(static_cast<std::size_t>(l_eff), std::numeric_limits<int>::max());
  out.member_counts.assign(static_cast<std::size_t>(l_eff), 0);
  out.objective_history = std::move(objective_history);

  for (int k = 0; k < L; ++k) {
    const int nk = remap[static_cast<std::size_t>(k)];
    if (nk < 0) continue;
    for (std::size_t c = 0; c < C; ++c)
      out.centroids(static_cast<std::size_t>(nk), c) =
          static_cast<float>(centroid[static_cast<std::size_t>(k) * C + c]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int nk = remap[static_cast<std::size_t>(labels[i])];
    out.labels[i] = static_cast<float>(nk);
    ++out.member_counts[static_cast<std::size_t>(nk)];
    out.first_frame[static_cast<std::size_t>(nk)] =
        std::min(out.first_frame[static_cast<std::size_t>(nk)], frame_of(i, T));
  }
  return out;
}

ClusterAssignment assignment_from_labels(Tensor labels, const FeatureVolume& fv) {
  if (labels.rank() != 3) raise(ErrorCode::ShapeError, "labels must be H x W x T");
  if (labels.dim(0) != fv.height() || labels.dim(1) != fv.width() || labels.dim(2) != fv.frames())
    raise(ErrorCode::ShapeError, "labels shape does not match feature volume");
  const std::size_t T = labels.dim(2);
  const std::size_t C = fv.channels();

  int l_eff = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float v = labels[i];
    const int k = static_cast<int>(v);
    if (v != static_cast<float>(k) || k < 0)
      raise(ErrorCode::ParseError, "labels must hold non-negative integers");
    l_eff = std::max(l_eff, k + 1);
  }

  ClusterAssignment out;
  out.labels = std::move(labels);
  out.first_frame.assign(static_cast<std::size_t>(l_eff), std::numeric_limits<int>::max());
  out.member_counts.assign(static_cast<std::size_t>(l_eff), 0);

  std::vector<double> sums(static_cast<std::size_t>(l_eff) * C, 0.0);
  for (std::size_t h = 0; h < out.labels.dim(0); ++h)
    for (std::size_t w = 0; w < out.labels.dim(1); ++w)
      for (std::size_t t = 0; t < T; ++t) {
        const auto k = static_cast<std::size_t>(out.labels(h, w, t));
        ++out.member_counts[k];
        out.first_frame[k] = std::min(out.first_frame[k], static_cast<int>(t));
        const float* src = fv.features.data() + fv.features.offset(h, w, t, std::size_t(0));
        double norm = 0;
        for (std::size_t c = 0; c < C; ++c) norm += static_cast<double>(src[c]) * src[c];
        norm = std::sqrt(norm);
        if (norm < 1e-12) continue;
        for (std::size_t c = 0; c < C; ++c) sums[k * C + c] += src[c] / norm;
      }
  for (std::size_t k = 0; k < static_cast<std::size_t>(l_eff); ++k)
    if (out.member_counts[k] == 0)
      raise(ErrorCode::ParseError, "label ids must be contiguous (cluster " + std::to_string(k) +
                                       " has no members)");

  out.centroids = Tensor({static_cast<std::size_t>(l_eff), C});
  for (std::size_t k = 0; k < static_cast<std::size_t>(l_eff); ++k) {
    double norm = 0;
    for (std::size_t c = 0; c < C; ++c) norm += sums[k * C + c] * sums[k * C + c];
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < C; ++c)
      out.centroids(k, c) = norm < 1e-12 ? 0.0f : static_cast<float>(sums[k * C + c] / norm);
  }
  return out;
}

double cluster_purity(const ClusterAssignment& assignment, const Tensor& gt_region_mask) {
  if (!assignment.labels.same_shape(gt_region_mask))
    raise(ErrorCode::ShapeError, "assignment labels and ground-truth mask shapes differ");
  const int l_eff = assignment.num_clusters();
  std::vector<std::map<int, std::size_t>> overlap(static_cast<std::size_t>(l_eff));
  for (std::size_t i = 0; i < gt_region_mask.size(); ++i) {
    const auto k = static_cast<std::size_t>(assignment.labels[i]);
    const int region = static_cast<int>(gt_region_mask[i]);
    ++overlap[k][region];
  }
  double purity = 0;
  for (int k = 0; k < l_eff; ++k) {
    std::size_t best = 0;
    for (const auto& [region, count] : overlap[static_cast<std::size_t>(k)])
      best = std::max(best, count);
    purity += static_cast<double>(best) / static_cast<double>(assignment.member_counts[static_cast<std::size_t>(k)]);
  }
  return purity / static_cast<double>(l_eff);
}

}  // namespace trajtok
