#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "trajtok/clustering.hpp"
#include "trajtok/rng.hpp"
#include "trajtok/synthgen.hpp"

using namespace trajtok;

namespace {

FeatureVolume constant_volume(std::size_t h, std::size_t w, std::size_t t, std::size_t c, float v) {
  FeatureVolume fv;
  fv.features = Tensor::full({h, w, t, c}, v);
  return fv;
}

FeatureVolume random_volume(std::size_t h, std::size_t w, std::size_t t, std::size_t c,
                            std::uint64_t seed) {
  Rng rng(seed);
  FeatureVolume fv;
  fv.features = Tensor({h, w, t, c});
  for (std::size_t i = 0; i < fv.features.size(); ++i)
    fv.features[i] = static_cast<float>(rng.normal(0, 1));
  return fv;
}

double assignment_objective(const ClusterAssignment& a, const FeatureVolume& fv) {
  const std::size_t H = fv.height(), W = fv.width(), T = fv.frames(), C = fv.channels();
  double obj = 0;
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t t = 0; t < T; ++t) {
        const float* tok = fv.features.data() + fv.features.offset(h, w, t, std::size_t(0));
        double norm = 0;
        for (std::size_t c = 0; c < C; ++c) norm += static_cast<double>(tok[c]) * tok[c];
        norm = std::sqrt(norm);
        const auto k = static_cast<std::size_t>(a.labels(h, w, t));
        double dot = 0;
        for (std::size_t c = 0; c < C; ++c)
          dot += (norm < 1e-12 ? 0.0 : tok[c] / norm) * a.centroids(k, c);
        obj += 1.0 - dot;
      }
  return obj;
}

}  // namespace

TEST_CASE("all-equal tokens collapse to a single cluster") {
  FeatureVolume fv = constant_volume(4, 4, 3, 8, 0.7f);
  ClusterAssignment a = cluster_tokens(fv, 5, 1);
  CHECK(a.num_clusters() == 1);
  for (std::size_t i = 0; i < a.labels.size(); ++i) CHECK(a.labels[i] == 0.0f);
  CHECK(a.first_frame[0] == 0);
  CHECK(a.member_counts[0] == 4 * 4 * 3);
}

TEST_CASE("L=1 gives one cluster with the normalized mean centroid") {
  FeatureVolume fv = random_volume(4, 4, 2, 6, 9);
  ClusterAssignment a = cluster_tokens(fv, 1, 2);
  REQUIRE(a.num_clusters() == 1);
  double norm = 0;
  for (std::size_t c = 0; c < 6; ++c)
    norm += static_cast<double>(a.centroids(0, c)) * a.centroids(0, c);
  CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-5);
}

TEST_CASE("L above the token count is rejected") {
  FeatureVolume fv = random_volume(2, 2, 2, 4, 3);
  try {
    cluster_tokens(fv, 9, 0);
    FAIL("expected InvalidClusterCount");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidClusterCount);
  }
}

TEST_CASE("distinct synthetic scene clusters with purity 1") {
  // two objects plus background, zero noise, L=3
  SceneSpec s;
  s.objects.push_back(ObjectSpec{1, 11, MotionProgram{0, MotionKind::TranslateLR, 0.05f, 0.0f}});
  s.objects.push_back(ObjectSpec{1, 22, MotionProgram{0, MotionKind::Static, 0.0f, 0.0f}});
  s.appearance_mode = AppearanceMode::Distinct;
  VideoSample v = generate_video(s, 31);
  ClusterAssignment a = cluster_tokens(v.features, 3, 5);
  CHECK(a.num_clusters() == 3);
  CHECK(cluster_purity(a, v.region_mask) == doctest::Approx(1.0));
}

TEST_CASE("purity of the ground-truth assignment is 1") {
  VideoSample v = generate_video(
      [] {
        SceneSpec s;
        s.objects.push_back(ObjectSpec{1, 5, MotionProgram{0, MotionKind::Static, 0.0f, 0.0f}});
        return s;
      }(),
      8);
  ClusterAssignment a = assignment_from_labels(v.region_mask, v.features);
  CHECK(cluster_purity(a, v.region_mask) == doctest::Approx(1.0));
}

TEST_CASE("single cluster over two equal regions scores 0.5") {
  const std::size_t H = 4, W = 4, T = 2, C = 3;
  FeatureVolume fv = constant_volume(H, W, T, C, 1.0f);
  Tensor gt({H, W, T});
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t t = 0; t < T; ++t) gt(h, w, t) = h < H / 2 ? 0.0f : 1.0f;
  ClusterAssignment a = cluster_tokens(fv, 1, 0);
  CHECK(cluster_purity(a, gt) == doctest::Approx(0.5));
}

TEST_CASE("random labels over R regions score about the max region fraction") {
  // Monte-Carlo oracle: with labels independent of the regions, each
  // cluster's best overlap approaches the largest region share.
  const std::size_t H = 16, W = 16, T = 4;
  const double max_fraction = 0.5;
  Rng rng(77);
  FeatureVolume fv = constant_volume(H, W, T, 2, 1.0f);
  Tensor gt({H, W, T});
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t t = 0; t < T; ++t) gt(h, w, t) = h < H / 2 ? 0.0f : 1.0f;

  double mean = 0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    Tensor labels({H, W, T});
    for (std::size_t i = 0; i < labels.size(); ++i)
      labels[i] = static_cast<float>(rng.index(4));
    ClusterAssignment a = assignment_from_labels(std::move(labels), fv);
    mean += cluster_purity(a, gt);
  }
  mean /= trials;
  CHECK(std::abs(mean - max_fraction) < 0.03);
}

TEST_CASE("reassigning tokens to the returned centroids reproduces the labels") {
  FeatureVolume fv = random_volume(8, 8, 4, 8, 21);
  ClusterAssignment a = cluster_tokens(fv, 6, 4);
  const std::size_t C = fv.channels();
  for (std::size_t h = 0; h < 8; ++h)
    for (std::size_t w = 0; w < 8; ++w)
      for (std::size_t t = 0; t < 4; ++t) {
        const float* tok = fv.features.data() + fv.features.offset(h, w, t, std::size_t(0));
        double norm = 0;
        for (std::size_t c = 0; c < C; ++c) norm += static_cast<double>(tok[c]) * tok[c];
        norm = std::sqrt(norm);
        int best = 0;
        double best_dot = -2;
        for (int k = 0; k < a.num_clusters(); ++k) {
          double dot = 0;
          for (std::size_t c = 0; c < C; ++c)
            dot += (norm < 1e-12 ? 0.0 : tok[c] / norm) *
                   a.centroids(static_cast<std::size_t>(k), c);
          if (dot > best_dot + 1e-15) {
            best_dot = dot;
            best = k;
          }
        }
        CHECK(static_cast<int>(a.labels(h, w, t)) == best);
      }
}

TEST_CASE("k-means objective is non-increasing across iterations") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    FeatureVolume fv = random_volume(8, 8, 4, 6, 100 + seed);
    ClusterAssignment a = cluster_tokens(fv, 7, seed);
    REQUIRE(a.objective_history.size() >= 1);
    for (std::size_t i = 1; i < a.objective_history.size(); ++i)
      CHECK(a.objective_history[i] <= a.objective_history[i - 1] + 1e-9);
    // recorded objective matches an independent recomputation
    CHECK(assignment_objective(a, fv) ==
          doctest::Approx(a.objective_history.back()).epsilon(1e-6));
  }
}

TEST_CASE("permuting the frame order permutes labels and keeps centroids") {
  FeatureVolume fv = random_volume(6, 6, 5, 8, 55);
  const std::size_t H = 6, W = 6, T = 5, C = 8;
  // reversed frame order
  FeatureVolume rev;
  rev.features = Tensor({H, W, T, C});
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c)
          rev.features(h, w, t, c) = fv.features(h, w, T - 1 - t, c);

  ClusterAssignment a = cluster_tokens(fv, 5, 3);
  ClusterAssignment b = cluster_tokens(rev, 5, 3);
  REQUIRE(a.num_clusters() == b.num_clusters());
  for (std::size_t i = 0; i < a.centroids.size(); ++i) CHECK(a.centroids[i] == b.centroids[i]);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t t = 0; t < T; ++t)
        CHECK(a.labels(h, w, t) == b.labels(h, w, T - 1 - t));
}
