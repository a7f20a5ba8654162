#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "trajtok/clustering.hpp"
#include "trajtok/rng.hpp"
#include "trajtok/sampler.hpp"
#include "trajtok/synthgen.hpp"

using namespace trajtok;

namespace {

// Independent allocator: floor quota, then one bonus point per cluster in
// rank order, where rank counts clusters with strictly larger size plus
// equal-size clusters with a smaller id.
std::vector<std::size_t> quota_oracle(std::size_t M, const std::vector<std::size_t>& sizes) {
  const std::size_t L = sizes.size();
  std::vector<std::size_t> quotas(L, M / L);
  const std::size_t remainder = M % L;
  for (std::size_t i = 0; i < L; ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < L; ++j) {
      if (sizes[j] > sizes[i]) ++rank;
      if (sizes[j] == sizes[i] && j < i) ++rank;
    }
    if (rank < remainder) ++quotas[i];
  }
  return quotas;
}

}  // namespace

TEST_CASE("quota splits evenly when sizes are equal") {
  std::vector<std::size_t> sizes(16, 128);
  auto q = semantic_quotas(256, sizes);
  for (std::size_t v : q) CHECK(v == 16);
}

TEST_CASE("worked quota example: M=10 over sizes 40/30/20/10") {
  auto q = semantic_quotas(10, {40, 30, 20, 10});
  CHECK(q == std::vector<std::size_t>({3, 3, 2, 2}));
}

TEST_CASE("M below the cluster count raises QuotaError") {
  try {
    semantic_quotas(3, {5, 5, 5, 5});
    FAIL("expected QuotaError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::QuotaError);
  }
}

TEST_CASE("quota matches the brute-force allocator and always sums to M (property)") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t L = 1 + rng.index(12);
    std::vector<std::size_t> sizes(L);
    for (auto& s : sizes) s = 1 + rng.index(500);
    const std::size_t M = L + rng.index(512);
    const auto got = semantic_quotas(M, sizes);
    const auto want = quota_oracle(M, sizes);
    CHECK(got == want);
    CHECK(std::accumulate(got.begin(), got.end(), std::size_t(0)) == M);
  }
}

TEST_CASE("grid sampling produces the documented geometry") {
  SeedPoints p = sample_uniform_grid(4, 0);
  REQUIRE(p.size() == 4);
  CHECK(p.points[0].x == doctest::Approx(0.25));
  CHECK(p.points[0].y == doctest::Approx(0.25));
  CHECK(p.points[1].x == doctest::Approx(0.75));
  CHECK(p.points[1].y == doctest::Approx(0.25));
  CHECK(p.points[2].x == doctest::Approx(0.25));
  CHECK(p.points[2].y == doctest::Approx(0.75));
  CHECK(p.points[3].x == doctest::Approx(0.75));
  CHECK(p.points[3].y == doctest::Approx(0.75));
  for (const auto& pt : p.points) CHECK(pt.cluster == -1);

  SeedPoints big = sample_uniform_grid(256, 0);
  CHECK(big.size() == 256);
  std::set<float> xs;
  for (const auto& pt : big.points) xs.insert(pt.x);
  CHECK(xs.size() == 16);

  try {
    sample_uniform_grid(5, 0);
    FAIL("expected InvalidGrid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidGrid);
  }
}

TEST_CASE("semantic sampling draws the quota from each cluster at its first frame") {
  SceneSpec s;
  s.objects.push_back(ObjectSpec{1, 11, MotionProgram{0, MotionKind::Static, 0.0f, 0.0f}});
  s.appearance_mode = AppearanceMode::Distinct;
  VideoSample v = generate_video(s, 17);
  ClusterAssignment a = cluster_tokens(v.features, 2, 1);
  REQUIRE(a.num_clusters() == 2);

  const std::size_t M = 16;
  SeedPoints seeds = sample_semantic(a, M, 5);
  REQUIRE(seeds.size() == M);
  const auto quotas = semantic_quotas(M, a.member_counts);
  std::vector<std::size_t> counts(2, 0);
  for (const auto& p : seeds.points) {
    REQUIRE(p.cluster >= 0);
    ++counts[static_cast<std::size_t>(p.cluster)];
    CHECK(p.t0 == a.first_frame[static_cast<std::size_t>(p.cluster)]);
  }
  CHECK(counts[0] == quotas[0]);
  CHECK(counts[1] == quotas[1]);

  SUBCASE("points without replacement are distinct token centers") {
    std::set<std::pair<float, float>> unique;
    for (const auto& p : seeds.points) unique.insert({p.x, p.y});
    CHECK(unique.size() == seeds.size());
  }

  SUBCASE("deterministic per seed") {
    SeedPoints again = sample_semantic(a, M, 5);
    for (std::size_t i = 0; i < M; ++i) {
      CHECK(again.points[i].x == seeds.points[i].x);
      CHECK(again.points[i].y == seeds.points[i].y);
    }
  }
}

TEST_CASE("over-quota clusters sample with replacement and jitter duplicates") {
  // 2x2x1 volume, all tokens identical -> one cluster of 4 members, quota 9
  FeatureVolume fv;
  fv.features = Tensor::full({2, 2, 1, 3}, 1.0f);
  ClusterAssignment a = cluster_tokens(fv, 1, 0);
  SeedPoints seeds = sample_semantic(a, 9, 3);
  REQUIRE(seeds.size() == 9);
  std::set<std::pair<float, float>> unique;
  for (const auto& p : seeds.points) unique.insert({p.x, p.y});
  CHECK(unique.size() > 4);  // jitter separated the duplicates
  for (const auto& p : seeds.points) {
    CHECK(p.x >= 0.0f);
    CHECK(p.x <= 1.0f);
  }
}

TEST_CASE("semantic sampling concentrates points on a small object") {
  // object covers 9 of 256 patches (~3.5%); budget M=16
  SceneSpec s;
  s.objects.push_back(ObjectSpec{1, 11, MotionProgram{0, MotionKind::Static, 0.0f, 0.0f}});
  s.appearance_mode = AppearanceMode::Distinct;
  VideoSample v = generate_video(s, 41);
  ClusterAssignment a = cluster_tokens(v.features, 4, 2);

  auto on_object = [&](const SeedPoint& p) {
    const int w = std::clamp(static_cast<int>(std::lround(p.x * 16 - 0.5)), 0, 15);
    const int h = std::clamp(static_cast<int>(std::lround(p.y * 16 - 0.5)), 0, 15);
    return v.region_mask(static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                         static_cast<std::size_t>(p.t0)) > 0.0f;
  };

  SeedPoints sem = sample_semantic(a, 16, 7);
  SeedPoints grid = sample_uniform_grid(16, 0);
  std::size_t sem_hits = 0, grid_hits = 0;
  for (const auto& p : sem.points) sem_hits += on_object(p);
  for (const auto& p : grid.points) grid_hits += on_object(p);

  const double cluster_share = 1.0 / a.num_clusters();
  CHECK(static_cast<double>(sem_hits) / 16.0 >= cluster_share - 1e-9);
  CHECK(sem_hits > grid_hits);
}

TEST_CASE("track_points snaps to the nearest source track and backfills before t0") {
  TrajectorySet src;
  src.points = Tensor({2, 4, 2});
  src.visibility = Tensor::full({2, 4}, 1.0f);
  // track 0 moves right from (0.2, 0.2); track 1 static at (0.7, 0.7)
  for (std::size_t t = 0; t < 4; ++t) {
    src.points(0, t, 0) = 0.2f + 0.1f * static_cast<float>(t);
    src.points(0, t, 1) = 0.2f;
    src.points(1, t, 0) = 0.7f;
    src.points(1, t, 1) = 0.7f;
  }

  SUBCASE("seed exactly on a track inherits it verbatim") {
    SeedPoints seeds;
    seeds.points.push_back({0.2f, 0.2f, 0, -1});
    TrajectorySet out = track_points(seeds, src);
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(out.points(0, t, 0) == src.points(0, t, 0));
      CHECK(out.points(0, t, 1) == src.points(0, t, 1));
    }
  }

  SUBCASE("snapping is by distance at t0") {
    SeedPoints seeds;
    seeds.points.push_back({0.55f, 0.55f, 0, -1});  // nearer to track 1
    TrajectorySet out = track_points(seeds, src);
    CHECK(out.points(0, 3, 0) == 0.7f);
  }

  SUBCASE("frames before t0 hold the t0 position") {
    SeedPoints seeds;
    seeds.points.push_back({0.4f, 0.2f, 2, -1});  // track 0 position at t=2
    TrajectorySet out = track_points(seeds, src);
    CHECK(out.points(0, 0, 0) == doctest::Approx(0.4f));
    CHECK(out.points(0, 1, 0) == doctest::Approx(0.4f));
    CHECK(out.points(0, 2, 0) == doctest::Approx(0.4f));
    CHECK(out.points(0, 3, 0) == doctest::Approx(0.5f));
  }

  SUBCASE("static source gives constant outputs") {
    SeedPoints seeds;
    seeds.points.push_back({0.9f, 0.9f, 0, -1});
    TrajectorySet out = track_points(seeds, src);
    for (std::size_t t = 1; t < 4; ++t) CHECK(out.points(0, t, 0) == out.points(0, 0, 0));
  }

  SUBCASE("empty source raises NoTracksError") {
    TrajectorySet empty;
    SeedPoints seeds;
    seeds.points.push_back({0.5f, 0.5f, 0, -1});
    try {
      track_points(seeds, empty);
      FAIL("expected NoTracksError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoTracksError);
    }
  }
}

TEST_CASE("translate scene tracks carry the generator displacement") {
  SceneSpec s;
  s.objects.push_back(ObjectSpec{1, 11, MotionProgram{0, MotionKind::TranslateLR, 0.05f, 0.0f}});
  VideoSample v = generate_video(s, 3);
  SeedPoints seeds;
  seeds.points.push_back({v.trajectories.points(4, 0, 0), v.trajectories.points(4, 0, 1), 0, -1});
  TrajectorySet out = track_points(seeds, v.trajectories);
  for (std::size_t t = 1; t < out.num_frames(); ++t)
    CHECK(out.points(0, t, 0) - out.points(0, t - 1, 0) == doctest::Approx(0.05f).epsilon(1e-4));
}

TEST_CASE("seeds round-trip through JSON") {
  SeedPoints seeds;
  seeds.points.push_back({0.25f, 0.75f, 2, 3});
  seeds.points.push_back({0.5f, 0.5f, 0, -1});
  const auto path = std::filesystem::temp_directory_path() / "trajtok_seeds.json";
  write_seeds(path, seeds);
  SeedPoints back = read_seeds(path);
  REQUIRE(back.size() == 2);
  CHECK(back.points[0].x == seeds.points[0].x);
  CHECK(back.points[0].t0 == 2);
  CHECK(back.points[1].cluster == -1);
}
