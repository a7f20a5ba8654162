#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "trajtok/align.hpp"
#include "trajtok/rng.hpp"

using namespace trajtok;

namespace {

TrajectorySet single_point(float x, float y, std::size_t frames) {
  TrajectorySet ts;
  ts.points = Tensor({1, frames, 2});
  ts.visibility = Tensor::full({1, frames}, 1.0f);
  for (std::size_t t = 0; t < frames; ++t) {
    ts.points(0, t, 0) = x;
    ts.points(0, t, 1) = y;
  }
  return ts;
}

}  // namespace

TEST_CASE("a point at a patch center returns that token exactly") {
  const std::size_t H = 4, W = 4, T = 2, C = 3;
  FeatureVolume fv;
  fv.features = Tensor({H, W, T, C});
  Rng rng(1);
  for (std::size_t i = 0; i < fv.features.size(); ++i)
    fv.features[i] = static_cast<float>(rng.uniform(-2, 2));

  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w) {
      TrajectorySet ts = single_point((w + 0.5f) / W, (h + 0.5f) / H, T);
      Tensor out = sample_trajectory_tokens(fv, ts);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c) CHECK(out(0, t, c) == fv.features(h, w, t, c));
    }
}

TEST_CASE("the midpoint of two horizontal centers averages their tokens") {
  const std::size_t H = 2, W = 4, T = 1, C = 2;
  FeatureVolume fv;
  fv.features = Tensor({H, W, T, C});
  Rng rng(2);
  for (std::size_t i = 0; i < fv.features.size(); ++i)
    fv.features[i] = static_cast<float>(rng.uniform(0, 1));
  // midpoint between centers of patches (h=0, w=1) and (h=0, w=2): x = 2/W
  TrajectorySet ts = single_point(2.0f / W, 0.5f / H, T);
  Tensor out = sample_trajectory_tokens(fv, ts);
  for (std::size_t c = 0; c < C; ++c)
    CHECK(out(0, 0, c) ==
          doctest::Approx(0.5f * (fv.features(0, 1, 0, c) + fv.features(0, 2, 0, c))));
}

TEST_CASE("constant volumes sample to the constant everywhere") {
  FeatureVolume fv;
  fv.features = Tensor::full({3, 3, 2, 4}, 2.5f);
  Rng rng(3);
  TrajectorySet ts;
  ts.points = Tensor({5, 2, 2});
  ts.visibility = Tensor::full({5, 2}, 1.0f);
  for (std::size_t m = 0; m < 5; ++m)
    for (std::size_t t = 0; t < 2; ++t) {
      ts.points(m, t, 0) = static_cast<float>(rng.uniform());
      ts.points(m, t, 1) = static_cast<float>(rng.uniform());
    }
  Tensor out = sample_trajectory_tokens(fv, ts);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 2.5f);
}

TEST_CASE("bilinear sampling is exact on affine token grids (property)") {
  // tokens affine in (h, w): value = a + b*w + c*h per channel
  const std::size_t H = 6, W = 5, T = 1, C = 2;
  const float a0 = 0.3f, b0 = 0.7f, c0 = -0.4f;
  FeatureVolume fv;
  fv.features = Tensor({H, W, T, C});
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t c = 0; c < C; ++c)
        fv.features(h, w, 0, c) =
            (a0 + b0 * static_cast<float>(w) + c0 * static_cast<float>(h)) * (c + 1.0f);

  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    // stay inside the center-spanned region where no edge clamping occurs
    const float gx = static_cast<float>(rng.uniform(0.0, W - 1.0));
    const float gy = static_cast<float>(rng.uniform(0.0, H - 1.0));
    TrajectorySet ts = single_point((gx + 0.5f) / W, (gy + 0.5f) / H, 1);
    Tensor out = sample_trajectory_tokens(fv, ts);
    for (std::size_t c = 0; c < C; ++c)
      CHECK(std::abs(out(0, 0, c) - (a0 + b0 * gx + c0 * gy) * (c + 1.0f)) < 1e-4);
  }
}

TEST_CASE("nearest-neighbor variant snaps to the closest token") {
  const std::size_t H = 2, W = 2, T = 1, C = 1;
  FeatureVolume fv;
  fv.features = Tensor({H, W, T, C}, {1.0f, 2.0f, 3.0f, 4.0f});
  TrajectorySet ts = single_point(0.3f, 0.3f, 1);  // grid coords (0.7, 0.7) -> patch (1,1)? no: round(0.7)=1 -> w=1?
  Tensor out = sample_trajectory_tokens(fv, ts, Interp::Nearest);
  // gx = 0.3*2-0.5 = 0.1 -> nearest w=0; gy likewise h=0 -> token value 1
  CHECK(out(0, 0, 0) == 1.0f);
}

TEST_CASE("align_tokens projects the sampled tokens") {
  FeatureVolume fv;
  fv.features = Tensor::full({2, 2, 2, 3}, 1.0f);
  TrajectorySet ts = single_point(0.5f, 0.5f, 2);
  LinearLayer proj{Tensor({2, 3}), Tensor({2})};
  proj.weight(0, 0) = 1.0f;
  proj.weight(0, 1) = 1.0f;
  proj.weight(0, 2) = 1.0f;
  proj.bias[1] = -1.0f;
  Tensor out = align_tokens(fv, ts, proj);
  REQUIRE(out.shape() == std::vector<std::size_t>({1, 2, 2}));
  CHECK(out(0, 0, 0) == doctest::Approx(3.0f));
  CHECK(out(0, 0, 1) == doctest::Approx(-1.0f));
}

TEST_CASE("fuse adds elementwise and matches a direct loop oracle") {
  Rng rng(9);
  Tensor a({2, 3, 4}), b({2, 3, 4}), c({2, 3, 4});
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<float>(rng.normal(0, 1));
    b[i] = static_cast<float>(rng.normal(0, 1));
    c[i] = static_cast<float>(rng.normal(0, 1));
  }
  Tensor f = fuse(a, b, c);
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK(f[i] == static_cast<float>(static_cast<double>(a[i]) + b[i] + c[i]));

  SUBCASE("zero motion terms reduce fuse to the appearance path") {
    Tensor zero({2, 3, 4});
    Tensor app_only = fuse(a, zero, zero);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(app_only[i] == a[i]);
  }

  SUBCASE("commutative and associative across the three inputs") {
    Tensor f1 = fuse(a, b, c);
    Tensor f2 = fuse(c, a, b);
    Tensor f3 = fuse(b, c, a);
    for (std::size_t i = 0; i < f1.size(); ++i) {
      CHECK(f1[i] == f2[i]);
      CHECK(f1[i] == f3[i]);
    }
  }

  SUBCASE("shape mismatch raises ShapeError") {
    Tensor bad({2, 3, 5});
    try {
      fuse(a, b, bad);
      FAIL("expected ShapeError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ShapeError);
    }
  }
}

TEST_CASE("frame count mismatch raises ShapeError") {
  FeatureVolume fv;
  fv.features = Tensor::full({2, 2, 3, 2}, 1.0f);
  TrajectorySet ts = single_point(0.5f, 0.5f, 2);
  try {
    sample_trajectory_tokens(fv, ts);
    FAIL("expected ShapeError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeError);
  }
}
