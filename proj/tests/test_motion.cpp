#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "trajtok/motion.hpp"
#include "trajtok/rng.hpp"

using namespace trajtok;

namespace {

TrajectorySet from_points(std::size_t m, std::size_t t, const std::vector<float>& xy) {
  TrajectorySet ts;
  ts.points = Tensor({m, t, 2}, xy);
  ts.visibility = Tensor::full({m, t}, 1.0f);
  return ts;
}

// Random walk on the 1/1024 lattice around the frame center. Lattice
// coordinates make translation tests exact in float arithmetic.
TrajectorySet lattice_walk(std::size_t m, std::size_t t, Rng& rng, int max_step = 64) {
  TrajectorySet ts;
  ts.points = Tensor({m, t, 2});
  ts.visibility = Tensor::full({m, t}, 1.0f);
  for (std::size_t i = 0; i < m; ++i) {
    int x = 512 + static_cast<int>(rng.index(128)) - 64;
    int y = 512 + static_cast<int>(rng.index(128)) - 64;
    for (std::size_t j = 0; j < t; ++j) {
      ts.points(i, j, 0) = static_cast<float>(x) / 1024.0f;
      ts.points(i, j, 1) = static_cast<float>(y) / 1024.0f;
      x += static_cast<int>(rng.index(2 * max_step + 1)) - max_step;
      y += static_cast<int>(rng.index(2 * max_step + 1)) - max_step;
      x = std::clamp(x, 0, 1024);
      y = std::clamp(y, 0, 1024);
    }
  }
  return ts;
}

// Independent scalar oracle for one displacement's histogram row.
std::vector<double> hod_row_oracle(double dx, double dy, int bins) {
  std::vector<double> row(static_cast<std::size_t>(bins), 0.0);
  const double mag = std::hypot(dx, dy);
  if (mag == 0.0) return row;
  double deg = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
  if (deg < 0) deg += 360.0;
  const double width = 360.0 / bins;
  const auto lo = static_cast<std::size_t>(deg / width) % static_cast<std::size_t>(bins);
  const double frac = deg / width - std::floor(deg / width);
  row[lo] += mag * (1.0 - frac);
  row[(lo + 1) % static_cast<std::size_t>(bins)] += mag * frac;
  return row;
}

}  // namespace

TEST_CASE("stationary trajectory yields an all-zero histogram") {
  TrajectorySet ts = from_points(1, 4, {0.5f, 0.5f, 0.5f, 0.5f, 0.5f, 0.5f, 0.5f, 0.5f});
  Tensor hod = hod_descriptor(ts, {8, 1});
  for (std::size_t i = 0; i < hod.size(); ++i) CHECK(hod[i] == 0.0f);
}

TEST_CASE("diagonal motion lands exactly on bin 4 of 32") {
  // (+k, +k) per frame: 45 degrees = bin center 4 at B=32
  const float k = 0.01f;
  const std::size_t T = 5;
  std::vector<float> xy;
  for (std::size_t t = 0; t < T; ++t) {
    xy.push_back(0.3f + k * static_cast<float>(t));
    xy.push_back(0.3f + k * static_cast<float>(t));
  }
  TrajectorySet ts = from_points(1, T, xy);
  Tensor hod = hod_descriptor(ts, {32, 1});
  const double mag = std::sqrt(2.0) * k;
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t b = 0; b < 32; ++b) {
      if (b == 4)
        CHECK(hod(0, t, b) == doctest::Approx(mag).epsilon(1e-4));
      else
        CHECK(std::abs(hod(0, t, b)) < 1e-6);
    }
  // rows below delta are zero padded
  for (std::size_t b = 0; b < 32; ++b) CHECK(hod(0, 0, b) == 0.0f);
}

TEST_CASE("angle sweep matches the scalar oracle and splits midpoints 50/50") {
  const int B = 32;
  for (int step = 0; step < 720; ++step) {
    const double theta = step * (360.0 / 720.0) * std::numbers::pi / 180.0;
    const double mag = 0.02;
    const double dx = mag * std::cos(theta), dy = mag * std::sin(theta);
    TrajectorySet ts = from_points(
        1, 2,
        {0.5f, 0.5f, static_cast<float>(0.5 + dx), static_cast<float>(0.5 + dy)});
    Tensor hod = hod_descriptor(ts, {B, 1});
    const double rdx = static_cast<double>(ts.points(0, 1, 0)) - ts.points(0, 0, 0);
    const double rdy = static_cast<double>(ts.points(0, 1, 1)) - ts.points(0, 0, 1);
    const auto oracle = hod_row_oracle(rdx, rdy, B);
    double sum = 0;
    for (int b = 0; b < B; ++b) {
      CHECK(std::abs(hod(0, 1, static_cast<std::size_t>(b)) -
                     oracle[static_cast<std::size_t>(b)]) < 1e-6);
      sum += hod(0, 1, static_cast<std::size_t>(b));
    }
    CHECK(sum == doctest::Approx(std::hypot(rdx, rdy)).epsilon(1e-5));
  }
  // exact midpoint between centers 0 and 1: theta = 5.625 degrees
  const double theta = 5.625 * std::numbers::pi / 180.0;
  TrajectorySet ts = from_points(1, 2,
                                 {0.4f, 0.4f, static_cast<float>(0.4 + 0.05 * std::cos(theta)),
                                  static_cast<float>(0.4 + 0.05 * std::sin(theta))});
  Tensor hod = hod_descriptor(ts, {B, 1});
  CHECK(hod(0, 1, 0) == doctest::Approx(hod(0, 1, 1)).epsilon(1e-3));
}

TEST_CASE("bin sums conserve displacement magnitude (property)") {
  Rng rng(5150);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t M = 1 + rng.index(16);
    const std::size_t T = 3 + rng.index(8);
    const int B = trial % 2 ? 8 : 32;
    const int delta = 1 + static_cast<int>(rng.index(T - 1));
    TrajectorySet ts = lattice_walk(M, T, rng);
    Tensor hod = hod_descriptor(ts, {B, delta});
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t t = 0; t < T; ++t) {
        double sum = 0;
        for (int b = 0; b < B; ++b) sum += hod(m, t, static_cast<std::size_t>(b));
        if (t < static_cast<std::size_t>(delta)) {
          CHECK(sum == 0.0);
        } else {
          const double dx =
              static_cast<double>(ts.points(m, t, 0)) - ts.points(m, t - delta, 0);
          const double dy =
              static_cast<double>(ts.points(m, t, 1)) - ts.points(m, t - delta, 1);
          CHECK(std::abs(sum - std::hypot(dx, dy)) < 1e-5);
        }
      }
  }
}

TEST_CASE("rotating displacements by whole bins circularly shifts the histogram") {
  const int B = 32;
  Rng rng(66);
  TrajectorySet ts = lattice_walk(6, 8, rng, 24);
  Tensor base = hod_descriptor(ts, {B, 1});
  for (int k : {1, 8, 16}) {
    const double angle = k * (360.0 / B) * std::numbers::pi / 180.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    TrajectorySet rotated = ts;
    for (std::size_t m = 0; m < ts.num_tracks(); ++m)
      for (std::size_t t = 0; t < ts.num_frames(); ++t) {
        const double x = static_cast<double>(ts.points(m, t, 0)) - 0.5;
        const double y = static_cast<double>(ts.points(m, t, 1)) - 0.5;
        rotated.points(m, t, 0) = static_cast<float>(0.5 + ca * x - sa * y);
        rotated.points(m, t, 1) = static_cast<float>(0.5 + sa * x + ca * y);
      }
    Tensor shifted = hod_descriptor(rotated, {B, 1});
    for (std::size_t m = 0; m < ts.num_tracks(); ++m)
      for (std::size_t t = 1; t < ts.num_frames(); ++t)
        for (int b = 0; b < B; ++b)
          CHECK(std::abs(shifted(m, t, static_cast<std::size_t>((b + k) % B)) -
                         base(m, t, static_cast<std::size_t>(b))) < 1e-5);
  }
}

TEST_CASE("global translation leaves hod and inter descriptors exactly unchanged") {
  Rng rng(99);
  TrajectorySet ts = lattice_walk(5, 6, rng, 16);
  TrajectorySet moved = ts;
  const float ox = 0.125f, oy = 0.0625f;  // lattice offsets: sums stay exact in f32
  for (std::size_t m = 0; m < ts.num_tracks(); ++m)
    for (std::size_t t = 0; t < ts.num_frames(); ++t) {
      moved.points(m, t, 0) += ox;
      moved.points(m, t, 1) += oy;
    }
  Tensor h0 = hod_descriptor(ts, {16, 1});
  Tensor h1 = hod_descriptor(moved, {16, 1});
  for (std::size_t i = 0; i < h0.size(); ++i) CHECK(h0[i] == h1[i]);
  Tensor d0 = inter_descriptor(ts);
  Tensor d1 = inter_descriptor(moved);
  for (std::size_t i = 0; i < d0.size(); ++i) CHECK(d0[i] == d1[i]);
}

TEST_CASE("inter descriptor: single trajectory is all zeros") {
  TrajectorySet ts = from_points(1, 3, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f});
  Tensor d = inter_descriptor(ts);
  REQUIRE(d.shape() == std::vector<std::size_t>({1, 3, 2}));
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == 0.0f);
}

TEST_CASE("inter descriptor hand case and antisymmetry") {
  // two static points at (0.2,0.2) and (0.6,0.5)
  TrajectorySet ts = from_points(2, 3,
                                 {0.2f, 0.2f, 0.2f, 0.2f, 0.2f, 0.2f,
                                  0.6f, 0.5f, 0.6f, 0.5f, 0.6f, 0.5f});
  Tensor d = inter_descriptor(ts);
  REQUIRE(d.shape() == std::vector<std::size_t>({2, 3, 4}));
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(d(0, t, 2) == doctest::Approx(-0.4).epsilon(1e-6));
    CHECK(d(0, t, 3) == doctest::Approx(-0.3).epsilon(1e-6));
    CHECK(d(1, t, 0) == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(d(1, t, 1) == doctest::Approx(0.3).epsilon(1e-6));
    // self pairs
    CHECK(d(0, t, 0) == 0.0f);
    CHECK(d(0, t, 1) == 0.0f);
    CHECK(d(1, t, 2) == 0.0f);
    CHECK(d(1, t, 3) == 0.0f);
  }
}

TEST_CASE("inter antisymmetry and self-zero hold on random instances (property)") {
  Rng rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t M = 2 + rng.index(10);
    const std::size_t T = 2 + rng.index(6);
    TrajectorySet ts = lattice_walk(M, T, rng);
    Tensor d = inter_descriptor(ts);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t t = 0; t < T; ++t) {
        CHECK(d(m, t, 2 * m) == 0.0f);
        CHECK(d(m, t, 2 * m + 1) == 0.0f);
        for (std::size_t o = 0; o < M; ++o) {
          CHECK(d(m, t, 2 * o) == -d(o, t, 2 * m));
          CHECK(d(m, t, 2 * o + 1) == -d(o, t, 2 * m + 1));
        }
      }
  }
}

TEST_CASE("permuting trajectories permutes hod rows and inter blocks consistently") {
  Rng rng(31337);
  const std::size_t M = 5, T = 4;
  TrajectorySet ts = lattice_walk(M, T, rng);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  TrajectorySet shuffled;
  shuffled.points = Tensor({M, T, 2});
  shuffled.visibility = Tensor::full({M, T}, 1.0f);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t t = 0; t < T; ++t) {
      shuffled.points(m, t, 0) = ts.points(perm[m], t, 0);
      shuffled.points(m, t, 1) = ts.points(perm[m], t, 1);
    }

  Tensor h = hod_descriptor(ts, {8, 1});
  Tensor hp = hod_descriptor(shuffled, {8, 1});
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t b = 0; b < 8; ++b) CHECK(hp(m, t, b) == h(perm[m], t, b));

  Tensor d = inter_descriptor(ts);
  Tensor dp = inter_descriptor(shuffled);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t o = 0; o < M; ++o) {
        CHECK(dp(m, t, 2 * o) == d(perm[m], t, 2 * perm[o]));
        CHECK(dp(m, t, 2 * o + 1) == d(perm[m], t, 2 * perm[o] + 1));
      }
}

TEST_CASE("displacement-only descriptor matches direct differences") {
  Rng rng(8);
  TrajectorySet ts = lattice_walk(4, 6, rng);
  for (int delta : {1, 2}) {
    Tensor d = displacement_only_descriptor(ts, delta);
    for (std::size_t m = 0; m < 4; ++m)
      for (std::size_t t = 0; t < 6; ++t) {
        if (t < static_cast<std::size_t>(delta)) {
          CHECK(d(m, t, 0) == 0.0f);
          CHECK(d(m, t, 1) == 0.0f);
        } else {
          CHECK(d(m, t, 0) ==
                ts.points(m, t, 0) - ts.points(m, t - static_cast<std::size_t>(delta), 0));
          CHECK(d(m, t, 1) ==
                ts.points(m, t, 1) - ts.points(m, t - static_cast<std::size_t>(delta), 1));
        }
      }
  }
}

TEST_CASE("delta outside [1, T) is rejected") {
  TrajectorySet ts = from_points(1, 3, {0.1f, 0.1f, 0.2f, 0.2f, 0.3f, 0.3f});
  for (int delta : {0, 3, 5}) {
    try {
      hod_descriptor(ts, {8, delta});
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
    }
  }
}

TEST_CASE("projections: zero input with zero bias gives zero; identity passes through") {
  Tensor hod({2, 3, 4});
  LinearLayer zero_layer{Tensor({5, 4}), Tensor({5})};
  Tensor out = project_intra(hod, zero_layer);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0f);

  LinearLayer id{Tensor({4, 4}), Tensor({4})};
  for (std::size_t i = 0; i < 4; ++i) id.weight(i, i) = 1.0f;
  Rng rng(2);
  for (std::size_t i = 0; i < hod.size(); ++i) hod[i] = static_cast<float>(rng.uniform());
  Tensor same = project_intra(hod, id);
  for (std::size_t i = 0; i < hod.size(); ++i) CHECK(same[i] == hod[i]);
}

TEST_CASE("projections match a naive triple-loop oracle within 1e-5") {
  Rng rng(77);
  const std::size_t M = 3, T = 4, In = 6, Out = 5;
  Tensor x({M, T, In});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.normal(0, 1));
  LinearLayer layer = make_linear<float>(Out, In, rng);
  Tensor y = project_intra(x, layer);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t o = 0; o < Out; ++o) {
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < In; ++i)
          acc += static_cast<double>(layer.weight(o, i)) * x(m, t, i);
        CHECK(std::abs(y(m, t, o) - acc) < 1e-5);
      }
}

TEST_CASE("project_inter with M=1 broadcasts the bias") {
  TrajectorySet ts = from_points(1, 3, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f});
  Tensor cross = inter_descriptor(ts);
  Rng rng(5);
  LinearLayer layer = make_linear<float>(7, 2, rng);
  Tensor out = project_inter(cross, layer);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t o = 0; o < 7; ++o) CHECK(out(0, t, o) == layer.bias[o]);
}

TEST_CASE("projection dimension mismatch raises ShapeError") {
  Tensor hod({2, 3, 4});
  LinearLayer layer{Tensor({5, 6}), Tensor({5})};
  try {
    project_intra(hod, layer);
    FAIL("expected ShapeError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeError);
  }
}

TEST_CASE("kernels are bit-identical across thread counts") {
  Rng rng(11);
  TrajectorySet ts = lattice_walk(16, 8, rng);
  Tensor h1 = hod_descriptor(ts, {32, 1}, 1);
  Tensor h4 = hod_descriptor(ts, {32, 1}, 4);
  for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == h4[i]);
  Tensor d1 = inter_descriptor(ts, 1);
  Tensor d4 = inter_descriptor(ts, 4);
  for (std::size_t i = 0; i < d1.size(); ++i) CHECK(d1[i] == d4[i]);
}
