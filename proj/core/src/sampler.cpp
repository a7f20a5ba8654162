#include "trajtok/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "trajtok/rng.hpp"

namespace trajtok {

std::vector<std::size_t> semantic_quotas(std::size_t M, const std::vector<std::size_t>& member_counts) {
  const std::size_t L = member_counts.size();
  if (L == 0) raise(ErrorCode::InvalidClusterCount, "no clusters");
  if (M < L)
    raise(ErrorCode::QuotaError, "M=" + std::to_string(M) + " is less than cluster count " +
                                     std::to_string(L));
  const std::size_t base = M / L;
  std::size_t remainder = M % L;
  std::vector<std::size_t> quotas(L, base);
  std::vector<std::size_t> ids(L);
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::size_t a, std::size_t b) { return member_counts[a] > member_counts[b]; });
  for (std::size_t i = 0; i < remainder; ++i) ++quotas[ids[i]];
  return quotas;
}

SeedPoints sample_semantic(const ClusterAssignment& assignment, std::size_t M, std::uint64_t seed) {
  const int l_eff = assignment.num_clusters();
  if (l_eff == 0) raise(ErrorCode::InvalidClusterCount, "assignment has no clusters");
  const auto quotas = semantic_quotas(M, assignment.member_counts);

  const std::size_t H = assignment.labels.dim(0);
  const std::size_t W = assignment.labels.dim(1);

  Rng rng(seed);
  SeedPoints out;
  out.points.reserve(M);
  for (int k = 0; k < l_eff; ++k) {
    const int t0 = assignment.first_frame[static_cast<std::size_t>(k)];
    // Member token centers at the cluster's first frame.
    std::vector<std::pair<std::size_t, std::size_t>> members;
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        if (static_cast<int>(assignment.labels(h, w, static_cast<std::size_t>(t0))) == k)
          members.emplace_back(h, w);
    if (members.empty())
      raise(ErrorCode::InvalidClusterCount, "cluster " + std::to_string(k) +
                                                " has no members at its first frame");

    const std::size_t quota = quotas[static_cast<std::size_t>(k)];
    auto center = [&](std::size_t h, std::size_t w) {
      return SeedPoint{(static_cast<float>(w) + 0.5f) / static_cast<float>(W),
                       (static_cast<float>(h) + 0.5f) / static_cast<float>(H), t0, k};
    };
    if (members.size() >= quota) {
      // Partial Fisher-Yates: first `quota` entries are a uniform draw
      // without replacement.
      for (std::size_t j = 0; j < quota; ++j) {
        const std::size_t pick = j + rng.index(members.size() - j);
        std::swap(members[j], members[pick]);
        out.points.push_back(center(members[j].first, members[j].second));
      }
    } else {
      std::vector<int> used(members.size(), 0);
      for (std::size_t j = 0; j < quota; ++j) {
        const std::size_t pick = rng.index(members.size());
        SeedPoint p = center(members[pick].first, members[pick].second);
        if (used[pick]++) {
          p.x += static_cast<float>(rng.uniform(-0.25, 0.25)) / static_cast<float>(W);
          p.y += static_cast<float>(rng.uniform(-0.25, 0.25)) / static_cast<float>(H);
          p.x = std::clamp(p.x, 0.0f, 1.0f);
          p.y = std::clamp(p.y, 0.0f, 1.0f);
        }
        out.points.push_back(p);
      }
    }
  }
  return out;
}

SeedPoints sample_uniform_grid(std::size_t M, int t0) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(M))));
  if (side == 0 || side * side != M)
    raise(ErrorCode::InvalidGrid, "M=" + std::to_string(M) + " is not a perfect square");
  SeedPoints out;
  out.points.reserve(M);
  for (std::size_t j = 0; j < side; ++j)
    for (std::size_t i = 0; i < side; ++i)
      out.points.push_back(SeedPoint{(static_cast<float>(i) + 0.5f) / static_cast<float>(side),
                                     (static_cast<float>(j) + 0.5f) / static_cast<float>(side), t0, -1});
  return out;
}

TrajectorySet track_points(const SeedPoints& seeds, const TrajectorySet& source) {
  if (source.num_tracks() == 0) raise(ErrorCode::NoTracksError, "source trajectory set is empty");
  source.validate();
  if (seeds.points.empty()) raise(ErrorCode::ConfigError, "no seed points");
  const std::size_t T = source.num_frames();
  const std::size_t M = seeds.points.size();

  TrajectorySet out;
  out.points = Tensor({M, T, 2});
  out.visibility = Tensor({M, T});
  out.frame_dims = source.frame_dims;

  for (std::size_t m = 0; m < M; ++m) {
    const auto& seed = seeds.points[m];
    if (seed.t0 < 0 || static_cast<std::size_t>(seed.t0) >= T)
      raise(ErrorCode::ConfigError, "seed frame t0 out of range");
    const auto t0 = static_cast<std::size_t>(seed.t0);
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < source.num_tracks(); ++s) {
      const double dx = static_cast<double>(seed.x) - source.points(s, t0, 0);
      const double dy = static_cast<double>(seed.y) - source.points(s, t0, 1);
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = s;
      }
    }
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t src_t = t < t0 ? t0 : t;
      out.points(m, t, 0) = source.points(best, src_t, 0);
      out.points(m, t, 1) = source.points(best, src_t, 1);
      out.visibility(m, t) = source.visibility(best, src_t);
    }
  }
  return out;
}

void write_seeds(const std::filesystem::path& path, const SeedPoints& seeds) {
  nlohmann::json doc;
  doc["M"] = seeds.points.size();
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : seeds.points)
    pts.push_back({{"x", p.x}, {"y", p.y}, {"t0", p.t0}, {"cluster", p.cluster}});
  doc["points"] = pts;
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write seeds: " + path.string());
  out << doc.dump(2) << "\n";
}

SeedPoints read_seeds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open seeds: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    raise(ErrorCode::ParseError, "seeds " + path.string() + ": " + e.what());
  }
  SeedPoints out;
  try {
    for (const auto& p : doc.at("points"))
      out.points.push_back(SeedPoint{p.at("x").get<float>(), p.at("y").get<float>(),
                                     p.at("t0").get<int>(), p.at("cluster").get<int>()});
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::ParseError, "seeds " + path.string() + ": " + e.what());
  }
  if (doc.contains("M") && doc["M"].get<std::size_t>() != out.points.size())
    raise(ErrorCode::ParseError, "seed count does not match M field");
  return out;
}

}  // namespace trajtok
