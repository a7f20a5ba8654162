#include "trajtok/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>

#include "json.hpp"
#include "trajtok/align.hpp"
#include "trajtok/motion.hpp"
#include "trajtok/net.hpp"
#include "trajtok/rng.hpp"

namespace trajtok {

namespace {

TrajectorySet random_walk_trajectories(std::size_t m, std::size_t frames, Rng& rng) {
  TrajectorySet ts;
  ts.points = Tensor({m, frames, 2});
  ts.visibility = Tensor::full({m, frames}, 1.0f);
  for (std::size_t i = 0; i < m; ++i) {
    double x = rng.uniform(0.3, 0.7), y = rng.uniform(0.3, 0.7);
    for (std::size_t t = 0; t < frames; ++t) {
      ts.points(i, t, 0) = static_cast<float>(x);
      ts.points(i, t, 1) = static_cast<float>(y);
      x = std::clamp(x + rng.uniform(-0.004, 0.004), 0.0, 1.0);
      y = std::clamp(y + rng.uniform(-0.004, 0.004), 0.0, 1.0);
    }
  }
  return ts;
}

double time_median_ns(int runs, const std::function<void()>& fn) {
  fn();
  fn();  // warmup
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(runs));
  for (int i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    samples.push_back(
        std::chrono::duration_cast<std::chrono::duration<double, std::nano>>(stop - start).count());
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

}  // namespace

std::vector<BenchRow> run_kernel_bench(const std::string& kernel,
                                       const std::vector<std::size_t>& sizes, int runs,
                                       std::size_t frames) {
  std::vector<BenchRow> rows;
  if (runs <= 0) return rows;
  constexpr int kBins = 32;
  constexpr std::size_t kAppDim = 32;
  constexpr int kModelDim = 64;

  for (std::size_t m : sizes) {
    if (m == 0) raise(ErrorCode::ConfigError, "bench sizes must be positive");
    Rng rng(mix_seed(0xBE4C4, m));
    BenchRow row;
    row.kernel = kernel;
    row.m = m;
    row.frames = frames;
    row.runs = runs;

    if (kernel == "hod") {
      TrajectorySet ts = random_walk_trajectories(m, frames, rng);
      const HodConfig cfg{kBins, 1};
      row.extra = kBins;
      Tensor sink;
      row.median_ns = time_median_ns(runs, [&] { sink = hod_descriptor(ts, cfg); });
      row.elements_per_sec = static_cast<double>(sink.size()) / (row.median_ns * 1e-9);
    } else if (kernel == "inter") {
      TrajectorySet ts = random_walk_trajectories(m, frames, rng);
      row.extra = 2 * m;
      Tensor sink;
      row.median_ns = time_median_ns(runs, [&] { sink = inter_descriptor(ts); });
      row.elements_per_sec = static_cast<double>(sink.size()) / (row.median_ns * 1e-9);
    } else if (kernel == "align") {
      TrajectorySet ts = random_walk_trajectories(m, frames, rng);
      FeatureVolume fv;
      fv.features = Tensor({16, 16, frames, kAppDim});
      for (std::size_t i = 0; i < fv.features.size(); ++i)
        fv.features[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
      row.extra = kAppDim;
      Tensor sink;
      row.median_ns = time_median_ns(runs, [&] { sink = sample_trajectory_tokens(fv, ts); });
      row.elements_per_sec = static_cast<double>(sink.size()) / (row.median_ns * 1e-9);
    } else if (kernel == "attention") {
      NetConfig cfg;
      cfg.model_dim = kModelDim;
      cfg.heads = 4;
      cfg.blocks = 1;
      Rng prng(7);
      NetParams params = init_net_params<float>(cfg, frames, 4, prng);
      Tensor tokens({m, frames, static_cast<std::size_t>(kModelDim)});
      for (std::size_t i = 0; i < tokens.size(); ++i)
        tokens[i] = static_cast<float>(rng.uniform(-0.5, 0.5));
      row.extra = static_cast<std::size_t>(kModelDim);
      row.median_ns = time_median_ns(runs, [&] {
        auto out = net_forward(tokens, params, cfg);
        (void)out;
      });
      row.elements_per_sec =
          static_cast<double>(tokens.size()) / (row.median_ns * 1e-9);
    } else {
      raise(ErrorCode::ConfigError, "unknown bench kernel '" + kernel + "'");
    }
    rows.push_back(row);
  }
  return rows;
}

double fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) raise(ErrorCode::ConfigError, "slope fit needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(points.size());
  for (const auto& [x, y] : points) {
    const double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out << "kernel,M,frames,extra,runs,median_ns,elements_per_sec\n";
  for (const auto& r : rows)
    out << r.kernel << "," << r.m << "," << r.frames << "," << r.extra << "," << r.runs << ","
        << r.median_ns << "," << r.elements_per_sec << "\n";
}

void write_bench_json(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : rows)
    doc.push_back({{"kernel", r.kernel},
                   {"M", r.m},
                   {"frames", r.frames},
                   {"extra", r.extra},
                   {"runs", r.runs},
                   {"median_ns", r.median_ns},
                   {"elements_per_sec", r.elements_per_sec}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace trajtok
