#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace trajtok {

struct BenchRow {
  std::string kernel;
  std::size_t m = 0;       // point count
  std::size_t frames = 0;  // T used for the run
  std::size_t extra = 0;   // bins / channels, kernel dependent
  int runs = 0;
  double median_ns = 0;          // per kernel invocation
  double elements_per_sec = 0;   // output elements / median seconds
};

// Times one of the descriptor/alignment/attention kernels across point
// counts. `runs` timed invocations per size (median reported) after two
// warmup calls; runs <= 0 returns an empty table (dry run).
// Kernels: "hod", "inter", "align", "attention".
std::vector<BenchRow> run_kernel_bench(const std::string& kernel,
                                       const std::vector<std::size_t>& sizes, int runs = 11,
                                       std::size_t frames = 64);

// Least-squares slope of log(y) against log(x).
double fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);
void write_bench_json(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

}  // namespace trajtok
