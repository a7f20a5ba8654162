#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace trajtok {

// End-to-end driver behind the `pipeline` CLI subcommand: generate (or load)
// a dataset, train, evaluate, and write report.json plus run.json into
// out_dir. Everything in the report is derived from the config and seeds, so
// identical configs reproduce identical bytes.
struct PipelineResult {
  std::filesystem::path report_path;
  std::filesystem::path run_path;
};

PipelineResult run_pipeline(const std::filesystem::path& config_path,
                            const std::filesystem::path& out_dir);

// FNV-1a hash of a canonical config serialization, as a hex string.
std::string config_hash_hex(const std::string& canonical_config);

// Writes the run.json bookkeeping file every CLI subcommand emits:
// tool version, subcommand, seed, determinism flags, config hash, artifacts.
void write_run_json(const std::filesystem::path& path, const std::string& subcommand,
                    std::uint64_t seed, bool deterministic, int threads,
                    const std::string& config_hash, const std::vector<std::string>& artifacts);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace trajtok
