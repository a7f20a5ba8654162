// trajtok: synthetic data generation, token clustering, semantic point
// sampling, motion descriptors, episodic training/evaluation and kernel
// micro-benchmarks behind one binary.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "trajtok/bench.hpp"
#include "trajtok/clustering.hpp"
#include "trajtok/fewshot.hpp"
#include "trajtok/pipeline.hpp"
#include "trajtok/sampler.hpp"
#include "trajtok/synthgen.hpp"
#include "trajtok/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trajtok;

namespace {

// run.json lands next to the primary output: <dir>/run.json for directory
// outputs, <stem>.run.json for file outputs.
fs::path run_json_path(const fs::path& primary_out, bool is_dir) {
  if (is_dir) return primary_out / "run.json";
  fs::path p = primary_out;
  p.replace_extension();
  p += ".run.json";
  return p;
}

void emit_run_json(const fs::path& primary_out, bool is_dir, const std::string& subcommand,
                   std::uint64_t seed, bool deterministic, int threads, const json& config,
                   const std::vector<std::string>& artifacts) {
  write_run_json(run_json_path(primary_out, is_dir), subcommand, seed, deterministic, threads,
                 config_hash_hex(config.dump()), artifacts);
}

std::vector<std::size_t> parse_sizes(const std::string& csv) {
  std::vector<std::size_t> sizes;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    const std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!tok.empty()) sizes.push_back(static_cast<std::size_t>(std::stoull(tok)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (sizes.empty()) throw Error(ErrorCode::ConfigError, "no sizes given");
  return sizes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory-token motion modeling pipeline"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  bool deterministic = false;
  int threads = 1;
  app.add_option("--seed", seed, "global RNG seed")->capture_default_str();
  app.add_flag("--deterministic", deterministic, "force single-threaded deterministic execution");
  app.add_option("--threads", threads, "worker threads for the kernels")->capture_default_str();

  // --- gen -------------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  int gen_classes = 8, gen_per_class = 20, gen_grid = 16, gen_frames = 8, gen_dim = 32;
  float gen_noise = 0.05f;
  std::string gen_mode = "neutral", gen_out, gen_scene_set = "motion8", gen_train_classes;
  gen->add_option("--classes", gen_classes, "number of motion classes")->capture_default_str();
  gen->add_option("--per-class", gen_per_class, "videos per class")->capture_default_str();
  gen->add_option("--mode", gen_mode, "appearance mode: neutral|distinct")->capture_default_str();
  gen->add_option("--grid", gen_grid, "token grid side")->capture_default_str();
  gen->add_option("--frames", gen_frames, "frames per video")->capture_default_str();
  gen->add_option("--feature-dim", gen_dim, "appearance channels")->capture_default_str();
  gen->add_option("--noise-sigma", gen_noise, "appearance noise sigma")->capture_default_str();
  gen->add_option("--scene-set", gen_scene_set, "motion8|multiplicity4")->capture_default_str();
  gen->add_option("--train-classes", gen_train_classes,
                  "comma-separated train class ids (default: all but last two)");
  gen->add_option("--out", gen_out, "output directory")->required();

  // --- cluster ----------------------------------------------------------------
  auto* cluster = app.add_subcommand("cluster", "cluster appearance tokens");
  std::string cluster_features, cluster_out;
  int cluster_l = 16;
  cluster->add_option("--features", cluster_features, "feature volume .trok")->required();
  cluster->add_option("--L", cluster_l, "requested cluster count")->capture_default_str();
  cluster->add_option("--out", cluster_out, "output label tensor .trok")->required();

  // --- sample -----------------------------------------------------------------
  auto* sample = app.add_subcommand("sample", "sample seed points");
  std::string sample_assign, sample_features, sample_mode = "semantic", sample_out;
  std::size_t sample_m = 256;
  sample->add_option("--assign", sample_assign, "cluster label tensor .trok (semantic mode)");
  sample->add_option("--features", sample_features, "feature volume .trok (semantic mode)");
  sample->add_option("--M", sample_m, "number of points")->capture_default_str();
  sample->add_option("--mode", sample_mode, "semantic|grid")->capture_default_str();
  sample->add_option("--out", sample_out, "output seeds .json")->required();

  // --- track ------------------------------------------------------------------
  auto* track = app.add_subcommand("track", "snap seeds to trajectories");
  std::string track_seeds, track_source = "gt", track_tracks, track_out;
  track->add_option("--seeds", track_seeds, "seed points .json")->required();
  track->add_option("--source", track_source, "gt|file (both read a trajectory .trok)")
      ->capture_default_str();
  track->add_option("--tracks", track_tracks, "source trajectory .trok")->required();
  track->add_option("--out", track_out, "output trajectory .trok")->required();

  // --- motion -----------------------------------------------------------------
  auto* motion = app.add_subcommand("motion", "compute motion descriptors");
  std::string motion_traj, motion_out;
  int motion_bins = 32, motion_delta = 1;
  motion->add_option("--traj", motion_traj, "trajectory .trok")->required();
  motion->add_option("--bins", motion_bins, "HoD bins")->capture_default_str();
  motion->add_option("--delta", motion_delta, "temporal interval")->capture_default_str();
  motion->add_option("--out", motion_out, "comma-separated hod.trok,cross.trok outputs")->required();

  // --- train --------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "episodic training");
  std::string train_manifest, train_out, train_sampling = "semantic", train_intra = "hod",
              train_interp = "bilinear";
  int train_episodes = 2000, train_way = 5, train_shot = 1, train_queries = 1;
  std::size_t train_m = 256;
  int train_l = 16, train_bins = 32, train_delta = 1;
  int train_dim = 64, train_heads = 4, train_blocks = 1;
  double train_lr = 0.01, train_momentum = 0.9, train_tau = 0.1;
  bool no_intra = false, no_inter = false, train_mlp = false;
  train_cmd->add_option("--manifest", train_manifest, "dataset manifest")->required();
  train_cmd->add_option("--episodes", train_episodes)->capture_default_str();
  train_cmd->add_option("--way", train_way)->capture_default_str();
  train_cmd->add_option("--shot", train_shot)->capture_default_str();
  train_cmd->add_option("--queries", train_queries)->capture_default_str();
  train_cmd->add_option("--M", train_m, "points per video")->capture_default_str();
  train_cmd->add_option("--L", train_l, "clusters")->capture_default_str();
  train_cmd->add_option("--bins", train_bins)->capture_default_str();
  train_cmd->add_option("--delta", train_delta)->capture_default_str();
  train_cmd->add_option("--sampling", train_sampling, "semantic|grid")->capture_default_str();
  train_cmd->add_option("--intra", train_intra, "hod|displacement")->capture_default_str();
  train_cmd->add_option("--interp", train_interp, "bilinear|nearest")->capture_default_str();
  train_cmd->add_flag("--no-intra", no_intra, "drop intra-motion tokens");
  train_cmd->add_flag("--no-inter", no_inter, "drop inter-motion tokens");
  train_cmd->add_option("--dim", train_dim, "model dim")->capture_default_str();
  train_cmd->add_option("--heads", train_heads)->capture_default_str();
  train_cmd->add_option("--blocks", train_blocks)->capture_default_str();
  train_cmd->add_flag("--mlp", train_mlp, "enable the MLP sublayer");
  train_cmd->add_option("--lr", train_lr)->capture_default_str();
  train_cmd->add_option("--momentum", train_momentum)->capture_default_str();
  train_cmd->add_option("--tau", train_tau)->capture_default_str();
  train_cmd->add_option("--out", train_out, "checkpoint directory")->required();

  // --- eval -----------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "episodic evaluation");
  std::string eval_manifest, eval_ckpt, eval_json;
  int eval_episodes = 1000, eval_way = 5, eval_shot = 1, eval_queries = 1;
  std::string eval_split = "test";
  eval_cmd->add_option("--manifest", eval_manifest)->required();
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint directory")->required();
  eval_cmd->add_option("--episodes", eval_episodes)->capture_default_str();
  eval_cmd->add_option("--way", eval_way)->capture_default_str();
  eval_cmd->add_option("--shot", eval_shot)->capture_default_str();
  eval_cmd->add_option("--queries", eval_queries)->capture_default_str();
  eval_cmd->add_option("--split", eval_split)->capture_default_str();
  eval_cmd->add_option("--json", eval_json, "report output path")->required();

  // --- bench -----------------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "kernel micro-benchmarks");
  std::string bench_kernel = "hod", bench_sizes = "32,64,128,256", bench_json_out, bench_csv_out;
  int bench_runs = 11;
  std::size_t bench_frames = 64;
  bench_cmd->add_option("--kernel", bench_kernel, "hod|inter|align|attention")->capture_default_str();
  bench_cmd->add_option("--sizes", bench_sizes, "comma-separated point counts")->capture_default_str();
  bench_cmd->add_option("--runs", bench_runs, "timed runs per size (0 = dry run)")->capture_default_str();
  bench_cmd->add_option("--frames", bench_frames)->capture_default_str();
  bench_cmd->add_option("--json", bench_json_out, "write JSON table here");
  bench_cmd->add_option("--csv", bench_csv_out, "write CSV table here");

  // --- pipeline ----------------------------------------------------------------------
  auto* pipe_cmd = app.add_subcommand("pipeline", "run configured stages end to end");
  std::string pipe_config, pipe_out;
  pipe_cmd->add_option("--config", pipe_config, "pipeline config .json")->required();
  pipe_cmd->add_option("--out", pipe_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  if (deterministic) threads = 1;

  try {
    if (*gen) {
      const AppearanceMode mode = gen_mode == "neutral" ? AppearanceMode::Neutral
                                  : gen_mode == "distinct"
                                      ? AppearanceMode::Distinct
                                      : throw Error(ErrorCode::ConfigError,
                                                    "mode must be neutral or distinct");
      std::vector<SceneSpec> specs =
          gen_scene_set == "multiplicity4"
              ? direction_multiplicity_classes(mode, gen_grid, gen_frames, gen_dim, gen_noise)
              : default_motion_classes(mode, gen_grid, gen_frames, gen_dim, gen_noise);
      if (gen_classes < 1 || static_cast<std::size_t>(gen_classes) > specs.size())
        throw Error(ErrorCode::ConfigError, "classes out of range for scene set");
      specs.resize(static_cast<std::size_t>(gen_classes));
      std::vector<int> train_ids;
      if (gen_train_classes.empty()) {
        for (std::size_t i = 0; i + 2 < specs.size(); ++i)
          train_ids.push_back(specs[i].objects.at(0).program.class_id);
      } else {
        for (std::size_t sz : parse_sizes(gen_train_classes))
          train_ids.push_back(static_cast<int>(sz));
      }
      generate_dataset(gen_per_class, specs, gen_out, seed, train_ids);
      json cfg{{"classes", gen_classes}, {"per_class", gen_per_class}, {"mode", gen_mode},
               {"grid", gen_grid},       {"frames", gen_frames},       {"dim", gen_dim},
               {"noise", gen_noise},     {"scene_set", gen_scene_set}, {"seed", seed}};
      emit_run_json(gen_out, true, "gen", seed, deterministic, threads, cfg, {"manifest.json"});
    } else if (*cluster) {
      FeatureVolume fv = read_features(cluster_features);
      ClusterAssignment assignment = cluster_tokens(fv, cluster_l, seed);
      write_tensor(cluster_out, assignment.labels);
      std::cout << "L_effective " << assignment.num_clusters() << "\n";
      json cfg{{"features", cluster_features}, {"L", cluster_l}, {"seed", seed}};
      emit_run_json(cluster_out, false, "cluster", seed, deterministic, threads, cfg,
                    {fs::path(cluster_out).filename().string()});
    } else if (*sample) {
      SeedPoints seeds;
      if (sample_mode == "semantic") {
        if (sample_assign.empty() || sample_features.empty())
          throw Error(ErrorCode::ConfigError, "semantic sampling needs --assign and --features");
        FeatureVolume fv = read_features(sample_features);
        ClusterAssignment assignment = assignment_from_labels(read_tensor(sample_assign), fv);
        seeds = sample_semantic(assignment, sample_m, seed);
      } else if (sample_mode == "grid") {
        seeds = sample_uniform_grid(sample_m, 0);
      } else {
        throw Error(ErrorCode::ConfigError, "mode must be semantic or grid");
      }
      write_seeds(sample_out, seeds);
      json cfg{{"mode", sample_mode}, {"M", sample_m}, {"seed", seed}};
      emit_run_json(sample_out, false, "sample", seed, deterministic, threads, cfg,
                    {fs::path(sample_out).filename().string()});
    } else if (*track) {
      if (track_source != "gt" && track_source != "file")
        throw Error(ErrorCode::ConfigError, "source must be gt or file");
      SeedPoints seeds = read_seeds(track_seeds);
      TrajectorySet source = read_trajectories(track_tracks);
      TrajectorySet out = track_points(seeds, source);
      write_trajectories(track_out, out);
      json cfg{{"seeds", track_seeds}, {"source", track_source}, {"tracks", track_tracks}};
      emit_run_json(track_out, false, "track", seed, deterministic, threads, cfg,
                    {fs::path(track_out).filename().string()});
    } else if (*motion) {
      const auto comma = motion_out.find(',');
      if (comma == std::string::npos)
        throw Error(ErrorCode::ConfigError, "--out needs hod.trok,cross.trok");
      const std::string hod_path = motion_out.substr(0, comma);
      const std::string cross_path = motion_out.substr(comma + 1);
      TrajectorySet traj = read_trajectories(motion_traj);
      write_tensor(hod_path, hod_descriptor(traj, HodConfig{motion_bins, motion_delta}, threads));
      write_tensor(cross_path, inter_descriptor(traj, threads));
      json cfg{{"traj", motion_traj}, {"bins", motion_bins}, {"delta", motion_delta}};
      emit_run_json(hod_path, false, "motion", seed, deterministic, threads, cfg,
                    {fs::path(hod_path).filename().string(), fs::path(cross_path).filename().string()});
    } else if (*train_cmd) {
      DatasetManifest manifest = load_manifest(train_manifest);
      TrainConfig cfg;
      cfg.episodes = train_episodes;
      cfg.way = train_way;
      cfg.shot = train_shot;
      cfg.n_query = train_queries;
      cfg.lr = train_lr;
      cfg.momentum = train_momentum;
      cfg.tau = train_tau;
      cfg.seed = seed;
      cfg.net.model_dim = train_dim;
      cfg.net.heads = train_heads;
      cfg.net.blocks = train_blocks;
      cfg.net.mlp = train_mlp;
      cfg.pipe.M = train_m;
      cfg.pipe.L = train_l;
      cfg.pipe.bins = train_bins;
      cfg.pipe.delta = train_delta;
      cfg.pipe.sampling = train_sampling == "grid" ? Sampling::Grid : Sampling::Semantic;
      cfg.pipe.intra_kind =
          train_intra == "displacement" ? IntraKind::Displacement : IntraKind::Hod;
      cfg.pipe.use_intra = !no_intra;
      cfg.pipe.use_inter = !no_inter;
      cfg.pipe.interp = train_interp == "nearest" ? Interp::Nearest : Interp::Bilinear;
      cfg.pipe.threads = threads;
      cfg.pipe.seed = mix_seed(seed, 0x9199e11e);
      TrainResult res = train(manifest, cfg);

      Checkpoint ckpt;
      ckpt.params = std::move(res.params);
      ckpt.cfg = cfg;
      ckpt.train_class_ids = res.train_class_ids;
      ckpt.dims.app_dim = ckpt.params.proj_app.in_dim();
      ckpt.dims.intra_dim = ckpt.params.proj_intra.in_dim();
      ckpt.dims.inter_dim = ckpt.params.proj_inter.in_dim();
      ckpt.dims.n_classes = ckpt.params.net.classifier_w.dim(0);
      ckpt.dims.frames = ckpt.params.net.pos_embed.dim(0);
      save_checkpoint(train_out, ckpt);

      std::ofstream log(fs::path(train_out) / "train_log.jsonl", std::ios::trunc);
      for (std::size_t i = 0; i < res.log.size(); ++i)
        log << json{{"episode", i},
                    {"ce", res.log[i].ce},
                    {"contrastive", res.log[i].contrastive},
                    {"total", res.log[i].total},
                    {"acc", res.log[i].episode_acc}}
                   .dump()
            << "\n";
      json cfg_json{{"manifest", train_manifest}, {"episodes", train_episodes},
                    {"way", train_way},           {"shot", train_shot},
                    {"M", train_m},               {"sampling", train_sampling},
                    {"no_intra", no_intra},       {"no_inter", no_inter},
                    {"seed", seed}};
      emit_run_json(train_out, true, "train", seed, deterministic, threads, cfg_json,
                    {"config.json", "train_log.jsonl"});
    } else if (*eval_cmd) {
      DatasetManifest manifest = load_manifest(eval_manifest);
      Checkpoint ckpt = load_checkpoint(eval_ckpt);
      if (threads > 1) ckpt.cfg.pipe.threads = threads;
      if (deterministic) ckpt.cfg.pipe.threads = 1;
      EvalConfig cfg;
      cfg.episodes = eval_episodes;
      cfg.way = eval_way;
      cfg.shot = eval_shot;
      cfg.n_query = eval_queries;
      cfg.seed = seed;
      cfg.split = eval_split;
      EvalResult res = evaluate(manifest, ckpt, cfg);
      json doc{{"way", cfg.way},
               {"shot", cfg.shot},
               {"episodes", res.episodes},
               {"accuracy", res.mean_acc},
               {"ci95", res.ci95},
               {"total_queries", res.total_queries},
               {"degenerate", res.degenerate}};
      std::ofstream out(eval_json, std::ios::trunc);
      if (!out) throw Error(ErrorCode::IoError, "cannot write " + eval_json);
      out << doc.dump(2) << "\n";
      std::cout << "accuracy " << res.mean_acc << " +- " << res.ci95 << "\n";
      json cfg_json{{"manifest", eval_manifest}, {"ckpt", eval_ckpt},   {"episodes", eval_episodes},
                    {"way", eval_way},           {"shot", eval_shot},   {"split", eval_split},
                    {"seed", seed}};
      emit_run_json(eval_json, false, "eval", seed, deterministic, threads, cfg_json,
                    {fs::path(eval_json).filename().string()});
    } else if (*bench_cmd) {
      const auto sizes = parse_sizes(bench_sizes);
      const auto rows = run_kernel_bench(bench_kernel, sizes, bench_runs, bench_frames);
      for (const auto& r : rows)
        std::cout << r.kernel << " M=" << r.m << " median_ns=" << r.median_ns
                  << " elems/s=" << r.elements_per_sec << "\n";
      if (!bench_json_out.empty()) write_bench_json(bench_json_out, rows);
      if (!bench_csv_out.empty()) write_bench_csv(bench_csv_out, rows);
      json cfg{{"kernel", bench_kernel}, {"sizes", bench_sizes}, {"runs", bench_runs}};
      const fs::path anchor = !bench_json_out.empty() ? fs::path(bench_json_out)
                              : !bench_csv_out.empty() ? fs::path(bench_csv_out)
                                                       : fs::path("bench.out");
      if (!bench_json_out.empty() || !bench_csv_out.empty())
        emit_run_json(anchor, false, "bench", seed, deterministic, threads, cfg, {});
    } else if (*pipe_cmd) {
      run_pipeline(pipe_config, pipe_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
