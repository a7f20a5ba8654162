#include "trajtok/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "json.hpp"
#include "trajtok/fewshot.hpp"
#include "trajtok/rng.hpp"
#include "trajtok/synthgen.hpp"

namespace trajtok {

using nlohmann::json;

namespace {

const json& require(const json& doc, const std::string& key) {
  if (!doc.contains(key)) raise(ErrorCode::ConfigError, "missing required field: " + key);
  return doc.at(key);
}

AppearanceMode mode_from(const std::string& s) {
  if (s == "neutral") return AppearanceMode::Neutral;
  if (s == "distinct") return AppearanceMode::Distinct;
  raise(ErrorCode::ConfigError, "appearance mode must be neutral or distinct, got '" + s + "'");
}

std::vector<SceneSpec> scene_set(const json& gen, AppearanceMode mode) {
  const std::string set = gen.value("scene_set", "motion8");
  const int grid = gen.value("grid", 16);
  const int frames = gen.value("frames", 8);
  const int dim = gen.value("feature_dim", 32);
  const float noise = gen.value("noise_sigma", 0.05f);
  std::vector<SceneSpec> specs;
  if (set == "motion8")
    specs = default_motion_classes(mode, grid, frames, dim, noise);
  else if (set == "multiplicity4")
    specs = direction_multiplicity_classes(mode, grid, frames, dim, noise);
  else
    raise(ErrorCode::ConfigError, "unknown scene_set '" + set + "'");
  if (gen.contains("classes")) {
    const auto n = gen.at("classes").get<std::size_t>();
    if (n < 1 || n > specs.size())
      raise(ErrorCode::ConfigError, "classes must be in [1, " + std::to_string(specs.size()) + "]");
    specs.resize(n);
  }
  return specs;
}

PipelineOptions pipe_options(const json& doc, int threads, std::uint64_t seed) {
  PipelineOptions p;
  if (doc.contains("pipeline")) {
    const json& j = doc.at("pipeline");
    p.M = j.value("M", std::size_t(256));
    p.L = j.value("L", 16);
    p.bins = j.value("bins", 32);
    p.delta = j.value("delta", 1);
    const std::string sampling = j.value("sampling", "semantic");
    if (sampling != "semantic" && sampling != "grid")
      raise(ErrorCode::ConfigError, "sampling must be semantic or grid");
    p.sampling = sampling == "grid" ? Sampling::Grid : Sampling::Semantic;
    const std::string intra = j.value("intra", "hod");
    if (intra != "hod" && intra != "displacement")
      raise(ErrorCode::ConfigError, "intra must be hod or displacement");
    p.intra_kind = intra == "displacement" ? IntraKind::Displacement : IntraKind::Hod;
    p.use_intra = j.value("use_intra", true);
    p.use_inter = j.value("use_inter", true);
    const std::string interp = j.value("interp", "bilinear");
    if (interp != "bilinear" && interp != "nearest")
      raise(ErrorCode::ConfigError, "interp must be bilinear or nearest");
    p.interp = interp == "nearest" ? Interp::Nearest : Interp::Bilinear;
  }
  p.threads = threads;
  p.seed = mix_seed(seed, 0x9199e11e);
  return p;
}

}  // namespace

std::string config_hash_hex(const std::string& canonical_config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config)));
  return buf;
}

void write_run_json(const std::filesystem::path& path, const std::string& subcommand,
                    std::uint64_t seed, bool deterministic, int threads,
                    const std::string& config_hash, const std::vector<std::string>& artifacts) {
  json doc;
  doc["tool"] = "trajtok";
  doc["version"] = kToolVersion;
  doc["subcommand"] = subcommand;
  doc["seed"] = seed;
  doc["deterministic"] = deterministic;
  doc["threads"] = threads;
  doc["config_hash"] = config_hash;
  doc["artifacts"] = artifacts;
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

PipelineResult run_pipeline(const std::filesystem::path& config_path,
                            const std::filesystem::path& out_dir) {
  std::ifstream in(config_path);
  if (!in) raise(ErrorCode::IoError, "cannot open config: " + config_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::ParseError, "config " + config_path.string() + ": " + e.what());
  }

  const auto seed = require(doc, "seed").get<std::uint64_t>();
  const bool deterministic = doc.value("deterministic", true);
  int threads = doc.value("threads", 1);
  if (deterministic) threads = 1;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) raise(ErrorCode::IoError, "cannot create " + out_dir.string());

  const std::string cfg_hash = config_hash_hex(doc.dump());
  json report;
  report["config_hash"] = cfg_hash;
  report["seed"] = seed;
  std::vector<std::string> artifacts;

  // --- dataset ---------------------------------------------------------------
  DatasetManifest manifest;
  if (doc.contains("gen")) {
    const json& gen = doc.at("gen");
    const AppearanceMode mode = mode_from(require(gen, "mode").get<std::string>());
    const auto specs = scene_set(gen, mode);
    const int per_class = require(gen, "per_class").get<int>();
    std::vector<int> train_ids;
    if (gen.contains("train_classes")) {
      train_ids = gen.at("train_classes").get<std::vector<int>>();
    } else {
      // default: all but the last two classes train
      for (std::size_t i = 0; i + 2 < specs.size(); ++i)
        train_ids.push_back(specs[i].objects.at(0).program.class_id);
    }
    manifest = generate_dataset(per_class, specs, out_dir / "data", mix_seed(seed, 0xDA7A), train_ids);
    report["dataset"] = {{"manifest", "data/manifest.json"},
                         {"videos", manifest.videos.size()},
                         {"classes", manifest.class_names.size()}};
    artifacts.push_back("data/manifest.json");
  } else if (doc.contains("dataset")) {
    manifest = load_manifest(doc.at("dataset").get<std::string>());
    report["dataset"] = {{"manifest", doc.at("dataset").get<std::string>()},
                         {"videos", manifest.videos.size()},
                         {"classes", manifest.class_names.size()}};
  } else {
    raise(ErrorCode::ConfigError, "missing required field: gen or dataset");
  }

  // --- train -------------------------------------------------------------------
  Checkpoint ckpt;
  bool trained = false;
  if (doc.contains("train")) {
    const json& tr = doc.at("train");
    TrainConfig cfg;
    cfg.episodes = require(tr, "episodes").get<int>();
    cfg.way = tr.value("way", 5);
    cfg.shot = tr.value("shot", 1);
    cfg.n_query = tr.value("queries", 1);
    cfg.lr = tr.value("lr", 0.01);
    cfg.momentum = tr.value("momentum", 0.9);
    cfg.tau = tr.value("tau", 0.1);
    cfg.seed = mix_seed(seed, 0x7214);
    cfg.pipe = pipe_options(doc, threads, seed);
    if (doc.contains("net")) {
      const json& nj = doc.at("net");
      cfg.net.model_dim = nj.value("dim", 64);
      cfg.net.heads = nj.value("heads", 4);
      cfg.net.blocks = nj.value("blocks", 1);
      cfg.net.mlp = nj.value("mlp", false);
      cfg.net.mlp_hidden = nj.value("mlp_hidden", 0);
    }
    TrainResult res = train(manifest, cfg);

    ckpt.params = std::move(res.params);
    ckpt.cfg = cfg;
    ckpt.train_class_ids = res.train_class_ids;
    ckpt.dims.app_dim = ckpt.params.proj_app.in_dim();
    ckpt.dims.intra_dim = ckpt.params.proj_intra.in_dim();
    ckpt.dims.inter_dim = ckpt.params.proj_inter.in_dim();
    ckpt.dims.n_classes = ckpt.params.net.classifier_w.dim(0);
    ckpt.dims.frames = ckpt.params.net.pos_embed.dim(0);
    save_checkpoint(out_dir / "ckpt", ckpt);
    artifacts.push_back("ckpt/config.json");
    trained = true;

    std::ofstream log(out_dir / "train_log.jsonl", std::ios::trunc);
    double tail_loss = 0, tail_acc = 0;
    const std::size_t tail = std::min<std::size_t>(50, res.log.size());
    for (std::size_t i = 0; i < res.log.size(); ++i) {
      const auto& r = res.log[i];
      log << json{{"episode", i},
                  {"ce", r.ce},
                  {"contrastive", r.contrastive},
                  {"total", r.total},
                  {"acc", r.episode_acc}}
                 .dump()
          << "\n";
      if (i + tail >= res.log.size()) {
        tail_loss += r.total;
        tail_acc += r.episode_acc;
      }
    }
    artifacts.push_back("train_log.jsonl");
    report["train"] = {{"episodes", cfg.episodes},
                       {"way", cfg.way},
                       {"shot", cfg.shot},
                       {"tail_mean_loss", tail ? tail_loss / static_cast<double>(tail) : 0.0},
                       {"tail_mean_acc", tail ? tail_acc / static_cast<double>(tail) : 0.0}};
  }

  // --- eval ---------------------------------------------------------------------
  if (doc.contains("eval")) {
    if (!trained) raise(ErrorCode::ConfigError, "eval stage requires a train stage");
    const json& ev = doc.at("eval");
    EvalConfig ecfg;
    ecfg.episodes = require(ev, "episodes").get<int>();
    ecfg.way = ev.value("way", ckpt.cfg.way);
    ecfg.n_query = ev.value("queries", 1);
    ecfg.seed = mix_seed(seed, 0xE7A1);
    ecfg.split = ev.value("split", std::string("test"));
    std::vector<int> shots;
    if (ev.contains("shots"))
      shots = ev.at("shots").get<std::vector<int>>();
    else
      shots.push_back(ev.value("shot", ckpt.cfg.shot));
    json evals = json::array();
    for (int shot : shots) {
      ecfg.shot = shot;
      EvalResult r = evaluate(manifest, ckpt, ecfg);
      evals.push_back({{"way", ecfg.way},
                       {"shot", shot},
                       {"episodes", r.episodes},
                       {"accuracy", r.mean_acc},
                       {"ci95", r.ci95},
                       {"total_queries", r.total_queries},
                       {"degenerate", r.degenerate}});
    }
    report["eval"] = evals;
  }

  PipelineResult result;
  result.report_path = out_dir / "report.json";
  {
    std::ofstream out(result.report_path, std::ios::trunc);
    if (!out) raise(ErrorCode::IoError, "cannot write report.json");
    out << report.dump(2) << "\n";
  }
  artifacts.push_back("report.json");
  result.run_path = out_dir / "run.json";
  write_run_json(result.run_path, "pipeline", seed, deterministic, threads, cfg_hash, artifacts);
  return result;
}

}  // namespace trajtok
