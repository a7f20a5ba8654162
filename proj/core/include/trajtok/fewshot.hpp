#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "trajtok/align.hpp"
#include "trajtok/manifest.hpp"
#include "trajtok/motion.hpp"
#include "trajtok/net.hpp"

namespace trajtok {

// --- episodes --------------------------------------------------------------

struct Episode {
  int way = 0;
  int shot = 0;
  std::vector<std::size_t> support_videos;  // N*K manifest indices, class-major
  std::vector<int> support_class;           // episode class index per support
  std::vector<std::size_t> query_videos;
  std::vector<int> query_class;
  std::vector<int> episode_global_classes;  // size N; bijection onto the sampled classes
};

Episode sample_episode(const DatasetManifest& manifest, const std::string& split, int way, int shot,
                       int n_query, std::uint64_t seed);

// --- loss -------------------------------------------------------------------

struct LossReport {
  double ce = 0;
  double contrastive = 0;
  double total = 0;
  double episode_acc = 0;
};

template <typename T>
struct EpisodeOutputsT {
  std::vector<TensorT<T>> support_f;      // M x T x C per support video
  std::vector<int> support_class;
  std::vector<TensorT<T>> query_f;
  std::vector<TensorT<T>> query_logits;   // global-class logits per query
  std::vector<int> query_class;           // episode class index
  std::vector<int> query_global_row;      // classifier row; -1 skips the CE term
  int way = 0;
};

template <typename T>
struct LossGradsT {
  std::vector<TensorT<T>> d_support_f;
  std::vector<TensorT<T>> d_query_f;
  std::vector<TensorT<T>> d_query_logits;
};

// Two-part episode loss: cross-entropy of the query global-class logits plus
// a prototype InfoNCE over pooled embeddings (mean of F over M and T;
// prototype = mean of the K support embeddings; cosine logits scaled by
// 1/tau). episode_acc is the fraction of queries whose nearest prototype
// matches. Gradients w.r.t. the network outputs are written when grads is
// non-null.
template <typename T>
LossReport episode_loss(const EpisodeOutputsT<T>& outputs, T tau, LossGradsT<T>* grads);

// --- frozen preprocessing ---------------------------------------------------

enum class Sampling { Semantic, Grid };
enum class IntraKind { Hod, Displacement };

struct PipelineOptions {
  std::size_t M = 256;
  int L = 16;
  int bins = 32;
  int delta = 1;
  Sampling sampling = Sampling::Semantic;
  IntraKind intra_kind = IntraKind::Hod;
  bool use_intra = true;
  bool use_inter = true;
  Interp interp = Interp::Bilinear;
  int threads = 1;
  std::uint64_t seed = 0;  // preprocessing stream (clustering + point draws)

  std::size_t intra_dim() const { return intra_kind == IntraKind::Hod ? static_cast<std::size_t>(bins) : 2; }
  std::size_t inter_dim() const { return 2 * M; }
};

// Parameter-free per-video inputs: trajectory-sampled raw appearance plus
// the motion descriptors. These depend only on the video and the pipeline
// options, never on trainable parameters, so they are computed once.
struct VideoTokens {
  Tensor appearance;  // M x T x C_app
  Tensor intra;       // M x T x (B or 2); empty when intra is off
  Tensor inter;       // M x T x 2M; empty when inter is off
};

VideoTokens preprocess_video(const FeatureVolume& fv, const TrajectorySet& source_tracks,
                             const PipelineOptions& opts, std::uint64_t video_seed);

class VideoCache {
 public:
  VideoCache(const DatasetManifest& manifest, const PipelineOptions& opts);
  const VideoTokens& get(std::size_t video_index);

 private:
  const DatasetManifest& manifest_;
  PipelineOptions opts_;
  std::unordered_map<std::size_t, VideoTokens> cache_;
};

// --- trainable bundle --------------------------------------------------------

template <typename T>
struct ModelParamsT {
  LinearLayerT<T> proj_app, proj_intra, proj_inter;
  NetParamsT<T> net;
};

using ModelParams = ModelParamsT<float>;

struct ModelDims {
  std::size_t app_dim = 0;
  std::size_t intra_dim = 0;
  std::size_t inter_dim = 0;
  std::size_t n_classes = 0;
  std::size_t frames = 0;
};

template <typename T>
ModelParamsT<T> init_model_params(const NetConfig& cfg, const ModelDims& dims, Rng& rng);

template <typename T>
void for_each_param(ModelParamsT<T>& params,
                    const std::function<void(const std::string&, TensorT<T>&)>& fn);

template <typename T>
ModelParamsT<T> zero_like(const ModelParamsT<T>& params);

template <typename To, typename From>
ModelParamsT<To> cast_model(const ModelParamsT<From>& src);

// --- episode pass -------------------------------------------------------------

struct EpisodeBatch {
  std::vector<const VideoTokens*> support;
  std::vector<int> support_class;
  std::vector<const VideoTokens*> query;
  std::vector<int> query_class;
  std::vector<int> query_global_row;
  int way = 0;
};

EpisodeBatch make_batch(const Episode& episode, const DatasetManifest& manifest, VideoCache& cache,
                        const std::vector<int>& classifier_class_ids);

struct PassOptions {
  double tau = 0.1;
  bool use_intra = true;
  bool use_inter = true;
  int threads = 1;
};

template <typename T>
struct PassResultT {
  LossReport report;
  ModelParamsT<T> grads;
  bool has_grads = false;
};

// Shared forward(+backward) evaluation of one episode: projections, fusion,
// network, loss. The finite-difference oracle calls this with want_grads
// false under perturbed parameters; training uses the analytic gradients.
template <typename T>
PassResultT<T> episode_pass(const ModelParamsT<T>& params, const EpisodeBatch& batch,
                            const NetConfig& cfg, const PassOptions& opts, bool want_grads);

// --- training / evaluation ------------------------------------------------------

struct TrainConfig {
  int episodes = 2000;
  int way = 5;
  int shot = 1;
  int n_query = 1;
  double lr = 0.01;
  double momentum = 0.9;
  double tau = 0.1;
  std::uint64_t seed = 0;
  NetConfig net;
  PipelineOptions pipe;
};

struct TrainResult {
  ModelParams params;
  std::vector<LossReport> log;
  std::vector<int> train_class_ids;
};

TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg);

struct Checkpoint {
  ModelParams params;
  TrainConfig cfg;
  std::vector<int> train_class_ids;
  ModelDims dims;
};

// Checkpoints are a directory: config.json plus params/<name>.trok, one
// tensor per parameter, so two checkpoints diff cleanly.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct EvalConfig {
  int episodes = 1000;
  int way = 5;
  int shot = 1;
  int n_query = 1;
  std::uint64_t seed = 0;
  std::string split = "test";
};

struct EvalResult {
  double mean_acc = 0;
  double ci95 = 0;  // normal-approximation binomial interval over all queries
  int episodes = 0;
  int total_queries = 0;
  bool degenerate = false;  // too few episodes for a meaningful interval
};

EvalResult evaluate(const DatasetManifest& manifest, const Checkpoint& ckpt, const EvalConfig& cfg);

}  // namespace trajtok
