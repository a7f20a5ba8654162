#include "trajtok/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"
#include "trajtok/linalg.hpp"
#include "trajtok/sampler.hpp"
#include "trajtok/tensor_io.hpp"

namespace trajtok {

using nlohmann::json;

// --- episodes ----------------------------------------------------------------

Episode sample_episode(const DatasetManifest& manifest, const std::string& split, int way, int shot,
                       int n_query, std::uint64_t seed) {
  if (way < 1 || shot < 1 || n_query < 1)
    raise(ErrorCode::ConfigError, "way, shot and n_query must be >= 1");
  const auto& classes = manifest.split_classes(split);
  if (static_cast<int>(classes.size()) < way)
    raise(ErrorCode::InsufficientData, "split '" + split + "' has " +
                                           std::to_string(classes.size()) + " classes, need " +
                                           std::to_string(way));
  // Train/test disjointness is a manifest invariant; re-check it per episode
  // since episodes are the unit the guarantee matters for.
  if (manifest.split.count("train") && manifest.split.count("test")) {
    std::set<int> train(manifest.split.at("train").begin(), manifest.split.at("train").end());
    for (int c : manifest.split.at("test"))
      if (train.count(c)) raise(ErrorCode::SplitOverlap, "train/test class overlap at episode time");
  }

  Rng rng(seed);
  std::vector<int> pool = classes;
  for (int n = 0; n < way; ++n) {
    const std::size_t pick = static_cast<std::size_t>(n) + rng.index(pool.size() - static_cast<std::size_t>(n));
    std::swap(pool[static_cast<std::size_t>(n)], pool[pick]);
  }

  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.episode_global_classes.assign(pool.begin(), pool.begin() + way);
  for (int n = 0; n < way; ++n) {
    const int cls = ep.episode_global_classes[static_cast<std::size_t>(n)];
    std::vector<std::size_t> vids = manifest.videos_of_class(cls);
    const std::size_t need = static_cast<std::size_t>(shot + n_query);
    if (vids.size() < need)
      raise(ErrorCode::InsufficientData, "class " + std::to_string(cls) + " has " +
                                             std::to_string(vids.size()) + " videos, need " +
                                             std::to_string(need));
    for (std::size_t j = 0; j < need; ++j) {
      const std::size_t pick = j + rng.index(vids.size() - j);
      std::swap(vids[j], vids[pick]);
    }
    for (int k = 0; k < shot; ++k) {
      ep.support_videos.push_back(vids[static_cast<std::size_t>(k)]);
      ep.support_class.push_back(n);
    }
    for (int q = 0; q < n_query; ++q) {
      ep.query_videos.push_back(vids[static_cast<std::size_t>(shot + q)]);
      ep.query_class.push_back(n);
    }
  }
  return ep;
}

// --- loss ----------------------------------------------------------------------

namespace {

template <typename T>
std::vector<T> pooled_embedding(const TensorT<T>& f) {
  const std::size_t C = f.dim(2);
  const std::size_t rows = f.dim(0) * f.dim(1);
  std::vector<T> e(C, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = f.data() + r * C;
    for (std::size_t c = 0; c < C; ++c) e[c] += row[c];
  }
  for (auto& v : e) v /= static_cast<T>(rows);
  return e;
}

template <typename T>
T vec_norm(const std::vector<T>& v) {
  T s = 0;
  for (T x : v) s += x * x;
  return std::max(std::sqrt(s), static_cast<T>(1e-12));
}

template <typename T>
T vec_dot(const std::vector<T>& a, const std::vector<T>& b) {
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

template <typename T>
LossReport episode_loss(const EpisodeOutputsT<T>& outputs, T tau, LossGradsT<T>* grads) {
  if (tau <= T(0)) raise(ErrorCode::ConfigError, "temperature tau must be > 0");
  const int way = outputs.way;
  if (way < 1) raise(ErrorCode::ConfigError, "episode way must be >= 1");
  const std::size_t n_support = outputs.support_f.size();
  const std::size_t n_query = outputs.query_f.size();
  if (n_support == 0 || n_query == 0)
    raise(ErrorCode::ShapeError, "episode needs support and query outputs");
  if (n_support % static_cast<std::size_t>(way) != 0)
    raise(ErrorCode::ShapeError, "support count is not way * shot");
  const std::size_t shot = n_support / static_cast<std::size_t>(way);
  for (const auto& f : outputs.support_f)
    if (!f.same_shape(outputs.support_f[0])) raise(ErrorCode::ShapeError, "support shapes differ");
  for (const auto& f : outputs.query_f)
    if (!f.same_shape(outputs.support_f[0])) raise(ErrorCode::ShapeError, "query shapes differ");

  const std::size_t C = outputs.support_f[0].dim(2);
  const std::size_t rows = outputs.support_f[0].dim(0) * outputs.support_f[0].dim(1);

  // pooled embeddings and class prototypes
  std::vector<std::vector<T>> sup_e(n_support), qry_e(n_query);
  for (std::size_t i = 0; i < n_support; ++i) sup_e[i] = pooled_embedding(outputs.support_f[i]);
  for (std::size_t i = 0; i < n_query; ++i) qry_e[i] = pooled_embedding(outputs.query_f[i]);

  std::vector<std::vector<T>> proto(static_cast<std::size_t>(way), std::vector<T>(C, T(0)));
  std::vector<std::size_t> proto_count(static_cast<std::size_t>(way), 0);
  for (std::size_t i = 0; i < n_support; ++i) {
    const int cls = outputs.support_class[i];
    if (cls < 0 || cls >= way) raise(ErrorCode::ShapeError, "support class outside [0, way)");
    for (std::size_t c = 0; c < C; ++c) proto[static_cast<std::size_t>(cls)][c] += sup_e[i][c];
    ++proto_count[static_cast<std::size_t>(cls)];
  }
  for (int n = 0; n < way; ++n) {
    if (proto_count[static_cast<std::size_t>(n)] != shot)
      raise(ErrorCode::ShapeError, "support classes are not balanced");
    for (auto& v : proto[static_cast<std::size_t>(n)]) v /= static_cast<T>(shot);
  }

  if (grads) {
    grads->d_support_f.assign(n_support, TensorT<T>(outputs.support_f[0].shape()));
    grads->d_query_f.assign(n_query, TensorT<T>(outputs.query_f[0].shape()));
    grads->d_query_logits.resize(n_query);
    for (std::size_t i = 0; i < n_query; ++i)
      grads->d_query_logits[i] = TensorT<T>(outputs.query_logits[i].shape());
  }

  std::vector<std::vector<T>> d_qry_e, d_proto;
  if (grads) {
    d_qry_e.assign(n_query, std::vector<T>(C, T(0)));
    d_proto.assign(static_cast<std::size_t>(way), std::vector<T>(C, T(0)));
  }

  // cross-entropy on global-class logits (queries with a valid classifier row)
  double ce_sum = 0;
  std::size_t ce_count = 0;
  for (std::size_t i = 0; i < n_query; ++i)
    if (outputs.query_global_row[i] >= 0) ++ce_count;
  for (std::size_t i = 0; i < n_query; ++i) {
    const int row = outputs.query_global_row[i];
    if (row < 0) continue;
    const auto& logits = outputs.query_logits[i];
    const std::size_t n_cls = logits.size();
    if (static_cast<std::size_t>(row) >= n_cls)
      raise(ErrorCode::ShapeError, "classifier row out of range");
    T maxv = logits[0];
    for (std::size_t c = 1; c < n_cls; ++c) maxv = std::max(maxv, logits[c]);
    T total = 0;
    for (std::size_t c = 0; c < n_cls; ++c) total += std::exp(logits[c] - maxv);
    const T log_total = std::log(total) + maxv;
    ce_sum += static_cast<double>(log_total - logits[static_cast<std::size_t>(row)]);
    if (grads) {
      auto& dl = grads->d_query_logits[i];
      for (std::size_t c = 0; c < n_cls; ++c)
        dl[c] = std::exp(logits[c] - log_total) / static_cast<T>(ce_count);
      dl[static_cast<std::size_t>(row)] -= T(1) / static_cast<T>(ce_count);
    }
  }

  // contrastive term: cosine logits against prototypes, scaled by 1/tau
  double contrast_sum = 0;
  std::size_t correct = 0;
  std::vector<T> sims(static_cast<std::size_t>(way));
  std::vector<T> probs(static_cast<std::size_t>(way));
  for (std::size_t i = 0; i < n_query; ++i) {
    const int label = outputs.query_class[i];
    if (label < 0 || label >= way) raise(ErrorCode::ShapeError, "query class outside [0, way)");
    const T qn = vec_norm(qry_e[i]);
    int best = 0;
    for (int n = 0; n < way; ++n) {
      const T pn = vec_norm(proto[static_cast<std::size_t>(n)]);
      sims[static_cast<std::size_t>(n)] =
          vec_dot(qry_e[i], proto[static_cast<std::size_t>(n)]) / (qn * pn);
      if (sims[static_cast<std::size_t>(n)] > sims[static_cast<std::size_t>(best)]) best = n;
    }
    if (best == label) ++correct;

    T maxv = sims[0] / tau;
    for (int n = 1; n < way; ++n) maxv = std::max(maxv, sims[static_cast<std::size_t>(n)] / tau);
    T total = 0;
    for (int n = 0; n < way; ++n) {
      probs[static_cast<std::size_t>(n)] = std::exp(sims[static_cast<std::size_t>(n)] / tau - maxv);
      total += probs[static_cast<std::size_t>(n)];
    }
    for (auto& p : probs) p /= total;
    contrast_sum += -static_cast<double>(std::log(
        std::max(probs[static_cast<std::size_t>(label)], static_cast<T>(1e-30))));

    if (grads) {
      for (int n = 0; n < way; ++n) {
        T dsim = probs[static_cast<std::size_t>(n)];
        if (n == label) dsim -= T(1);
        dsim /= tau * static_cast<T>(n_query);
        if (dsim == T(0)) continue;
        const auto& p = proto[static_cast<std::size_t>(n)];
        const T pn = vec_norm(p);
        const T cosv = sims[static_cast<std::size_t>(n)];
        for (std::size_t c = 0; c < C; ++c) {
          d_qry_e[i][c] += dsim * (p[c] / (qn * pn) - cosv * qry_e[i][c] / (qn * qn));
          d_proto[static_cast<std::size_t>(n)][c] +=
              dsim * (qry_e[i][c] / (qn * pn) - cosv * p[c] / (pn * pn));
        }
      }
    }
  }

  if (grads) {
    const T row_scale = T(1) / static_cast<T>(rows);
    for (std::size_t i = 0; i < n_query; ++i) {
      auto& df = grads->d_query_f[i];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < C; ++c) df[r * C + c] = d_qry_e[i][c] * row_scale;
    }
    for (std::size_t i = 0; i < n_support; ++i) {
      const auto cls = static_cast<std::size_t>(outputs.support_class[i]);
      auto& df = grads->d_support_f[i];
      const T scale = row_scale / static_cast<T>(shot);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < C; ++c) df[r * C + c] = d_proto[cls][c] * scale;
    }
  }

  LossReport report;
  report.ce = ce_count ? ce_sum / static_cast<double>(ce_count) : 0.0;
  report.contrastive = contrast_sum / static_cast<double>(n_query);
  report.total = report.ce + report.contrastive;
  report.episode_acc = static_cast<double>(correct) / static_cast<double>(n_query);
  if (!std::isfinite(report.total)) raise(ErrorCode::NonFinite, "episode loss is not finite");
  return report;
}

template LossReport episode_loss<float>(const EpisodeOutputsT<float>&, float, LossGradsT<float>*);
template LossReport episode_loss<double>(const EpisodeOutputsT<double>&, double, LossGradsT<double>*);

// --- preprocessing ----------------------------------------------------------------

VideoTokens preprocess_video(const FeatureVolume& fv, const TrajectorySet& source_tracks,
                             const PipelineOptions& opts, std::uint64_t video_seed) {
  SeedPoints seeds;
  if (opts.sampling == Sampling::Semantic) {
    ClusterAssignment assignment =
        cluster_tokens(fv, opts.L, mix_seed(video_seed, 0x5eed0001));
    seeds = sample_semantic(assignment, opts.M, mix_seed(video_seed, 0x5eed0002));
  } else {
    seeds = sample_uniform_grid(opts.M, 0);
  }
  TrajectorySet traj = track_points(seeds, source_tracks);

  VideoTokens out;
  out.appearance = sample_trajectory_tokens(fv, traj, opts.interp, opts.threads);
  if (opts.use_intra) {
    out.intra = opts.intra_kind == IntraKind::Hod
                    ? hod_descriptor(traj, HodConfig{opts.bins, opts.delta}, opts.threads)
                    : displacement_only_descriptor(traj, opts.delta, opts.threads);
  }
  if (opts.use_inter) out.inter = inter_descriptor(traj, opts.threads);
  return out;
}

VideoCache::VideoCache(const DatasetManifest& manifest, const PipelineOptions& opts)
    : manifest_(manifest), opts_(opts) {}

const VideoTokens& VideoCache::get(std::size_t video_index) {
  auto it = cache_.find(video_index);
  if (it != cache_.end()) return it->second;
  const auto& rec = manifest_.videos.at(video_index);
  if (rec.trajectory_path.empty())
    raise(ErrorCode::MissingAsset, "video " + rec.id + " has no trajectory file");
  FeatureVolume fv = read_features(rec.feature_path);
  TrajectorySet tracks = read_trajectories(rec.trajectory_path);
  VideoTokens tokens = preprocess_video(fv, tracks, opts_, mix_seed(opts_.seed, fnv1a64(rec.id)));
  return cache_.emplace(video_index, std::move(tokens)).first->second;
}

// --- trainable bundle -----------------------------------------------------------

template <typename T>
ModelParamsT<T> init_model_params(const NetConfig& cfg, const ModelDims& dims, Rng& rng) {
  if (dims.app_dim == 0 || dims.intra_dim == 0 || dims.inter_dim == 0 || dims.n_classes == 0 ||
      dims.frames == 0)
    raise(ErrorCode::ConfigError, "model dims must all be positive");
  ModelParamsT<T> p;
  const auto C = static_cast<std::size_t>(cfg.model_dim);
  Rng r_app = rng.fork(1), r_intra = rng.fork(2), r_inter = rng.fork(3), r_net = rng.fork(4);
  p.proj_app = make_linear<T>(C, dims.app_dim, r_app);
  p.proj_intra = make_linear<T>(C, dims.intra_dim, r_intra);
  p.proj_inter = make_linear<T>(C, dims.inter_dim, r_inter);
  p.net = init_net_params<T>(cfg, dims.frames, dims.n_classes, r_net);
  return p;
}

template <typename T>
void for_each_param(ModelParamsT<T>& params,
                    const std::function<void(const std::string&, TensorT<T>&)>& fn) {
  fn("proj_app.weight", params.proj_app.weight);
  fn("proj_app.bias", params.proj_app.bias);
  fn("proj_intra.weight", params.proj_intra.weight);
  fn("proj_intra.bias", params.proj_intra.bias);
  fn("proj_inter.weight", params.proj_inter.weight);
  fn("proj_inter.bias", params.proj_inter.bias);
  for_each_param<T>(params.net,
                    [&](const std::string& name, TensorT<T>& t) { fn("net." + name, t); });
}

template <typename T>
ModelParamsT<T> zero_like(const ModelParamsT<T>& params) {
  ModelParamsT<T> z = params;
  for_each_param<T>(z, [](const std::string&, TensorT<T>& t) { t.fill(T(0)); });
  return z;
}

template <typename To, typename From>
ModelParamsT<To> cast_model(const ModelParamsT<From>& src) {
  ModelParamsT<To> dst;
  dst.proj_app = {tensor_cast<To>(src.proj_app.weight), tensor_cast<To>(src.proj_app.bias)};
  dst.proj_intra = {tensor_cast<To>(src.proj_intra.weight), tensor_cast<To>(src.proj_intra.bias)};
  dst.proj_inter = {tensor_cast<To>(src.proj_inter.weight), tensor_cast<To>(src.proj_inter.bias)};
  dst.net = cast_params<To>(src.net);
  return dst;
}

template ModelParamsT<float> init_model_params<float>(const NetConfig&, const ModelDims&, Rng&);
template ModelParamsT<double> init_model_params<double>(const NetConfig&, const ModelDims&, Rng&);
template void for_each_param<float>(ModelParamsT<float>&,
                                    const std::function<void(const std::string&, TensorT<float>&)>&);
template void for_each_param<double>(
    ModelParamsT<double>&, const std::function<void(const std::string&, TensorT<double>&)>&);
template ModelParamsT<float> zero_like<float>(const ModelParamsT<float>&);
template ModelParamsT<double> zero_like<double>(const ModelParamsT<double>&);
template ModelParamsT<double> cast_model<double, float>(const ModelParamsT<float>&);
template ModelParamsT<float> cast_model<float, double>(const ModelParamsT<double>&);

// --- episode pass ------------------------------------------------------------------

EpisodeBatch make_batch(const Episode& episode, const DatasetManifest& manifest, VideoCache& cache,
                        const std::vector<int>& classifier_class_ids) {
  EpisodeBatch batch;
  batch.way = episode.way;
  auto global_row = [&](std::size_t video_index) {
    const int label = manifest.videos.at(video_index).label;
    for (std::size_t i = 0; i < classifier_class_ids.size(); ++i)
      if (classifier_class_ids[i] == label) return static_cast<int>(i);
    return -1;
  };
  for (std::size_t i = 0; i < episode.support_videos.size(); ++i) {
    batch.support.push_back(&cache.get(episode.support_videos[i]));
    batch.support_class.push_back(episode.support_class[i]);
  }
  for (std::size_t i = 0; i < episode.query_videos.size(); ++i) {
    batch.query.push_back(&cache.get(episode.query_videos[i]));
    batch.query_class.push_back(episode.query_class[i]);
    batch.query_global_row.push_back(global_row(episode.query_videos[i]));
  }
  return batch;
}

namespace {

template <typename T>
void accumulate_params(ModelParamsT<T>& acc, ModelParamsT<T>& inc) {
  std::vector<TensorT<T>*> a, b;
  for_each_param<T>(acc, [&](const std::string&, TensorT<T>& t) { a.push_back(&t); });
  for_each_param<T>(inc, [&](const std::string&, TensorT<T>& t) { b.push_back(&t); });
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i]->size(); ++j) (*a[i])[j] += (*b[i])[j];
}

template <typename T>
struct VideoPass {
  TensorT<T> appearance, intra, inter;  // casted raw inputs
  ForwardTraceT<T> trace;
};

template <typename T>
TensorT<T> fused_input(const ModelParamsT<T>& params, const VideoTokens& v, const PassOptions& opts,
                       VideoPass<T>& pass) {
  pass.appearance = tensor_cast<T>(v.appearance);
  TensorT<T> x = apply_rows(params.proj_app, pass.appearance, opts.threads);
  if (opts.use_intra) {
    if (v.intra.empty()) raise(ErrorCode::ConfigError, "intra tokens requested but not computed");
    pass.intra = tensor_cast<T>(v.intra);
    TensorT<T> xi = apply_rows(params.proj_intra, pass.intra, opts.threads);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += xi[i];
  }
  if (opts.use_inter) {
    if (v.inter.empty()) raise(ErrorCode::ConfigError, "inter tokens requested but not computed");
    pass.inter = tensor_cast<T>(v.inter);
    TensorT<T> xr = apply_rows(params.proj_inter, pass.inter, opts.threads);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += xr[i];
  }
  return x;
}

template <typename T>
void accumulate_net(NetParamsT<T>& acc, NetParamsT<T>& inc) {
  std::vector<TensorT<T>*> a, b;
  for_each_param<T>(acc, [&](const std::string&, TensorT<T>& t) { a.push_back(&t); });
  for_each_param<T>(inc, [&](const std::string&, TensorT<T>& t) { b.push_back(&t); });
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i]->size(); ++j) (*a[i])[j] += (*b[i])[j];
}

template <typename T>
void backprop_video(const ModelParamsT<T>& params, const NetConfig& cfg, const PassOptions& opts,
                    VideoPass<T>& pass, const TensorT<T>& d_logits, const TensorT<T>& d_f,
                    ModelParamsT<T>& grads) {
  NetBackOutT<T> back = net_backward(pass.trace, params.net, cfg, d_logits, d_f, opts.threads);
  accumulate_net(grads.net, back.grads);
  const std::size_t rows = back.d_tokens.dim(0) * back.d_tokens.dim(1);
  const std::size_t C = back.d_tokens.dim(2);
  matmul_grad_params(back.d_tokens.data(), pass.appearance.data(), rows, C,
                     pass.appearance.dim(2), grads.proj_app.weight.data(),
                     grads.proj_app.bias.data());
  if (opts.use_intra)
    matmul_grad_params(back.d_tokens.data(), pass.intra.data(), rows, C, pass.intra.dim(2),
                       grads.proj_intra.weight.data(), grads.proj_intra.bias.data());
  if (opts.use_inter)
    matmul_grad_params(back.d_tokens.data(), pass.inter.data(), rows, C, pass.inter.dim(2),
                       grads.proj_inter.weight.data(), grads.proj_inter.bias.data());
}

}  // namespace

template <typename T>
PassResultT<T> episode_pass(const ModelParamsT<T>& params, const EpisodeBatch& batch,
                            const NetConfig& cfg, const PassOptions& opts, bool want_grads) {
  if (batch.support.empty() || batch.query.empty())
    raise(ErrorCode::ShapeError, "episode batch needs support and query videos");

  EpisodeOutputsT<T> outputs;
  outputs.way = batch.way;
  outputs.support_class = batch.support_class;
  outputs.query_class = batch.query_class;
  outputs.query_global_row = batch.query_global_row;

  std::vector<VideoPass<T>> sup_pass(batch.support.size()), qry_pass(batch.query.size());
  for (std::size_t i = 0; i < batch.support.size(); ++i) {
    TensorT<T> x = fused_input(params, *batch.support[i], opts, sup_pass[i]);
    ForwardOutT<T> fwd = net_forward(x, params.net, cfg, opts.threads);
    sup_pass[i].trace = std::move(fwd.trace);
    outputs.support_f.push_back(std::move(fwd.f_final));
  }
  for (std::size_t i = 0; i < batch.query.size(); ++i) {
    TensorT<T> x = fused_input(params, *batch.query[i], opts, qry_pass[i]);
    ForwardOutT<T> fwd = net_forward(x, params.net, cfg, opts.threads);
    qry_pass[i].trace = std::move(fwd.trace);
    outputs.query_f.push_back(std::move(fwd.f_final));
    outputs.query_logits.push_back(std::move(fwd.logits));
  }

  PassResultT<T> result;
  LossGradsT<T> loss_grads;
  result.report = episode_loss<T>(outputs, static_cast<T>(opts.tau),
                                  want_grads ? &loss_grads : nullptr);
  if (!want_grads) return result;

  result.has_grads = true;
  result.grads = zero_like(params);
  for (std::size_t i = 0; i < batch.support.size(); ++i) {
    TensorT<T> d_logits(sup_pass[i].trace.logits.shape());  // CE touches queries only
    backprop_video(params, cfg, opts, sup_pass[i], d_logits, loss_grads.d_support_f[i],
                   result.grads);
  }
  for (std::size_t i = 0; i < batch.query.size(); ++i)
    backprop_video(params, cfg, opts, qry_pass[i], loss_grads.d_query_logits[i],
                   loss_grads.d_query_f[i], result.grads);
  return result;
}

template PassResultT<float> episode_pass<float>(const ModelParamsT<float>&, const EpisodeBatch&,
                                                const NetConfig&, const PassOptions&, bool);
template PassResultT<double> episode_pass<double>(const ModelParamsT<double>&, const EpisodeBatch&,
                                                  const NetConfig&, const PassOptions&, bool);

// --- training / evaluation ------------------------------------------------------------

TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg) {
  cfg.net.validate();
  if (cfg.lr < 0 || cfg.momentum < 0 || cfg.momentum >= 1)
    raise(ErrorCode::ConfigError, "need lr >= 0 and momentum in [0, 1)");
  if (cfg.tau <= 0) raise(ErrorCode::ConfigError, "temperature tau must be > 0");
  const auto& train_ids = manifest.split_classes("train");
  if (train_ids.empty()) raise(ErrorCode::InsufficientData, "train split is empty");

  VideoCache cache(manifest, cfg.pipe);
  // Model dimensions come from the first training video.
  const std::size_t first_idx = [&] {
    for (std::size_t i = 0; i < manifest.videos.size(); ++i)
      for (int c : train_ids)
        if (manifest.videos[i].label == c) return i;
    raise(ErrorCode::InsufficientData, "no videos in the train split");
  }();
  const VideoTokens& probe = cache.get(first_idx);
  ModelDims dims;
  dims.app_dim = probe.appearance.dim(2);
  dims.intra_dim = cfg.pipe.intra_dim();
  dims.inter_dim = cfg.pipe.inter_dim();
  dims.n_classes = train_ids.size();
  dims.frames = probe.appearance.dim(1);

  Rng rng(mix_seed(cfg.seed, 0x1417));
  ModelParams params = init_model_params<float>(cfg.net, dims, rng);
  ModelParams velocity = zero_like(params);

  PassOptions pass_opts;
  pass_opts.tau = cfg.tau;
  pass_opts.use_intra = cfg.pipe.use_intra;
  pass_opts.use_inter = cfg.pipe.use_inter;
  pass_opts.threads = cfg.pipe.threads;

  TrainResult result;
  result.train_class_ids = train_ids;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    Episode episode = sample_episode(manifest, "train", cfg.way, cfg.shot, cfg.n_query,
                                     mix_seed(cfg.seed, 1000003u + static_cast<std::uint64_t>(ep)));
    EpisodeBatch batch = make_batch(episode, manifest, cache, train_ids);
    PassResultT<float> pass;
    try {
      pass = episode_pass<float>(params, batch, cfg.net, pass_opts, true);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFinite)
        raise(ErrorCode::NonFinite, "episode " + std::to_string(ep) + ": " + e.what());
      throw;
    }

    // SGD with momentum, fixed traversal order.
    std::vector<Tensor*> p, v, g;
    for_each_param<float>(params, [&](const std::string&, Tensor& t) { p.push_back(&t); });
    for_each_param<float>(velocity, [&](const std::string&, Tensor& t) { v.push_back(&t); });
    for_each_param<float>(pass.grads, [&](const std::string&, Tensor& t) { g.push_back(&t); });
    const auto lr = static_cast<float>(cfg.lr);
    const auto mu = static_cast<float>(cfg.momentum);
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < p[i]->size(); ++j) {
        (*v[i])[j] = mu * (*v[i])[j] - lr * (*g[i])[j];
        (*p[i])[j] += (*v[i])[j];
      }
    result.log.push_back(pass.report);
  }
  result.params = std::move(params);
  return result;
}

EvalResult evaluate(const DatasetManifest& manifest, const Checkpoint& ckpt, const EvalConfig& cfg) {
  VideoCache cache(manifest, ckpt.cfg.pipe);
  PassOptions pass_opts;
  pass_opts.tau = ckpt.cfg.tau;
  pass_opts.use_intra = ckpt.cfg.pipe.use_intra;
  pass_opts.use_inter = ckpt.cfg.pipe.use_inter;
  pass_opts.threads = ckpt.cfg.pipe.threads;

  EvalResult result;
  result.episodes = cfg.episodes;
  if (cfg.episodes < 1) raise(ErrorCode::ConfigError, "need at least one evaluation episode");
  long correct = 0, total = 0;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    Episode episode = sample_episode(manifest, cfg.split, cfg.way, cfg.shot, cfg.n_query,
                                     mix_seed(cfg.seed, 0xE7A1u + static_cast<std::uint64_t>(ep)));
    EpisodeBatch batch = make_batch(episode, manifest, cache, ckpt.train_class_ids);
    PassResultT<float> pass = episode_pass<float>(ckpt.params, batch, ckpt.cfg.net, pass_opts, false);
    const long n_q = static_cast<long>(batch.query.size());
    correct += std::lround(pass.report.episode_acc * static_cast<double>(n_q));
    total += n_q;
  }
  result.total_queries = static_cast<int>(total);
  result.mean_acc = static_cast<double>(correct) / static_cast<double>(total);
  result.ci95 = 1.96 * std::sqrt(result.mean_acc * (1.0 - result.mean_acc) /
                                 static_cast<double>(total));
  result.degenerate = cfg.episodes < 2;
  return result;
}

// --- checkpoints -------------------------------------------------------------------------

namespace {

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (c == '/' || c == '\\') c = '_';
  return out;
}

json pipe_to_json(const PipelineOptions& p) {
  return json{{"M", p.M},
              {"L", p.L},
              {"bins", p.bins},
              {"delta", p.delta},
              {"sampling", p.sampling == Sampling::Semantic ? "semantic" : "grid"},
              {"intra", p.intra_kind == IntraKind::Hod ? "hod" : "displacement"},
              {"use_intra", p.use_intra},
              {"use_inter", p.use_inter},
              {"interp", p.interp == Interp::Bilinear ? "bilinear" : "nearest"},
              {"threads", p.threads},
              {"seed", p.seed}};
}

PipelineOptions pipe_from_json(const json& j) {
  PipelineOptions p;
  p.M = j.at("M").get<std::size_t>();
  p.L = j.at("L").get<int>();
  p.bins = j.at("bins").get<int>();
  p.delta = j.at("delta").get<int>();
  p.sampling = j.at("sampling").get<std::string>() == "grid" ? Sampling::Grid : Sampling::Semantic;
  p.intra_kind =
      j.at("intra").get<std::string>() == "displacement" ? IntraKind::Displacement : IntraKind::Hod;
  p.use_intra = j.at("use_intra").get<bool>();
  p.use_inter = j.at("use_inter").get<bool>();
  p.interp = j.at("interp").get<std::string>() == "nearest" ? Interp::Nearest : Interp::Bilinear;
  p.threads = j.at("threads").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "params", ec);
  if (ec) raise(ErrorCode::IoError, "cannot create checkpoint dir " + dir.string());

  json doc;
  doc["format_version"] = 1;
  doc["net"] = {{"model_dim", ckpt.cfg.net.model_dim},
                {"heads", ckpt.cfg.net.heads},
                {"blocks", ckpt.cfg.net.blocks},
                {"mlp", ckpt.cfg.net.mlp},
                {"mlp_hidden", ckpt.cfg.net.mlp_hidden}};
  doc["pipeline"] = pipe_to_json(ckpt.cfg.pipe);
  doc["train"] = {{"episodes", ckpt.cfg.episodes}, {"way", ckpt.cfg.way},
                  {"shot", ckpt.cfg.shot},         {"n_query", ckpt.cfg.n_query},
                  {"lr", ckpt.cfg.lr},             {"momentum", ckpt.cfg.momentum},
                  {"tau", ckpt.cfg.tau},           {"seed", ckpt.cfg.seed}};
  doc["train_class_ids"] = ckpt.train_class_ids;
  doc["dims"] = {{"app_dim", ckpt.dims.app_dim},
                 {"intra_dim", ckpt.dims.intra_dim},
                 {"inter_dim", ckpt.dims.inter_dim},
                 {"n_classes", ckpt.dims.n_classes},
                 {"frames", ckpt.dims.frames}};
  std::ofstream out(dir / "config.json", std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write checkpoint config");
  out << doc.dump(2) << "\n";

  ModelParams& params = const_cast<ModelParams&>(ckpt.params);
  for_each_param<float>(params, [&](const std::string& name, Tensor& t) {
    write_tensor(dir / "params" / (sanitize(name) + ".trok"), t);
  });
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) raise(ErrorCode::IoError, "cannot open checkpoint config in " + dir.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::ParseError, std::string("checkpoint config: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.cfg.net.model_dim = doc.at("net").at("model_dim").get<int>();
    ckpt.cfg.net.heads = doc.at("net").at("heads").get<int>();
    ckpt.cfg.net.blocks = doc.at("net").at("blocks").get<int>();
    ckpt.cfg.net.mlp = doc.at("net").at("mlp").get<bool>();
    ckpt.cfg.net.mlp_hidden = doc.at("net").at("mlp_hidden").get<int>();
    ckpt.cfg.pipe = pipe_from_json(doc.at("pipeline"));
    ckpt.cfg.episodes = doc.at("train").at("episodes").get<int>();
    ckpt.cfg.way = doc.at("train").at("way").get<int>();
    ckpt.cfg.shot = doc.at("train").at("shot").get<int>();
    ckpt.cfg.n_query = doc.at("train").at("n_query").get<int>();
    ckpt.cfg.lr = doc.at("train").at("lr").get<double>();
    ckpt.cfg.momentum = doc.at("train").at("momentum").get<double>();
    ckpt.cfg.tau = doc.at("train").at("tau").get<double>();
    ckpt.cfg.seed = doc.at("train").at("seed").get<std::uint64_t>();
    ckpt.train_class_ids = doc.at("train_class_ids").get<std::vector<int>>();
    ckpt.dims.app_dim = doc.at("dims").at("app_dim").get<std::size_t>();
    ckpt.dims.intra_dim = doc.at("dims").at("intra_dim").get<std::size_t>();
    ckpt.dims.inter_dim = doc.at("dims").at("inter_dim").get<std::size_t>();
    ckpt.dims.n_classes = doc.at("dims").at("n_classes").get<std::size_t>();
    ckpt.dims.frames = doc.at("dims").at("frames").get<std::size_t>();
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("checkpoint config: ") + e.what());
  }

  Rng rng(0);
  ckpt.params = init_model_params<float>(ckpt.cfg.net, ckpt.dims, rng);
  for_each_param<float>(ckpt.params, [&](const std::string& name, Tensor& t) {
    Tensor loaded = read_tensor(dir / "params" / (sanitize(name) + ".trok"));
    if (!loaded.same_shape(t))
      raise(ErrorCode::ShapeError, "checkpoint tensor " + name + " has shape " +
                                       loaded.shape_str() + ", expected " + t.shape_str());
    t = std::move(loaded);
  });
  return ckpt;
}

}  // namespace trajtok
