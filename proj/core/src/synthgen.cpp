#include "trajtok/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "trajtok/rng.hpp"
#include "trajtok/tensor_io.hpp"

namespace trajtok {

namespace {

constexpr std::uint64_t kBackgroundSeed = 0xBA5EBA11u;
constexpr std::uint64_t kNeutralSeed = 0x0B1EC7EDu;
constexpr int kPlacementAttempts = 200;

std::vector<float> embedding_from_seed(std::uint64_t seed, int dim) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(dim)));
  std::vector<float> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 1.0));
  return v;
}

float patch_center(int idx, int n) { return (static_cast<float>(idx) + 0.5f) / static_cast<float>(n); }

int nearest_patch(float x, int n) {
  int i = static_cast<int>(std::lround(static_cast<double>(x) * n - 0.5));
  return std::clamp(i, 0, n - 1);
}

struct ObjectState {
  float x0 = 0, y0 = 0;  // start center, snapped to a patch center
  float ox = 0, oy = 0;  // orbit center (circular kinds)
  float ux = 0, uy = 0;  // signed motion direction (pair kinds)
};

// Offset of a linear-motion object after t frames.
std::pair<float, float> linear_offset(MotionKind kind, float s, int t) {
  const float ft = static_cast<float>(t);
  switch (kind) {
    case MotionKind::TranslateLR: return {s * ft, 0.0f};
    case MotionKind::TranslateRL: return {-s * ft, 0.0f};
    case MotionKind::TranslateUD: return {0.0f, s * ft};
    case MotionKind::ZigzagLR: return {s * ft, (t % 2) ? s : 0.0f};
    case MotionKind::ZigzagUD: return {(t % 2) ? s : 0.0f, s * ft};
    case MotionKind::Static: return {0.0f, 0.0f};
    default: return {0.0f, 0.0f};
  }
}

// Analytic position at frame t of the point whose t=0 location is (px, py)
// and which belongs to the given object. Circular kinds rotate rigidly about
// the orbit center; everything else translates.
std::pair<float, float> point_at(const MotionProgram& p, const ObjectState& st, float px, float py,
                                 int t) {
  switch (p.kind) {
    case MotionKind::CircularCW:
    case MotionKind::CircularCCW: {
      const float omega = (p.kind == MotionKind::CircularCW ? 1.0f : -1.0f) * p.speed / kOrbitRadius;
      const float a = omega * static_cast<float>(t);
      const float c = std::cos(a), s = std::sin(a);
      const float rx = px - st.ox, ry = py - st.oy;
      return {st.ox + c * rx - s * ry, st.oy + s * rx + c * ry};
    }
    case MotionKind::ConvergePair:
    case MotionKind::DivergePair:
      return {px + st.ux * p.speed * static_cast<float>(t),
              py + st.uy * p.speed * static_cast<float>(t)};
    default: {
      auto [dx, dy] = linear_offset(p.kind, p.speed, t);
      return {px + dx, py + dy};
    }
  }
}

struct Window {
  float lo, hi;
  bool valid() const { return lo <= hi; }
};

// Admissible start window on one axis given the motion range [mlo, mhi]
// relative to the start and the blob extent.
Window axis_window(float ext, float mlo, float mhi) { return {ext - mlo, 1.0f - ext - mhi}; }

int sample_patch_in(Rng& rng, const Window& w, int n) {
  const int lo = std::max(0, static_cast<int>(std::ceil(w.lo * n - 0.5f)));
  const int hi = std::min(n - 1, static_cast<int>(std::floor(w.hi * n - 0.5f)));
  if (lo > hi) raise(ErrorCode::SceneError, "motion program leaves no admissible start position");
  return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
}

bool is_pair_kind(MotionKind k) {
  return k == MotionKind::ConvergePair || k == MotionKind::DivergePair;
}

}  // namespace

const char* to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::TranslateLR: return "translate_LR";
    case MotionKind::TranslateRL: return "translate_RL";
    case MotionKind::TranslateUD: return "translate_UD";
    case MotionKind::CircularCW: return "circular_CW";
    case MotionKind::CircularCCW: return "circular_CCW";
    case MotionKind::ConvergePair: return "converge_pair";
    case MotionKind::DivergePair: return "diverge_pair";
    case MotionKind::Static: return "static";
    case MotionKind::ZigzagLR: return "zigzag_LR";
    case MotionKind::ZigzagUD: return "zigzag_UD";
  }
  return "unknown";
}

MotionKind motion_kind_from_string(const std::string& name) {
  for (MotionKind k : {MotionKind::TranslateLR, MotionKind::TranslateRL, MotionKind::TranslateUD,
                       MotionKind::CircularCW, MotionKind::CircularCCW, MotionKind::ConvergePair,
                       MotionKind::DivergePair, MotionKind::Static, MotionKind::ZigzagLR,
                       MotionKind::ZigzagUD}) {
    if (name == to_string(k)) return k;
  }
  raise(ErrorCode::ConfigError, "unknown motion kind '" + name + "'");
}

VideoSample generate_video(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.frames < 2) raise(ErrorCode::ConfigError, "scene needs frames >= 2");
  if (spec.grid_h < 1 || spec.grid_w < 1 || spec.feature_dim < 1)
    raise(ErrorCode::ConfigError, "scene grid/feature dims must be >= 1");
  if (spec.objects.empty()) raise(ErrorCode::ConfigError, "scene needs at least one object");
  for (const auto& obj : spec.objects) {
    if (obj.radius_patches < 0) raise(ErrorCode::ConfigError, "negative object radius");
    if (obj.program.speed < 0 || obj.program.noise_sigma < 0)
      raise(ErrorCode::ConfigError, "speed and noise_sigma must be >= 0");
    if (2 * obj.radius_patches + 1 > std::min(spec.grid_h, spec.grid_w))
      raise(ErrorCode::SceneError, "object does not fit inside the grid");
  }

  const int H = spec.grid_h, W = spec.grid_w, T = spec.frames, C = spec.feature_dim;
  Rng rng(seed);
  Rng rng_place = rng.fork(1);
  Rng rng_noise = rng.fork(2);

  // --- placement ---------------------------------------------------------
  std::vector<ObjectState> states(spec.objects.size());
  std::vector<std::pair<int, int>> centers;  // (cw, ch) patch indices
  const bool symmetric_pair = spec.objects.size() == 2 && is_pair_kind(spec.objects[0].program.kind) &&
                              spec.objects[1].program.kind == spec.objects[0].program.kind;

  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const auto& obj = spec.objects[i];
    const auto& prog = obj.program;
    const float extw = (obj.radius_patches + 0.5f) / W;
    const float exth = (obj.radius_patches + 0.5f) / H;
    const float travel = prog.speed * static_cast<float>(T - 1);

    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      ObjectState st;
      int cw = 0, ch = 0;
      if (is_pair_kind(prog.kind)) {
        // Positions around the scene center; motion runs along the radial axis.
        float d_lo, d_hi;
        if (prog.kind == MotionKind::ConvergePair) {
          d_lo = travel + 2.0f / W;
          d_hi = 0.5f - std::max(extw, exth) - 0.02f;
        } else {
          d_lo = 2.0f / W + 0.02f;
          d_hi = 0.5f - std::max(extw, exth) - travel - 0.02f;
        }
        if (d_lo > d_hi) raise(ErrorCode::SceneError, "pair motion does not fit inside the grid");
        const double d = rng_place.uniform(d_lo, d_hi);
        double phi;
        if (symmetric_pair && i == 1) {
          phi = std::atan2(0.5 - states[0].y0, 0.5 - states[0].x0);  // opposite side of object 0
        } else {
          phi = rng_place.uniform(0.0, 2.0 * std::numbers::pi);
        }
        const float px = static_cast<float>(0.5 + d * std::cos(phi));
        const float py = static_cast<float>(0.5 + d * std::sin(phi));
        cw = nearest_patch(px, W);
        ch = nearest_patch(py, H);
        st.x0 = patch_center(cw, W);
        st.y0 = patch_center(ch, H);
        float ux = 0.5f - st.x0, uy = 0.5f - st.y0;
        const float norm = std::sqrt(ux * ux + uy * uy);
        if (norm < 1e-6f) continue;  // snapped onto the center; resample
        ux /= norm;
        uy /= norm;
        if (prog.kind == MotionKind::DivergePair) {
          ux = -ux;
          uy = -uy;
        }
        st.ux = ux;
        st.uy = uy;
      } else {
        float mxlo = 0, mxhi = 0, mylo = 0, myhi = 0;
        switch (prog.kind) {
          case MotionKind::TranslateLR: mxhi = travel; break;
          case MotionKind::TranslateRL: mxlo = -travel; break;
          case MotionKind::TranslateUD: myhi = travel; break;
          case MotionKind::ZigzagLR: mxhi = travel; myhi = prog.speed; break;
          case MotionKind::ZigzagUD: myhi = travel; mxhi = prog.speed; break;
          case MotionKind::CircularCW:
          case MotionKind::CircularCCW: {
            // Circle of radius kOrbitRadius about a center +x of the start;
            // corner points of the blob add up to sqrt(2) * radius extent.
            const float slack = 1.4142f * (obj.radius_patches + 0.5f) / std::min(W, H);
            mxlo = -slack;
            mxhi = 2.0f * kOrbitRadius + slack;
            mylo = -kOrbitRadius - slack;
            myhi = kOrbitRadius + slack;
            break;
          }
          case MotionKind::Static: break;
          default: break;
        }
        cw = sample_patch_in(rng_place, axis_window(extw, mxlo, mxhi), W);
        ch = sample_patch_in(rng_place, axis_window(exth, mylo, myhi), H);
        st.x0 = patch_center(cw, W);
        st.y0 = patch_center(ch, H);
        if (prog.kind == MotionKind::CircularCW || prog.kind == MotionKind::CircularCCW) {
          st.ox = st.x0 + kOrbitRadius;
          st.oy = st.y0;
        }
      }

      bool overlaps = false;
      for (std::size_t j = 0; j < centers.size(); ++j) {
        const int min_sep = obj.radius_patches + spec.objects[j].radius_patches + 1;
        if (std::abs(cw - centers[j].first) < min_sep && std::abs(ch - centers[j].second) < min_sep) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) continue;
      states[i] = st;
      centers.emplace_back(cw, ch);
      placed = true;
    }
    if (!placed) raise(ErrorCode::SceneError, "objects overlap at t=0; no non-overlapping placement found");
  }

  // --- ground-truth trajectories -----------------------------------------
  std::size_t total_tracks = 0;
  for (const auto& obj : spec.objects) {
    const std::size_t side = 2 * static_cast<std::size_t>(obj.radius_patches) + 1;
    total_tracks += side * side;
  }

  VideoSample out;
  out.trajectories.points = Tensor({total_tracks, static_cast<std::size_t>(T), 2});
  out.trajectories.visibility = Tensor::full({total_tracks, static_cast<std::size_t>(T)}, 1.0f);
  out.trajectories.frame_dims = {W, H};
  out.label = spec.objects[0].program.class_id;

  std::size_t track = 0;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const auto& obj = spec.objects[i];
    const auto& st = states[i];
    for (int dy = -obj.radius_patches; dy <= obj.radius_patches; ++dy) {
      for (int dx = -obj.radius_patches; dx <= obj.radius_patches; ++dx) {
        const float px = st.x0 + static_cast<float>(dx) / W;
        const float py = st.y0 + static_cast<float>(dy) / H;
        for (int t = 0; t < T; ++t) {
          auto [qx, qy] = point_at(obj.program, st, px, py, t);
          out.trajectories.points(track, t, 0) = std::clamp(qx, 0.0f, 1.0f);
          out.trajectories.points(track, t, 1) = std::clamp(qy, 0.0f, 1.0f);
        }
        ++track;
      }
    }
  }

  // --- appearance rendering ----------------------------------------------
  const std::vector<float> bg = embedding_from_seed(kBackgroundSeed, C);
  std::vector<std::vector<float>> obj_embed(spec.objects.size());
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    obj_embed[i] = spec.appearance_mode == AppearanceMode::Neutral
                       ? embedding_from_seed(kNeutralSeed, C)
                       : embedding_from_seed(mix_seed(0xD15C0, spec.objects[i].appearance_seed), C);
  }

  out.features.features = Tensor({static_cast<std::size_t>(H), static_cast<std::size_t>(W),
                                  static_cast<std::size_t>(T), static_cast<std::size_t>(C)});
  out.region_mask = Tensor({static_cast<std::size_t>(H), static_cast<std::size_t>(W),
                            static_cast<std::size_t>(T)});
  Tensor& feat = out.features.features;
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w)
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c) feat(h, w, t, c) = bg[static_cast<std::size_t>(c)];

  for (int t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      const auto& obj = spec.objects[i];
      const auto& st = states[i];
      auto [cx, cy] = point_at(obj.program, st, st.x0, st.y0, t);
      cx = std::clamp(cx, 0.0f, 1.0f);
      cy = std::clamp(cy, 0.0f, 1.0f);
      const int cw = nearest_patch(cx, W);
      const int ch = nearest_patch(cy, H);
      for (int dy = -obj.radius_patches; dy <= obj.radius_patches; ++dy) {
        for (int dx = -obj.radius_patches; dx <= obj.radius_patches; ++dx) {
          const int w = cw + dx, h = ch + dy;
          if (w < 0 || w >= W || h < 0 || h >= H) continue;
          for (int c = 0; c < C; ++c) {
            const float noise = obj.program.noise_sigma > 0
                                    ? static_cast<float>(rng_noise.normal(0.0, obj.program.noise_sigma))
                                    : 0.0f;
            feat(h, w, t, c) = obj_embed[i][static_cast<std::size_t>(c)] + noise;
          }
          out.region_mask(h, w, t) = static_cast<float>(i + 1);
        }
      }
    }
  }

  out.features.validate();
  out.trajectories.validate();
  return out;
}

namespace {

SceneSpec single_object_scene(MotionKind kind, int class_id, float speed, AppearanceMode mode,
                              int grid, int frames, int dim, float noise) {
  SceneSpec s;
  s.grid_h = s.grid_w = grid;
  s.frames = frames;
  s.feature_dim = dim;
  s.appearance_mode = mode;
  ObjectSpec obj;
  obj.radius_patches = 1;
  obj.appearance_seed = 1000 + static_cast<std::uint64_t>(class_id);
  obj.program = {class_id, kind, speed, noise};
  s.objects.push_back(obj);
  return s;
}

SceneSpec pair_scene(MotionKind kind, int class_id, float speed, AppearanceMode mode, int grid,
                     int frames, int dim, float noise) {
  SceneSpec s = single_object_scene(kind, class_id, speed, mode, grid, frames, dim, noise);
  ObjectSpec partner = s.objects[0];
  partner.appearance_seed += 500;
  s.objects.push_back(partner);
  return s;
}

}  // namespace

std::vector<SceneSpec> default_motion_classes(AppearanceMode mode, int grid, int frames,
                                              int feature_dim, float noise_sigma) {
  std::vector<SceneSpec> specs;
  specs.push_back(single_object_scene(MotionKind::TranslateLR, 0, 0.08f, mode, grid, frames, feature_dim, noise_sigma));
  specs.push_back(single_object_scene(MotionKind::TranslateRL, 1, 0.08f, mode, grid, frames, feature_dim, noise_sigma));
  specs.push_back(single_object_scene(MotionKind::TranslateUD, 2, 0.08f, mode, grid, frames, feature_dim, noise_sigma));
  specs.push_back(single_object_scene(MotionKind::CircularCW, 3, 0.10f, mode, grid, frames, feature_dim, noise_sigma));
  specs.push_back(single_object_scene(MotionKind::CircularCCW, 4, 0.10f, mode, grid, frames, feature_dim, noise_sigma));
  specs.push_back(pair_scene(MotionKind::ConvergePair, 5, 0.03f, mode, grid, frames, feature_dim, noise_sigma));
  specs.push_back(pair_scene(MotionKind::DivergePair, 6, 0.03f, mode, grid, frames, feature_dim, noise_sigma));
  specs.push_back(single_object_scene(MotionKind::Static, 7, 0.0f, mode, grid, frames, feature_dim, noise_sigma));
  return specs;
}

std::vector<SceneSpec> direction_multiplicity_classes(AppearanceMode mode, int grid, int frames,
                                                      int feature_dim, float noise_sigma) {
  // Straight vs zigzag along the same axis at matched net displacement; the
  // two speed tiers give disjoint train/test classes.
  std::vector<SceneSpec> specs;
  specs.push_back(single_object_scene(MotionKind::TranslateLR, 0, 0.03f, mode, grid, frames, feature_dim, noise_sigma));
  specs.push_back(single_object_scene(MotionKind::ZigzagLR, 1, 0.03f, mode, grid, frames, feature_dim, noise_sigma));
  specs.push_back(single_object_scene(MotionKind::TranslateLR, 2, 0.06f, mode, grid, frames, feature_dim, noise_sigma));
  specs.push_back(single_object_scene(MotionKind::ZigzagLR, 3, 0.06f, mode, grid, frames, feature_dim, noise_sigma));
  return specs;
}

std::vector<std::string> class_names_for(const std::vector<SceneSpec>& specs) {
  std::vector<std::string> names;
  names.reserve(specs.size());
  for (const auto& s : specs) {
    const auto& prog = s.objects.at(0).program;
    names.push_back(std::string(to_string(prog.kind)) + "_c" + std::to_string(prog.class_id));
  }
  return names;
}

DatasetManifest generate_dataset(int n_per_class, const std::vector<SceneSpec>& specs,
                                 const std::filesystem::path& out_dir, std::uint64_t seed,
                                 const std::vector<int>& train_class_ids) {
  if (n_per_class < 1) raise(ErrorCode::ConfigError, "n_per_class must be >= 1");
  if (specs.empty()) raise(ErrorCode::ConfigError, "no scene specs given");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "videos", ec);
  if (ec) raise(ErrorCode::IoError, "cannot create " + out_dir.string());

  std::set<int> class_ids;
  for (const auto& s : specs) class_ids.insert(s.objects.at(0).program.class_id);
  for (int c : train_class_ids)
    if (!class_ids.count(c))
      raise(ErrorCode::ConfigError, "train class " + std::to_string(c) + " not generated");

  DatasetManifest m;
  m.class_names = class_names_for(specs);
  std::set<int> train(train_class_ids.begin(), train_class_ids.end());
  std::vector<int> test_ids;
  for (int c : class_ids)
    if (!train.count(c)) test_ids.push_back(c);
  m.split["train"] = train_class_ids;
  m.split["test"] = test_ids;

  for (const auto& spec : specs) {
    const int label = spec.objects.at(0).program.class_id;
    for (int i = 0; i < n_per_class; ++i) {
      const std::uint64_t vid_seed = mix_seed(seed, static_cast<std::uint64_t>(label) * 100003u +
                                                        static_cast<std::uint64_t>(i));
      VideoSample sample = generate_video(spec, vid_seed);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "c%02d_v%03d", label, i);
      VideoRecord rec;
      rec.id = buf;
      rec.label = label;
      rec.feature_path = "videos/" + rec.id + ".feat.trok";
      rec.trajectory_path = "videos/" + rec.id + ".traj.trok";
      write_tensor(out_dir / rec.feature_path, sample.features.features);
      write_trajectories(out_dir / rec.trajectory_path, sample.trajectories);
      write_tensor(out_dir / ("videos/" + rec.id + ".mask.trok"), sample.region_mask);
      m.videos.push_back(std::move(rec));
    }
  }

  save_manifest(out_dir / "manifest.json", m);
  return load_manifest(out_dir / "manifest.json");
}

}  // namespace trajtok
