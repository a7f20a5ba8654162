#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trajtok/manifest.hpp"
#include "trajtok/trajectory.hpp"

namespace trajtok {

// Motion programs define classes purely by how object points move. The
// zigzag kinds exist for the direction-multiplicity experiments (straight
// vs. alternating heading at equal net displacement).
enum class MotionKind {
  TranslateLR,
  TranslateRL,
  TranslateUD,
  CircularCW,
  CircularCCW,
  ConvergePair,
  DivergePair,
  Static,
  ZigzagLR,
  ZigzagUD,
};

const char* to_string(MotionKind kind);
MotionKind motion_kind_from_string(const std::string& name);

struct MotionProgram {
  int class_id = 0;
  MotionKind kind = MotionKind::Static;
  float speed = 0.0f;        // normalized units per frame
  float noise_sigma = 0.0f;  // per-element appearance noise
};

struct ObjectSpec {
  int radius_patches = 1;
  std::uint64_t appearance_seed = 0;
  MotionProgram program;
};

enum class AppearanceMode { Distinct, Neutral };

struct SceneSpec {
  int grid_h = 16;
  int grid_w = 16;
  int frames = 8;
  int feature_dim = 32;
  std::vector<ObjectSpec> objects;
  AppearanceMode appearance_mode = AppearanceMode::Distinct;
};

// Circular programs rotate object points rigidly about a center placed
// kOrbitRadius to the +x side of the object's start position; the angular
// step is speed / kOrbitRadius so `speed` stays the tangential speed.
inline constexpr float kOrbitRadius = 0.15f;

struct VideoSample {
  FeatureVolume features;
  TrajectorySet trajectories;  // one ground-truth track per object patch center
  int label = 0;
  Tensor region_mask;  // H x W x T, 0 = background, i+1 = object i
};

VideoSample generate_video(const SceneSpec& spec, std::uint64_t seed);

// Scene sets used by the experiments. `default_motion_classes` covers the
// eight motion kinds (pair scenes for converge/diverge, single object
// otherwise). `direction_multiplicity_classes` builds straight vs zigzag
// pairs at two speed tiers on a shared axis.
std::vector<SceneSpec> default_motion_classes(AppearanceMode mode, int grid = 16, int frames = 8,
                                              int feature_dim = 32, float noise_sigma = 0.05f);
std::vector<SceneSpec> direction_multiplicity_classes(AppearanceMode mode, int grid = 16,
                                                      int frames = 8, int feature_dim = 32,
                                                      float noise_sigma = 0.05f);
std::vector<std::string> class_names_for(const std::vector<SceneSpec>& specs);

// Writes <id>.feat.trok / <id>.traj.trok / <id>.mask.trok per video plus
// manifest.json, then reloads the manifest (so paths come back resolved).
// Identical seeds produce byte-identical files.
DatasetManifest generate_dataset(int n_per_class, const std::vector<SceneSpec>& specs,
                                 const std::filesystem::path& out_dir, std::uint64_t seed,
                                 const std::vector<int>& train_class_ids);

}  // namespace trajtok
