#pragma once

#include <string>
#include <vector>

#include "htp/geom.hpp"
#include "htp/io.hpp"
#include "htp/rng.hpp"
#include "htp/sim.hpp"

namespace htp {

constexpr int kDefaultHorizon = 7;    // future steps per clip (2 s nominal window)
constexpr int kDefaultFeatureDim = 64;

// Fixed calibrated camera for the synthetic pipeline: table corner, looking
// down at the workspace center.
CameraModel default_camera();

// Training record: initial-scene feature, optional goal feature, pose
// sequence h_0..h_T in the camera frame. Task label is metadata only; it is
// never fed to the model.
struct Clip {
    std::uint64_t id = 0;
    std::vector<double> f1;
    std::vector<double> fg;  // empty when absent
    std::vector<Pose6> poses;
    KvMap meta;
};

struct Dataset {
    KvMap manifest;
    std::vector<Clip> clips;
    std::vector<int> train_idx, val_idx;

    int horizon() const { return static_cast<int>(manifest.get_int("horizon")); }
    int feature_dim() const { return static_cast<int>(manifest.get_int("feature_dim")); }
};

// Random 1-2 object tabletop scene with articulation state, position, and
// size drawn from documented ranges; object footprints never overlap.
SceneSpec generate_scene(Rng& rng);

// Scripted substitute for tracked human demonstrations: approach the handle
// region, then move along the object's articulation DoF with small pose
// noise. World frame, horizon+1 poses, first pose = ready end-effector pose.
std::vector<Pose6> oracle_trajectory(const SceneSpec& scene, TaskId task, Rng& rng,
                                     int horizon = kDefaultHorizon);

// Scene feature: 32x32x6 state raster from the camera viewpoint (five object
// type channels + articulation channel), flattened through a fixed seeded
// random projection to feature_dim, unit-normalized.
std::vector<double> featurize(const SceneSpec& scene, const CameraModel& cam,
                              int feature_dim = kDefaultFeatureDim);

// Scene evolution under the commanded oracle poses (pure kinematic stepping,
// no IK); also used to construct goal scenes for evaluation.
SceneSpec replay_poses(const SceneSpec& scene, const std::vector<Pose6>& world_poses);

struct DatasetParams {
    int n_clips = 16;
    int horizon = kDefaultHorizon;
    int feature_dim = kDefaultFeatureDim;
    std::uint64_t seed = 0;
    std::vector<double> task_mix = std::vector<double>(kNumTasks, 1.0);  // weights per TaskId
    int val_stride = 10;  // every val_stride-th clip goes to the val split
};

Dataset build_dataset(const DatasetParams& params);

// Seeded uniform subsample of the train split; the val split is untouched.
Dataset subset_dataset(const Dataset& ds, double fraction, std::uint64_t seed);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Delta-consistency: the pose sequence is reconstructable from its own deltas.
bool verify_clip(const Clip& clip, double tol = 1e-9);

}  // namespace htp
