#pragma once

#include <memory>
#include <string>
#include <vector>

#include "htp/data.hpp"
#include "htp/geom.hpp"
#include "htp/model.hpp"
#include "htp/rng.hpp"
#include "htp/sim.hpp"

namespace htp {

// Trial suites: per-object unconditional manipulation, per-goal-category
// goal-conditioned manipulation, a two-drawer disambiguation study, a
// door-angle distribution, and a straight-line displacement baseline.

// --- policies ---

// A policy turns an observed scene (its feature vector, plus an optional goal
// feature) into a world-frame end-effector trajectory starting at the ready
// pose. `goal_scene` and `hint` are harness-side ground truth: the learned
// policy ignores both, the scripted and baseline policies use them.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::vector<Pose6> plan(const SceneSpec& scene, const SceneSpec* goal_scene,
                                    const std::vector<double>& f1, const std::vector<double>* fg,
                                    TaskId hint, Rng& rng) = 0;
};

// Samples the trained trajectory model: camera-frame autoregressive rollout
// from the ready pose, mapped back to the world frame.
class ModelPolicy : public Policy {
public:
    explicit ModelPolicy(const Checkpoint& ckpt, CameraModel cam = default_camera());
    std::vector<Pose6> plan(const SceneSpec& scene, const SceneSpec* goal_scene,
                            const std::vector<double>& f1, const std::vector<double>* fg,
                            TaskId hint, Rng& rng) override;
    const ModelConfig& config() const { return model_.config(); }

private:
    Model64 model_;
    CameraModel cam_;
};

// Scripted demonstrator standing in for the model: the harness ceiling.
class OraclePolicy : public Policy {
public:
    explicit OraclePolicy(int horizon = kDefaultHorizon) : horizon_(horizon) {}
    std::vector<Pose6> plan(const SceneSpec& scene, const SceneSpec* goal_scene,
                            const std::vector<double>& f1, const std::vector<double>* fg,
                            TaskId hint, Rng& rng) override;

private:
    int horizon_;
};

// Emits no motion: holds the ready pose. Null-goal sanity rows.
class StayPolicy : public Policy {
public:
    explicit StayPolicy(int horizon = kDefaultHorizon) : horizon_(horizon) {}
    std::vector<Pose6> plan(const SceneSpec& scene, const SceneSpec* goal_scene,
                            const std::vector<double>& f1, const std::vector<double>* fg,
                            TaskId hint, Rng& rng) override;

private:
    int horizon_;
};

// Straight-line trajectory along the dominant ground-truth displacement
// between the initial and goal scenes (see baseline_dominant_flow).
class DominantFlowPolicy : public Policy {
public:
    explicit DominantFlowPolicy(int horizon = kDefaultHorizon) : horizon_(horizon) {}
    std::vector<Pose6> plan(const SceneSpec& scene, const SceneSpec* goal_scene,
                            const std::vector<double>& f1, const std::vector<double>* fg,
                            TaskId hint, Rng& rng) override;

private:
    int horizon_;
};

// Per-object ground-truth displacement field between two states of the same
// scene: the trajectory starts at the most-displaced object's handle and moves
// in a straight line along that displacement, horizon steps, total length
// equal to the displacement magnitude. No displacement -> zero motion at the
// ready pose.
std::vector<Pose6> baseline_dominant_flow(const SceneSpec& initial, const SceneSpec& goal,
                                          int horizon = kDefaultHorizon);

// --- trial bookkeeping ---

// Failure taxonomy (exhaustive over failed trials): no contact event in the
// trace -> NoContact; some task succeeded but not the requested goal ->
// WrongGoal; otherwise StuckInfeasible.
enum class FailureKind { None, NoContact, StuckInfeasible, WrongGoal };
std::string failure_name(FailureKind kind);

struct TrialResult {
    int trial = 0;
    bool success = false;
    FailureKind failure = FailureKind::None;
    std::string outcome;       // task-success signature of the final scene
    double final_angle = 0.0;  // door angle after the rollout, radians (0 if no door)
    std::string trace_id;      // stem of the archived trace file, if any
};

struct TrialReport {
    std::string name;  // object or goal-category row label
    int trials = 0;
    int successes = 0;
    int no_contact = 0;
    int stuck_infeasible = 0;
    int wrong_goal = 0;
    std::vector<TrialResult> results;

    void add(const TrialResult& r);  // appends and keeps the counters reconciled
};

// Evaluation objects (Table-1 rows) and their candidate tasks.
std::vector<std::string> eval_objects();
bool scene_has_object(const SceneSpec& scene, const std::string& object);
std::vector<TaskId> object_tasks(const SceneSpec& scene, const std::string& object);

// Which task criteria the rollout satisfied, as a stable signature string
// ("open_door+close_toaster", or "none"). Distinct signatures = distinct
// outcomes when probing multimodality.
std::string outcome_signature(const SceneSpec& before, const SceneSpec& after);

struct EvalParams {
    int n_trials = 20;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string trace_dir;  // when set, per-trial rollout traces are written here
};

// One report per object: random scenes containing the object, one sampled
// trajectory per trial, success = any candidate task criterion satisfied.
std::vector<TrialReport> run_unconditional(Policy& policy, const EvalParams& params);

// One report per goal category (every task), plus a trailing "null_goal"
// sanity row scored with a zero-motion policy against goal == initial. Goal
// scenes are built by replaying a scripted demonstration; the policy's rng
// stream equals the demonstration stream, so a scripted policy reproduces the
// goal exactly.
std::vector<TrialReport> run_goal_conditioned(Policy& policy, const EvalParams& params);

// --- studies ---

struct DisambiguationRow {
    std::string condition;  // "unconditional" or the goal's task name
    int trials = 0;
    int top_open = 0;
    int bottom_open = 0;
    int bottom_close = 0;
};

// Fixed two-drawer configuration: bottom drawer half open, top drawer closed.
SceneSpec disambiguation_scene();

// Counts final configurations reached without a goal vs. conditioned on each
// of the three drawer goals (top open, bottom open, bottom closed). Each trial
// is classified by the largest drawer state change, so row counts sum to at
// most `n_trials`.
std::vector<DisambiguationRow> drawer_disambiguation(Policy& unconditional, Policy& goal_directed,
                                                     int n_trials, std::uint64_t seed);

struct AngleHistogram {
    double lo_deg = 0.0, hi_deg = 110.0;
    std::vector<int> counts;          // uniform bins over [lo_deg, hi_deg]
    std::vector<double> angles_deg;   // per-trial final angles, trial order
};

// Final door angle distribution over closed-door scenes.
AngleHistogram door_angle_histogram(Policy& policy, int n_trials = 15, int bins = 5,
                                    std::uint64_t seed = 0);

// --- reporting ---

struct EvalReport {
    KvMap meta;  // free-form provenance: seeds, checkpoint paths, notes
    std::vector<TrialReport> unconditional;
    std::vector<TrialReport> goal_conditioned;
    std::vector<DisambiguationRow> disambiguation;
    AngleHistogram door_histogram;  // empty counts = study not run
};

std::string report_text(const EvalReport& report);  // aligned human-readable tables
std::string report_csv(const EvalReport& report);   // one row per table row, documented header

void save_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);

}  // namespace htp
