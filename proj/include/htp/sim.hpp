#pragma once

#include <optional>
#include <string>
#include <vector>

#include "htp/geom.hpp"
#include "htp/io.hpp"

namespace htp {

// Kinematic tabletop world. Table plane is z = 0, 1 m x 1 m, spanning
// x in [0.05, 1.05], y in [-0.5, 0.5]; the robot base sits at the origin.

constexpr double kGraspRadius = 0.03;
constexpr double kTableXMin = 0.05, kTableXMax = 1.05;
constexpr double kTableYMin = -0.5, kTableYMax = 0.5;

struct DrawerStack {
    Eigen::Vector3d base{0.55, 0, 0};  // cabinet front-bottom center, closed position
    Eigen::Vector3d axis{-1, 0, 0};    // horizontal pull direction, unit
    double range = 0.20;
    double opening_top = 0.0, opening_bottom = 0.0;  // each in [0, range]
    double width = 0.32;
    double handle_z_top = 0.26, handle_z_bottom = 0.10;
    double depth = 0.30, height = 0.34;
};

struct Door {
    Eigen::Vector3d anchor{0.55, 0.15, 0};  // vertical hinge at table level
    Eigen::Vector3d closed_dir{0, -1, 0};   // panel direction at angle 0, unit, horizontal
    double panel_width = 0.28;
    double panel_height = 0.30;
    double angle = 0.0;  // radians in [0, max_angle]; positive swings toward +tangent
    double max_angle = 110.0 * M_PI / 180.0;
};

struct Toaster {
    Eigen::Vector3d hinge{0.6, 0, 0.16};  // horizontal hinge line center
    Eigen::Vector3d hinge_axis{0, 1, 0};  // unit, horizontal
    double flap_depth = 0.14;             // hinge to free edge
    double angle = 0.0;                   // 0 = closed (flap hangs down), [0, pi/2]
    double max_angle = M_PI / 2.0;
    double body_size = 0.28;
};

struct Bowl {
    Eigen::Vector3d position{0.5, 0.2, 0};  // center on table
    double radius = 0.07;
    double rim_height = 0.08;
    bool upright = true;
};

struct VeggieBoard {
    Eigen::Vector3d center{0.5, -0.2, 0};
    double half_x = 0.14, half_y = 0.10;
    double thickness = 0.002;  // a mat: sweeps stay within 1 cm of the table
    std::vector<Eigen::Vector3d> pieces;  // on the board surface
};

struct SceneSpec {
    std::optional<DrawerStack> drawer;
    std::optional<Door> door;
    std::optional<Toaster> toaster;
    std::optional<Bowl> bowl;
    std::optional<VeggieBoard> veggies;

    KvMap to_kv() const;
    static SceneSpec from_kv(const KvMap& kv);
    void save(const std::string& path) const { to_kv().save(path); }
    static SceneSpec load(const std::string& path) { return from_kv(KvMap::load(path)); }
};

enum class TaskId {
    MoveVeggies,
    OpenDoor,
    CloseDoor,
    OpenTopDrawer,
    CloseTopDrawer,
    OpenBottomDrawer,
    CloseBottomDrawer,
    OpenToaster,
    CloseToaster,
    MoveBowl,
};
constexpr int kNumTasks = 10;
std::string task_name(TaskId t);
TaskId task_from_name(const std::string& name);
bool task_feasible(const SceneSpec& scene, TaskId task);
std::vector<TaskId> feasible_tasks(const SceneSpec& scene);

// --- serial arm ---

struct ArmChain {
    struct Joint {
        Eigen::Vector3d offset;  // translation from previous joint frame
        Eigen::Vector3d axis;    // rotation axis in the joint's local frame
        double lo, hi;           // limits, radians
    };
    std::vector<Joint> joints;
    Eigen::Vector3d ee_offset;
};

const ArmChain& arm_chain();  // fixed 7-DoF chain, base at world origin

struct ArmState {
    Eigen::Matrix<double, 7, 1> q = Eigen::Matrix<double, 7, 1>::Zero();
    static ArmState home() { return ArmState{}; }
    static ArmState ready();  // elbow-bent posture facing the table
};

Pose6 forward_kinematics(const ArmState& arm);

enum class IkStatus { Converged, Stuck };

struct IkResult {
    ArmState state;
    IkStatus status = IkStatus::Stuck;
    int iterations = 0;
    double position_error = 0.0;
    double orientation_error = 0.0;
};

// Damped least squares (lambda = 0.05, step cap 0.2 rad, <= 200 iterations).
// Success thresholds are relative to the commanded step magnitude (10%
// position, 20% orientation) with absolute floors of 5 mm and 3 degrees.
IkResult ik_solve(const Pose6& target, const ArmState& seed);

// --- contact & rollout ---

struct ContactEvent {
    std::string object;  // "drawer_top", "door", "bowl", ...
    int step = 0;
};

SceneSpec step_scene(const SceneSpec& scene, const Pose6& ee_from, const Pose6& ee_to,
                     std::vector<std::string>* contacts = nullptr);

struct RolloutTrace {
    std::vector<Pose6> commanded;
    std::vector<Pose6> achieved;
    std::vector<bool> ik_converged;
    std::vector<SceneSpec> scene_states;  // scene after each step
    std::vector<ContactEvent> contacts;
    ArmState final_arm;

    bool any_contact() const { return !contacts.empty(); }
    bool any_ik_stuck() const;
    std::string to_text() const;  // one step per line: see docs/FORMATS.md
};

// Runs IK per target from the ready posture onward; scene advances with the
// achieved (not commanded) end-effector motion. Stuck steps skip ahead.
RolloutTrace execute_trajectory(const SceneSpec& scene, const std::vector<Pose6>& poses);

bool success(const SceneSpec& before, const SceneSpec& after, TaskId criterion);
bool goal_reached(const SceneSpec& after, const SceneSpec& goal);

// Handle-region center for a task's object in the current scene state; where
// the oracle aims and the flow baseline starts.
Eigen::Vector3d handle_point(const SceneSpec& scene, TaskId task);

}  // namespace htp
