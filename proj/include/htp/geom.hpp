#pragma once

#include <Eigen/Dense>
#include <array>

namespace htp {

// Euler convention throughout: extrinsic X-Y-Z (roll, pitch, yaw),
// R = Rz(yaw) * Ry(pitch) * Rx(roll), angles in radians, normalized to (-pi, pi].

double normalize_angle(double a);
Eigen::Matrix3d euler_to_matrix(const Eigen::Vector3d& euler);
Eigen::Vector3d matrix_to_euler(const Eigen::Matrix3d& rot);

struct Pose6 {
    Eigen::Vector3d position{0, 0, 0};  // meters
    Eigen::Vector3d euler{0, 0, 0};     // roll, pitch, yaw

    Eigen::Matrix3d rotation() const { return euler_to_matrix(euler); }
    static Pose6 from_rotation(const Eigen::Vector3d& pos, const Eigen::Matrix3d& rot) {
        return Pose6{pos, matrix_to_euler(rot)};
    }
};

// Per-step pose increment: translation in the world frame, rotation relative
// in the previous pose's orientation frame. pose_diff and pose_apply are
// exact inverses under this split.
struct DeltaAction {
    Eigen::Vector3d dpos{0, 0, 0};
    Eigen::Vector3d drot{0, 0, 0};
};

// Weak-perspective hand observation (x, y, s, t_x, t_y, alpha, beta, gamma).
// palm_xy and cam_txy are in normalized image units: pixel offset from the
// principal point is (s*x + t_x) * width/2 horizontally, analogous vertically.
struct HandObs8 {
    Eigen::Vector2d palm_xy{0, 0};
    double scale = 1.0;  // weak-perspective s, > 0
    Eigen::Vector2d cam_txy{0, 0};
    Eigen::Vector3d euler{0, 0, 0};

    std::array<double, 8> flat() const {
        return {palm_xy.x(), palm_xy.y(), scale, cam_txy.x(), cam_txy.y(),
                euler.x(), euler.y(), euler.z()};
    }
};

// Pinhole camera with rigid extrinsics: p_cam = R * p_world + T.
struct CameraModel {
    double fx = 500, fy = 500;
    double cx = 320, cy = 240;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation{0, 0, 0};
    double table_height = 0.0;  // world z of the table plane
    int width = 640, height = 480;
};

DeltaAction pose_diff(const Pose6& current, const Pose6& previous);
Pose6 pose_apply(const Pose6& base, const DeltaAction& action);

Pose6 hand_obs_to_pose(const HandObs8& obs, const CameraModel& cam, double depth_constant);
HandObs8 pose_to_hand_obs(const Pose6& cam_pose, const CameraModel& cam, double depth_constant);

Pose6 camera_to_world(const Pose6& pose, const CameraModel& cam);
Pose6 world_to_camera(const Pose6& pose, const CameraModel& cam);

Eigen::Vector2d project(const Eigen::Vector3d& world_point, const CameraModel& cam);
Eigen::Vector3d inverse_project_to_plane(const Eigen::Vector2d& pixel, const CameraModel& cam);

// 8-component analog of pose_diff / pose_apply for HandObs8 sequences:
// scalar components differ additively, euler via relative rotation.
using Vec8 = Eigen::Matrix<double, 8, 1>;
Vec8 hand_obs_diff(const HandObs8& current, const HandObs8& previous);
HandObs8 hand_obs_apply(const HandObs8& base, const Vec8& delta);

}  // namespace htp
