#include "htp/geom.hpp"

#include <cmath>
#include <stdexcept>

namespace htp {

double normalize_angle(double a) {
    a = std::fmod(a, 2.0 * M_PI);
    if (a <= -M_PI) a += 2.0 * M_PI;
    if (a > M_PI) a -= 2.0 * M_PI;
    return a;
}

Eigen::Matrix3d euler_to_matrix(const Eigen::Vector3d& e) {
    const double cr = std::cos(e.x()), sr = std::sin(e.x());
    const double cp = std::cos(e.y()), sp = std::sin(e.y());
    const double cy = std::cos(e.z()), sy = std::sin(e.z());
    Eigen::Matrix3d rx, ry, rz;
    rx << 1, 0, 0, 0, cr, -sr, 0, sr, cr;
    ry << cp, 0, sp, 0, 1, 0, -sp, 0, cp;
    rz << cy, -sy, 0, sy, cy, 0, 0, 0, 1;
    return rz * ry * rx;
}

Eigen::Vector3d matrix_to_euler(const Eigen::Matrix3d& r) {
    // Inverse of Rz(yaw)*Ry(pitch)*Rx(roll). At |pitch| = pi/2 the roll/yaw
    // pair degenerates; we pick roll = 0 there.
    double sp = -r(2, 0);
    sp = std::max(-1.0, std::min(1.0, sp));
    const double pitch = std::asin(sp);
    double roll, yaw;
    if (std::abs(sp) > 1.0 - 1e-12) {
        roll = 0.0;
        yaw = std::atan2(-r(0, 1), r(1, 1));
    } else {
        roll = std::atan2(r(2, 1), r(2, 2));
        yaw = std::atan2(r(1, 0), r(0, 0));
    }
    return {normalize_angle(roll), normalize_angle(pitch), normalize_angle(yaw)};
}

DeltaAction pose_diff(const Pose6& current, const Pose6& previous) {
    DeltaAction a;
    a.dpos = current.position - previous.position;
    a.drot = matrix_to_euler(previous.rotation().transpose() * current.rotation());
    return a;
}

Pose6 pose_apply(const Pose6& base, const DeltaAction& action) {
    return Pose6::from_rotation(base.position + action.dpos,
                                base.rotation() * euler_to_matrix(action.drot));
}

Pose6 hand_obs_to_pose(const HandObs8& obs, const CameraModel& cam, double depth_constant) {
    if (!(obs.scale > 1e-9))
        throw std::invalid_argument("hand_obs_to_pose: degenerate weak-perspective scale " +
                                    std::to_string(obs.scale));
    const double u = cam.cx + (obs.scale * obs.palm_xy.x() + obs.cam_txy.x()) * 0.5 * cam.width;
    const double v = cam.cy + (obs.scale * obs.palm_xy.y() + obs.cam_txy.y()) * 0.5 * cam.height;
    const double z = depth_constant / obs.scale;
    Pose6 p;
    p.position = {(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z};
    p.euler = obs.euler;
    return p;
}

HandObs8 pose_to_hand_obs(const Pose6& cam_pose, const CameraModel& cam, double depth_constant) {
    const double z = cam_pose.position.z();
    if (!(z > 1e-9))
        throw std::invalid_argument("pose_to_hand_obs: point not in front of camera");
    HandObs8 obs;
    obs.scale = depth_constant / z;
    obs.palm_xy = {0.0, 0.0};
    const double u = cam.fx * cam_pose.position.x() / z + cam.cx;
    const double v = cam.fy * cam_pose.position.y() / z + cam.cy;
    obs.cam_txy = {(u - cam.cx) / (0.5 * cam.width), (v - cam.cy) / (0.5 * cam.height)};
    obs.euler = cam_pose.euler;
    return obs;
}

Pose6 camera_to_world(const Pose6& pose, const CameraModel& cam) {
    const Eigen::Matrix3d rt = cam.rotation.transpose();
    return Pose6::from_rotation(rt * (pose.position - cam.translation), rt * pose.rotation());
}

Pose6 world_to_camera(const Pose6& pose, const CameraModel& cam) {
    return Pose6::from_rotation(cam.rotation * pose.position + cam.translation,
                                cam.rotation * pose.rotation());
}

Eigen::Vector2d project(const Eigen::Vector3d& world_point, const CameraModel& cam) {
    const Eigen::Vector3d pc = cam.rotation * world_point + cam.translation;
    if (!(pc.z() > 1e-9))
        throw std::invalid_argument("project: point behind camera");
    return {cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
}

Eigen::Vector3d inverse_project_to_plane(const Eigen::Vector2d& pixel, const CameraModel& cam) {
    const Eigen::Matrix3d rt = cam.rotation.transpose();
    const Eigen::Vector3d center = -rt * cam.translation;
    Eigen::Vector3d dir_cam{(pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy, 1.0};
    const Eigen::Vector3d dir = (rt * dir_cam).normalized();
    if (std::abs(dir.z()) < 1e-9)
        throw std::runtime_error("inverse_project_to_plane: viewing ray parallel to table plane");
    const double t = (cam.table_height - center.z()) / dir.z();
    if (t <= 0.0)
        throw std::runtime_error("inverse_project_to_plane: plane behind camera");
    return center + t * dir;
}

Vec8 hand_obs_diff(const HandObs8& current, const HandObs8& previous) {
    Vec8 d;
    d[0] = current.palm_xy.x() - previous.palm_xy.x();
    d[1] = current.palm_xy.y() - previous.palm_xy.y();
    d[2] = current.scale - previous.scale;
    d[3] = current.cam_txy.x() - previous.cam_txy.x();
    d[4] = current.cam_txy.y() - previous.cam_txy.y();
    d.segment<3>(5) =
        matrix_to_euler(euler_to_matrix(previous.euler).transpose() * euler_to_matrix(current.euler));
    return d;
}

HandObs8 hand_obs_apply(const HandObs8& base, const Vec8& delta) {
    HandObs8 o;
    o.palm_xy = {base.palm_xy.x() + delta[0], base.palm_xy.y() + delta[1]};
    o.scale = base.scale + delta[2];
    o.cam_txy = {base.cam_txy.x() + delta[3], base.cam_txy.y() + delta[4]};
    o.euler = matrix_to_euler(euler_to_matrix(base.euler) *
                              euler_to_matrix(Eigen::Vector3d(delta.segment<3>(5))));
    return o;
}

}  // namespace htp
