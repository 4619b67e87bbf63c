#include "htp/sim.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace htp {
namespace {

std::string vec3_str(const Eigen::Vector3d& v) {
    return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

Eigen::Vector3d vec3_parse(const std::string& s) {
    std::istringstream is(s);
    Eigen::Vector3d v;
    is >> v.x() >> v.y() >> v.z();
    if (!is) throw std::runtime_error("scene file: bad vector '" + s + "'");
    return v;
}

double clamp(double v, double lo, double hi) { return std::max(lo, std::min(hi, v)); }

// distance between point p and segment [a, b]
double point_segment_dist(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                          const Eigen::Vector3d& b, double* t_out = nullptr) {
    const Eigen::Vector3d ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 1e-12 ? clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    if (t_out) *t_out = t;
    return (p - (a + t * ab)).norm();
}

// distance between segments [a0,a1] and [b0,b1], with closest parameter on a
double segment_segment_dist(const Eigen::Vector3d& a0, const Eigen::Vector3d& a1,
                            const Eigen::Vector3d& b0, const Eigen::Vector3d& b1,
                            double* ta_out = nullptr) {
    // sampled minimization; segments here are short and accuracy of ~1 mm suffices
    double best = 1e18, best_t = 0;
    constexpr int kSamples = 33;
    for (int i = 0; i < kSamples; ++i) {
        const double t = static_cast<double>(i) / (kSamples - 1);
        const Eigen::Vector3d p = a0 + t * (a1 - a0);
        const double d = point_segment_dist(p, b0, b1);
        if (d < best) {
            best = d;
            best_t = t;
        }
    }
    if (ta_out) *ta_out = best_t;
    return best;
}

Eigen::Vector3d door_dir(const Door& d) {
    return Eigen::AngleAxisd(d.angle, Eigen::Vector3d::UnitZ()) * d.closed_dir;
}

Eigen::Vector3d toaster_dir(const Toaster& t) {
    return Eigen::AngleAxisd(t.angle, t.hinge_axis) * Eigen::Vector3d(0, 0, -1);
}

}  // namespace

KvMap SceneSpec::to_kv() const {
    KvMap kv;
    std::string objs;
    auto tag = [&objs](const char* n) {
        if (!objs.empty()) objs += ",";
        objs += n;
    };
    if (drawer) tag("drawer");
    if (door) tag("door");
    if (toaster) tag("toaster");
    if (bowl) tag("bowl");
    if (veggies) tag("veggies");
    kv.set("objects", objs);
    if (drawer) {
        kv.set("drawer.base", vec3_str(drawer->base));
        kv.set("drawer.axis", vec3_str(drawer->axis));
        kv.set("drawer.range", drawer->range);
        kv.set("drawer.opening_top", drawer->opening_top);
        kv.set("drawer.opening_bottom", drawer->opening_bottom);
        kv.set("drawer.width", drawer->width);
    }
    if (door) {
        kv.set("door.anchor", vec3_str(door->anchor));
        kv.set("door.closed_dir", vec3_str(door->closed_dir));
        kv.set("door.panel_width", door->panel_width);
        kv.set("door.angle", door->angle);
    }
    if (toaster) {
        kv.set("toaster.hinge", vec3_str(toaster->hinge));
        kv.set("toaster.hinge_axis", vec3_str(toaster->hinge_axis));
        kv.set("toaster.flap_depth", toaster->flap_depth);
        kv.set("toaster.angle", toaster->angle);
    }
    if (bowl) {
        kv.set("bowl.position", vec3_str(bowl->position));
        kv.set("bowl.radius", bowl->radius);
        kv.set("bowl.rim_height", bowl->rim_height);
        kv.set("bowl.upright", static_cast<long long>(bowl->upright ? 1 : 0));
    }
    if (veggies) {
        kv.set("veggies.center", vec3_str(veggies->center));
        kv.set("veggies.count", static_cast<long long>(veggies->pieces.size()));
        for (size_t i = 0; i < veggies->pieces.size(); ++i)
            kv.set("veggies.piece" + std::to_string(i), vec3_str(veggies->pieces[i]));
    }
    return kv;
}

SceneSpec SceneSpec::from_kv(const KvMap& kv) {
    SceneSpec s;
    const std::string objs = kv.get("objects");
    if (objs.find("drawer") != std::string::npos) {
        DrawerStack d;
        d.base = vec3_parse(kv.get("drawer.base"));
        d.axis = vec3_parse(kv.get("drawer.axis"));
        d.range = kv.get_double("drawer.range");
        d.opening_top = kv.get_double("drawer.opening_top");
        d.opening_bottom = kv.get_double("drawer.opening_bottom");
        d.width = kv.get_double("drawer.width");
        s.drawer = d;
    }
    if (objs.find("door") != std::string::npos) {
        Door d;
        d.anchor = vec3_parse(kv.get("door.anchor"));
        d.closed_dir = vec3_parse(kv.get("door.closed_dir"));
        d.panel_width = kv.get_double("door.panel_width");
        d.angle = kv.get_double("door.angle");
        s.door = d;
    }
    if (objs.find("toaster") != std::string::npos) {
        Toaster t;
        t.hinge = vec3_parse(kv.get("toaster.hinge"));
        t.hinge_axis = vec3_parse(kv.get("toaster.hinge_axis"));
        t.flap_depth = kv.get_double("toaster.flap_depth");
        t.angle = kv.get_double("toaster.angle");
        s.toaster = t;
    }
    if (objs.find("bowl") != std::string::npos) {
        Bowl b;
        b.position = vec3_parse(kv.get("bowl.position"));
        b.radius = kv.get_double("bowl.radius");
        b.rim_height = kv.get_double("bowl.rim_height");
        b.upright = kv.get_int("bowl.upright") != 0;
        s.bowl = b;
    }
    if (objs.find("veggies") != std::string::npos) {
        VeggieBoard v;
        v.center = vec3_parse(kv.get("veggies.center"));
        const long long n = kv.get_int("veggies.count");
        for (long long i = 0; i < n; ++i)
            v.pieces.push_back(vec3_parse(kv.get("veggies.piece" + std::to_string(i))));
        s.veggies = v;
    }
    return s;
}

std::string task_name(TaskId t) {
    switch (t) {
        case TaskId::MoveVeggies: return "move_veggies";
        case TaskId::OpenDoor: return "open_door";
        case TaskId::CloseDoor: return "close_door";
        case TaskId::OpenTopDrawer: return "open_top_drawer";
        case TaskId::CloseTopDrawer: return "close_top_drawer";
        case TaskId::OpenBottomDrawer: return "open_bottom_drawer";
        case TaskId::CloseBottomDrawer: return "close_bottom_drawer";
        case TaskId::OpenToaster: return "open_toaster";
        case TaskId::CloseToaster: return "close_toaster";
        case TaskId::MoveBowl: return "move_bowl";
    }
    throw std::invalid_argument("task_name: bad id");
}

TaskId task_from_name(const std::string& name) {
    for (int i = 0; i < kNumTasks; ++i)
        if (task_name(static_cast<TaskId>(i)) == name) return static_cast<TaskId>(i);
    throw std::invalid_argument("unknown task '" + name + "'");
}

bool task_feasible(const SceneSpec& scene, TaskId task) {
    switch (task) {
        case TaskId::MoveVeggies:
            return scene.veggies.has_value() && !scene.veggies->pieces.empty();
        case TaskId::OpenDoor:
            return scene.door && scene.door->angle <= scene.door->max_angle - 16.0 * M_PI / 180.0;
        case TaskId::CloseDoor:
            return scene.door && scene.door->angle >= 16.0 * M_PI / 180.0;
        case TaskId::OpenTopDrawer:
            return scene.drawer && scene.drawer->opening_top <= 0.65 * scene.drawer->range;
        case TaskId::CloseTopDrawer:
            return scene.drawer && scene.drawer->opening_top >= 0.35 * scene.drawer->range;
        case TaskId::OpenBottomDrawer:
            return scene.drawer && scene.drawer->opening_bottom <= 0.65 * scene.drawer->range;
        case TaskId::CloseBottomDrawer:
            return scene.drawer && scene.drawer->opening_bottom >= 0.35 * scene.drawer->range;
        case TaskId::OpenToaster:
            return scene.toaster &&
                   scene.toaster->angle <= scene.toaster->max_angle - 16.0 * M_PI / 180.0;
        case TaskId::CloseToaster:
            return scene.toaster && scene.toaster->angle >= 16.0 * M_PI / 180.0;
        case TaskId::MoveBowl:
            return scene.bowl.has_value() && scene.bowl->upright;
    }
    return false;
}

std::vector<TaskId> feasible_tasks(const SceneSpec& scene) {
    std::vector<TaskId> out;
    for (int i = 0; i < kNumTasks; ++i)
        if (task_feasible(scene, static_cast<TaskId>(i))) out.push_back(static_cast<TaskId>(i));
    return out;
}

// --- arm ---

const ArmChain& arm_chain() {
    static const ArmChain chain = [] {
        ArmChain c;
        const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
        const Eigen::Vector3d y = Eigen::Vector3d::UnitY();
        c.joints = {
            {{0, 0, 0.28}, z, -2.96, 2.96}, {{0, 0, 0.06}, y, -2.6, 2.6},
            {{0, 0, 0.30}, z, -2.96, 2.96}, {{0, 0, 0.05}, y, -2.6, 2.6},
            {{0, 0, 0.30}, z, -2.96, 2.96}, {{0, 0, 0.05}, y, -2.6, 2.6},
            {{0, 0, 0.08}, z, -2.96, 2.96},
        };
        c.ee_offset = {0, 0, 0.14};
        return c;
    }();
    return chain;
}

ArmState ArmState::ready() {
    ArmState s;
    s.q << 0.0, 0.4, 0.0, 1.78, 0.0, 0.72, 0.0;
    return s;
}

Pose6 forward_kinematics(const ArmState& arm) {
    const ArmChain& c = arm_chain();
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    for (size_t i = 0; i < c.joints.size(); ++i) {
        p += r * c.joints[i].offset;
        r = r * Eigen::AngleAxisd(arm.q[static_cast<int>(i)], c.joints[i].axis).toRotationMatrix();
    }
    p += r * c.ee_offset;
    return Pose6::from_rotation(p, r);
}

namespace {

// geometric Jacobian and joint origins/axes in world frame
void arm_frames(const ArmState& arm, std::vector<Eigen::Vector3d>& origins,
                std::vector<Eigen::Vector3d>& axes, Eigen::Vector3d& ee) {
    const ArmChain& c = arm_chain();
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    origins.clear();
    axes.clear();
    for (size_t i = 0; i < c.joints.size(); ++i) {
        p += r * c.joints[i].offset;
        origins.push_back(p);
        axes.push_back(r * c.joints[i].axis);
        r = r * Eigen::AngleAxisd(arm.q[static_cast<int>(i)], c.joints[i].axis).toRotationMatrix();
    }
    ee = p + r * c.ee_offset;
}

Eigen::Vector3d rotation_error(const Eigen::Matrix3d& target, const Eigen::Matrix3d& current) {
    Eigen::AngleAxisd aa(target * current.transpose());
    return aa.angle() * aa.axis();
}

}  // namespace

IkResult ik_solve(const Pose6& target, const ArmState& seed) {
    if (!target.position.allFinite() || !target.euler.allFinite())
        throw std::invalid_argument("ik_solve: non-finite target");
    constexpr double kLambda = 0.05;
    constexpr double kStepCap = 0.2;
    constexpr int kMaxIters = 200;

    const ArmChain& chain = arm_chain();
    const Eigen::Matrix3d target_rot = target.rotation();
    const Pose6 start = forward_kinematics(seed);
    const double step_pos = (target.position - start.position).norm();
    const double step_ori = rotation_error(target_rot, start.rotation()).norm();
    const double pos_tol = std::max(0.005, 0.10 * step_pos);
    const double ori_tol = std::max(3.0 * M_PI / 180.0, 0.20 * step_ori);

    IkResult best;
    best.state = seed;
    double best_err = 1e18;

    ArmState arm = seed;
    std::vector<Eigen::Vector3d> origins, axes;
    Eigen::Vector3d ee;
    // Deterministic restart schedule within the 200-iteration budget; kicks
    // the solve out of wrist-flip local minima.
    const int kRestartAt1 = 70, kRestartAt2 = 135;
    int restarts = 0;
    for (int it = 0; it <= kMaxIters; ++it) {
        arm_frames(arm, origins, axes, ee);
        Eigen::Matrix3d rot = forward_kinematics(arm).rotation();
        const Eigen::Vector3d ep = target.position - ee;
        const Eigen::Vector3d er = rotation_error(target_rot, rot);
        const double err = ep.norm() + 0.3 * er.norm();
        if (err < best_err) {
            best_err = err;
            best.state = arm;
            best.iterations = it;
            best.position_error = ep.norm();
            best.orientation_error = er.norm();
        }
        if (ep.norm() <= pos_tol && er.norm() <= ori_tol) {
            best.state = arm;
            best.status = IkStatus::Converged;
            best.iterations = it;
            best.position_error = ep.norm();
            best.orientation_error = er.norm();
            return best;
        }
        if (it == kMaxIters) break;
        if (((it == kRestartAt1 && restarts == 0) || (it == kRestartAt2 && restarts == 1)) &&
            err > 0.05) {
            ++restarts;
            arm = ArmState();
            arm.q[0] = std::atan2(target.position.y(), target.position.x());
            if (restarts == 1) {
                arm.q[1] = 0.9;
                arm.q[3] = 1.1;
                arm.q[5] = 0.8;
            } else {
                arm.q[1] = -0.9;
                arm.q[3] = -1.1;
                arm.q[5] = -0.8;
            }
            for (int j = 0; j < 7; ++j)
                arm.q[j] = clamp(arm.q[j], chain.joints[j].lo, chain.joints[j].hi);
            continue;
        }

        Eigen::Matrix<double, 6, 7> jac;
        for (int j = 0; j < 7; ++j) {
            jac.block<3, 1>(0, j) = axes[j].cross(ee - origins[j]);
            jac.block<3, 1>(3, j) = axes[j];
        }
        Eigen::Matrix<double, 6, 1> e;
        e << ep, er;
        const Eigen::Matrix<double, 6, 6> jjt =
            jac * jac.transpose() + kLambda * kLambda * Eigen::Matrix<double, 6, 6>::Identity();
        Eigen::Matrix<double, 7, 1> dq = jac.transpose() * jjt.ldlt().solve(e);
        for (int j = 0; j < 7; ++j) {
            dq[j] = clamp(dq[j], -kStepCap, kStepCap);
            arm.q[j] = clamp(arm.q[j] + dq[j], chain.joints[j].lo, chain.joints[j].hi);
        }
    }
    best.status = IkStatus::Stuck;
    return best;
}

// --- contact model ---

namespace {

struct HandleSeg {
    Eigen::Vector3d a, b;
};

HandleSeg drawer_handle(const DrawerStack& d, bool top) {
    const Eigen::Vector3d perp = Eigen::Vector3d::UnitZ().cross(d.axis).normalized();
    const double z = top ? d.handle_z_top : d.handle_z_bottom;
    const Eigen::Vector3d c =
        d.base + d.axis * (top ? d.opening_top : d.opening_bottom) + Eigen::Vector3d(0, 0, z);
    return {c - 0.06 * perp, c + 0.06 * perp};
}

HandleSeg door_handle(const Door& d) {
    const Eigen::Vector3d edge = d.anchor + door_dir(d) * d.panel_width;
    return {edge + Eigen::Vector3d(0, 0, 0.06), edge + Eigen::Vector3d(0, 0, d.panel_height - 0.04)};
}

HandleSeg toaster_handle(const Toaster& t) {
    const Eigen::Vector3d edge = t.hinge + toaster_dir(t) * t.flap_depth;
    const Eigen::Vector3d along = t.hinge_axis * (0.4 * t.body_size);
    return {edge - along, edge + along};
}

}  // namespace

Eigen::Vector3d handle_point(const SceneSpec& scene, TaskId task) {
    switch (task) {
        case TaskId::OpenTopDrawer:
        case TaskId::CloseTopDrawer: {
            auto h = drawer_handle(*scene.drawer, true);
            return 0.5 * (h.a + h.b);
        }
        case TaskId::OpenBottomDrawer:
        case TaskId::CloseBottomDrawer: {
            auto h = drawer_handle(*scene.drawer, false);
            return 0.5 * (h.a + h.b);
        }
        case TaskId::OpenDoor:
        case TaskId::CloseDoor: {
            auto h = door_handle(*scene.door);
            return 0.5 * (h.a + h.b);
        }
        case TaskId::OpenToaster:
        case TaskId::CloseToaster: {
            auto h = toaster_handle(*scene.toaster);
            return 0.5 * (h.a + h.b);
        }
        case TaskId::MoveBowl:
            return scene.bowl->position + Eigen::Vector3d(0, 0, 0.5 * scene.bowl->rim_height);
        case TaskId::MoveVeggies:
            return scene.veggies->center + Eigen::Vector3d(0, 0, scene.veggies->thickness + 0.008);
    }
    throw std::invalid_argument("handle_point: bad task");
}

SceneSpec step_scene(const SceneSpec& scene, const Pose6& ee_from, const Pose6& ee_to,
                     std::vector<std::string>* contacts) {
    SceneSpec out = scene;
    const Eigen::Vector3d a = ee_from.position, b = ee_to.position;
    const Eigen::Vector3d disp = b - a;
    auto note = [contacts](const char* name) {
        if (contacts) contacts->push_back(name);
    };

    if (out.drawer) {
        auto& d = *out.drawer;
        for (bool top : {true, false}) {
            const HandleSeg h = drawer_handle(d, top);
            if (segment_segment_dist(a, b, h.a, h.b) <= kGraspRadius) {
                double& opening = top ? d.opening_top : d.opening_bottom;
                opening = clamp(opening + disp.dot(d.axis), 0.0, d.range);
                note(top ? "drawer_top" : "drawer_bottom");
            }
        }
    }
    if (out.door) {
        auto& d = *out.door;
        const HandleSeg h = door_handle(d);
        if (segment_segment_dist(a, b, h.a, h.b) <= kGraspRadius) {
            const Eigen::Vector3d tangent = Eigen::Vector3d::UnitZ().cross(door_dir(d));
            d.angle = clamp(d.angle + disp.dot(tangent) / d.panel_width, 0.0, d.max_angle);
            note("door");
        }
    }
    if (out.toaster) {
        auto& t = *out.toaster;
        const HandleSeg h = toaster_handle(t);
        if (segment_segment_dist(a, b, h.a, h.b) <= kGraspRadius) {
            const Eigen::Vector3d tangent = t.hinge_axis.cross(toaster_dir(t));
            t.angle = clamp(t.angle + disp.dot(tangent) / t.flap_depth, 0.0, t.max_angle);
            note("toaster");
        }
    }
    if (out.bowl) {
        auto& bw = *out.bowl;
        double tpath = 0;
        const Eigen::Vector3d c(bw.position.x(), bw.position.y(), 0);
        Eigen::Vector3d a2(a.x(), a.y(), 0), b2(b.x(), b.y(), 0);
        const double horiz = point_segment_dist(c, a2, b2, &tpath);
        const double contact_z = a.z() + tpath * (b.z() - a.z());
        if (horiz <= bw.radius + 0.02 && contact_z >= -0.01 && contact_z <= bw.rim_height + 0.03) {
            bw.position.x() += disp.x();
            bw.position.y() += disp.y();
            bw.position.x() = clamp(bw.position.x(), kTableXMin, kTableXMax);
            bw.position.y() = clamp(bw.position.y(), kTableYMin, kTableYMax);
            if (contact_z > 0.8 * bw.rim_height) bw.upright = false;
            note("bowl");
        }
    }
    if (out.veggies) {
        auto& vb = *out.veggies;
        const double sweep_z = vb.thickness + 0.01;  // within 1 cm of the surface
        bool touched = false;
        for (auto& piece : vb.pieces) {
            double tpath = 0;
            Eigen::Vector3d p2(piece.x(), piece.y(), 0);
            Eigen::Vector3d a2(a.x(), a.y(), 0), b2(b.x(), b.y(), 0);
            const double horiz = point_segment_dist(p2, a2, b2, &tpath);
            const double z_at = a.z() + tpath * (b.z() - a.z());
            if (horiz <= 0.05 && z_at <= sweep_z + 0.01) {
                piece.x() = clamp(piece.x() + disp.x(), kTableXMin, kTableXMax);
                piece.y() = clamp(piece.y() + disp.y(), kTableYMin, kTableYMax);
                touched = true;
            }
        }
        if (touched) note("veggies");
    }
    return out;
}

bool RolloutTrace::any_ik_stuck() const {
    for (bool ok : ik_converged)
        if (!ok) return true;
    return false;
}

std::string RolloutTrace::to_text() const {
    // one step per line: step cx cy cz cr cp cw ax ay az ar ap aw ik contacts
    std::string out =
        "# step commanded(x y z roll pitch yaw) achieved(x y z roll pitch yaw) ik contacts\n";
    for (size_t i = 0; i < commanded.size(); ++i) {
        out += std::to_string(i);
        for (const Pose6* p : {&commanded[i], &achieved[i]}) {
            for (int k = 0; k < 3; ++k) out += " " + format_double(p->position[k]);
            for (int k = 0; k < 3; ++k) out += " " + format_double(p->euler[k]);
        }
        out += ik_converged[i] ? " ok" : " stuck";
        std::string cs;
        for (const auto& c : contacts)
            if (c.step == static_cast<int>(i)) cs += (cs.empty() ? "" : "+") + c.object;
        out += " " + (cs.empty() ? std::string("-") : cs) + "\n";
    }
    return out;
}

RolloutTrace execute_trajectory(const SceneSpec& scene, const std::vector<Pose6>& poses) {
    if (poses.empty()) throw std::invalid_argument("execute_trajectory: empty pose sequence");
    RolloutTrace trace;
    ArmState arm = ArmState::ready();
    SceneSpec current = scene;
    Pose6 prev_ee = forward_kinematics(arm);
    for (size_t i = 0; i < poses.size(); ++i) {
        const IkResult ik = ik_solve(poses[i], arm);
        arm = ik.state;
        const Pose6 achieved = forward_kinematics(arm);
        std::vector<std::string> step_contacts;
        current = step_scene(current, prev_ee, achieved, &step_contacts);
        trace.commanded.push_back(poses[i]);
        trace.achieved.push_back(achieved);
        trace.ik_converged.push_back(ik.status == IkStatus::Converged);
        trace.scene_states.push_back(current);
        for (const auto& c : step_contacts)
            trace.contacts.push_back({c, static_cast<int>(i)});
        prev_ee = achieved;
    }
    trace.final_arm = arm;
    return trace;
}

namespace {

void require_same_objects(const SceneSpec& a, const SceneSpec& b, const char* who) {
    const bool same = a.drawer.has_value() == b.drawer.has_value() &&
                      a.door.has_value() == b.door.has_value() &&
                      a.toaster.has_value() == b.toaster.has_value() &&
                      a.bowl.has_value() == b.bowl.has_value() &&
                      a.veggies.has_value() == b.veggies.has_value();
    if (!same) throw std::invalid_argument(std::string(who) + ": scenes have different object sets");
    if (a.veggies && a.veggies->pieces.size() != b.veggies->pieces.size())
        throw std::invalid_argument(std::string(who) + ": veggie piece counts differ");
}

constexpr double kAngleSuccess = 15.0 * M_PI / 180.0;

}  // namespace

bool success(const SceneSpec& before, const SceneSpec& after, TaskId criterion) {
    require_same_objects(before, after, "success");
    switch (criterion) {
        case TaskId::OpenTopDrawer:
            return before.drawer && after.drawer->opening_top - before.drawer->opening_top >=
                                        0.30 * before.drawer->range;
        case TaskId::CloseTopDrawer:
            return before.drawer && before.drawer->opening_top - after.drawer->opening_top >=
                                        0.30 * before.drawer->range;
        case TaskId::OpenBottomDrawer:
            return before.drawer && after.drawer->opening_bottom - before.drawer->opening_bottom >=
                                        0.30 * before.drawer->range;
        case TaskId::CloseBottomDrawer:
            return before.drawer && before.drawer->opening_bottom - after.drawer->opening_bottom >=
                                        0.30 * before.drawer->range;
        case TaskId::OpenDoor:
            return before.door && after.door->angle - before.door->angle >= kAngleSuccess;
        case TaskId::CloseDoor:
            return before.door && before.door->angle - after.door->angle >= kAngleSuccess;
        case TaskId::OpenToaster:
            return before.toaster && after.toaster->angle - before.toaster->angle >= kAngleSuccess;
        case TaskId::CloseToaster:
            return before.toaster && before.toaster->angle - after.toaster->angle >= kAngleSuccess;
        case TaskId::MoveBowl:
            return before.bowl && after.bowl->upright &&
                   (after.bowl->position.head<2>() - before.bowl->position.head<2>()).norm() >= 0.05;
        case TaskId::MoveVeggies: {
            if (!before.veggies) return false;
            size_t moved = 0;
            for (size_t i = 0; i < before.veggies->pieces.size(); ++i)
                if ((after.veggies->pieces[i].head<2>() - before.veggies->pieces[i].head<2>())
                        .norm() >= 0.02)
                    ++moved;
            return moved * 2 >= before.veggies->pieces.size();
        }
    }
    return false;
}

bool goal_reached(const SceneSpec& after, const SceneSpec& goal) {
    require_same_objects(after, goal, "goal_reached");
    if (after.drawer) {
        const double tol = 0.20 * goal.drawer->range;
        if (std::abs(after.drawer->opening_top - goal.drawer->opening_top) > tol) return false;
        if (std::abs(after.drawer->opening_bottom - goal.drawer->opening_bottom) > tol) return false;
    }
    if (after.door && std::abs(after.door->angle - goal.door->angle) > kAngleSuccess) return false;
    if (after.toaster && std::abs(after.toaster->angle - goal.toaster->angle) > kAngleSuccess)
        return false;
    if (after.bowl &&
        (after.bowl->position.head<2>() - goal.bowl->position.head<2>()).norm() > 0.05)
        return false;
    if (after.veggies) {
        for (size_t i = 0; i < after.veggies->pieces.size(); ++i)
            if ((after.veggies->pieces[i].head<2>() - goal.veggies->pieces[i].head<2>()).norm() >
                0.05)
                return false;
    }
    return true;
}

}  // namespace htp
