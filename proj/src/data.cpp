#include "htp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace htp {

CameraModel default_camera() {
    CameraModel cam;
    cam.fx = cam.fy = 420;
    cam.cx = 320;
    cam.cy = 240;
    cam.width = 640;
    cam.height = 480;
    cam.table_height = 0.0;
    const Eigen::Vector3d center(1.25, 0.75, 0.85);  // table corner, above
    const Eigen::Vector3d look_at(0.5, 0.0, 0.05);
    const Eigen::Vector3d fwd = (look_at - center).normalized();
    const Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::Vector3d down = fwd.cross(right);
    Eigen::Matrix3d rot;
    rot.row(0) = right;
    rot.row(1) = down;
    rot.row(2) = fwd;
    cam.rotation = rot;
    cam.translation = -rot * center;
    return cam;
}

namespace {

constexpr double kMaxStep = 0.075;  // inter-step translation bound (< 8 cm)
constexpr double kPosNoise = 0.002;
constexpr double kEulerNoise = 0.015;

// world-frame end-effector start pose shared by clips and deployment
Pose6 start_pose() {
    static const Pose6 p = forward_kinematics(ArmState::ready());
    return p;
}

struct Placement {
    Eigen::Vector3d pos;
    Eigen::Vector3d toward;  // horizontal unit vector pointing at the robot base
};

// object footprint radii used for the non-overlap check
double footprint_radius(int type) {
    switch (type) {
        case 0: return 0.24;  // drawer stack
        case 1: return 0.32;  // door swing
        case 2: return 0.18;  // toaster
        case 3: return 0.12;  // bowl
        case 4: return 0.18;  // veggie board
    }
    return 0.2;
}

// Per-type placement annulus. Every handle must stay reachable from the
// ready hand within the approach-phase step budget, so the ranges differ:
// the whole trajectory budget is horizon * kMaxStep.
void placement_range(int type, double& r_lo, double& r_hi, double& a_max) {
    switch (type) {
        // drawers sit far enough out that a full pull (range + overshoot)
        // never drags the hand inside the arm's ~0.22 inner reach radius
        case 0: r_lo = 0.48; r_hi = 0.52; a_max = 0.30; break;  // drawer
        // door edge radius is capped at ~0.70 so the in-trajectory IK never
        // operates near its ~0.75 reach envelope
        case 1: r_lo = 0.40; r_hi = 0.44; a_max = 0.45; break;  // door
        case 2: r_lo = 0.40; r_hi = 0.48; a_max = 0.50; break;  // toaster
        case 3: r_lo = 0.42; r_hi = 0.52; a_max = 0.60; break;  // bowl
        case 4: r_lo = 0.40; r_hi = 0.48; a_max = 0.50; break;  // veggies
    }
}

Placement sample_placement(Rng& rng, int type) {
    double r_lo, r_hi, a_max;
    placement_range(type, r_lo, r_hi, a_max);
    const double r = rng.uniform(r_lo, r_hi);
    const double a = rng.uniform(-a_max, a_max);
    Placement p;
    p.pos = {r * std::cos(a), r * std::sin(a), 0.0};
    p.toward = -Eigen::Vector3d(std::cos(a), std::sin(a), 0.0);
    return p;
}

Eigen::Vector3d rot_z(const Eigen::Vector3d& v, double angle) {
    return Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()) * v;
}

}  // namespace

SceneSpec generate_scene(Rng& rng) {
    const int n_objects = 1 + static_cast<int>(rng.uniform_index(2));
    std::vector<int> types;
    while (static_cast<int>(types.size()) < n_objects) {
        int t = static_cast<int>(rng.uniform_index(5));
        if (std::find(types.begin(), types.end(), t) == types.end()) types.push_back(t);
    }
    std::sort(types.begin(), types.end());  // deterministic build order
    const Eigen::Vector3d hand = start_pose().position;

    SceneSpec scene;
    std::vector<std::pair<Eigen::Vector3d, double>> placed;
    for (int t : types) {
        Placement pl;
        bool found = false;
        for (int attempt = 0; attempt <= 200 && !found; ++attempt) {
            pl = sample_placement(rng, t);
            found = true;
            for (const auto& [q, qr] : placed)
                if ((pl.pos - q).head<2>().norm() < footprint_radius(t) + qr) found = false;
        }
        // some type pairs cannot both fit in their reachable annuli; fall
        // back to a smaller scene rather than overlap footprints
        if (!found) continue;
        placed.emplace_back(pl.pos, footprint_radius(t));
        switch (t) {
            case 0: {
                DrawerStack d;
                d.base = pl.pos;
                d.axis = rot_z(pl.toward, rng.uniform(-0.15, 0.15));
                d.range = rng.uniform(0.16, 0.20);
                d.opening_top = rng.uniform(0.0, d.range);
                d.opening_bottom = rng.uniform(0.0, d.range);
                d.width = rng.uniform(0.28, 0.34);
                scene.drawer = d;
                break;
            }
            case 1: {
                Door dr;
                dr.anchor = pl.pos;
                dr.panel_width = rng.uniform(0.22, 0.26);
                dr.angle = rng.uniform(0.0, dr.max_angle);
                // orient the hinge so the panel edge currently faces the
                // ready hand; the edge is then always a short approach away
                const Eigen::Vector3d edge_dir =
                    rot_z((Eigen::Vector3d(hand.x(), hand.y(), 0) - dr.anchor).normalized(),
                          rng.uniform(-0.25, 0.25));
                dr.closed_dir = rot_z(edge_dir, -dr.angle);
                scene.door = dr;
                break;
            }
            case 2: {
                Toaster to;
                to.hinge = pl.pos + Eigen::Vector3d(0, 0, rng.uniform(0.20, 0.22));
                // flap tilts toward the robot as the angle opens
                to.hinge_axis = rot_z(pl.toward, -M_PI / 2 + rng.uniform(-0.2, 0.2));
                to.flap_depth = rng.uniform(0.12, 0.14);
                to.angle = rng.uniform(0.0, to.max_angle);
                scene.toaster = to;
                break;
            }
            case 3: {
                Bowl b;
                b.position = pl.pos;
                b.radius = rng.uniform(0.06, 0.08);
                b.rim_height = rng.uniform(0.07, 0.09);
                scene.bowl = b;
                break;
            }
            case 4: {
                VeggieBoard v;
                v.center = pl.pos;
                // 2 x 3 grid of pieces around the board center, jittered
                for (int i = 0; i < 6; ++i) {
                    const double gx = (i % 3 - 1) * 0.045 + rng.uniform(-0.008, 0.008);
                    const double gy = (i / 3 == 0 ? -0.02 : 0.02) + rng.uniform(-0.008, 0.008);
                    v.pieces.push_back(v.center + Eigen::Vector3d(gx, gy, v.thickness));
                }
                scene.veggies = v;
                break;
            }
        }
    }
    return scene;
}

namespace {

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// Closed-loop trajectory writer: emits one noisy step toward a target point
// and advances its own copy of the scene, so later waypoints can track
// handles that moved (deliberately or by accidental contact). replay_poses
// over the emitted sequence reproduces exactly the scene evolution seen here.
struct TrajWriter {
    SceneSpec sim;
    Pose6 cur;
    std::vector<Pose6> poses;
    Rng& rng;

    TrajWriter(const SceneSpec& scene, Rng& r) : sim(scene), cur(start_pose()), rng(r) {
        poses.push_back(cur);
    }

    void step_toward(const Eigen::Vector3d& target, double max_len = kMaxStep * 0.96) {
        Eigen::Vector3d d = target - cur.position;
        const double n = d.norm();
        if (n > max_len) d *= max_len / n;
        Pose6 nxt = cur;
        for (int k = 0; k < 3; ++k) {
            nxt.position[k] += d[k] + rng.uniform(-kPosNoise, kPosNoise);
            nxt.euler[k] = normalize_angle(nxt.euler[k] + rng.uniform(-kEulerNoise, kEulerNoise));
        }
        sim = step_scene(sim, cur, nxt);
        poses.push_back(nxt);
        cur = nxt;
    }

    // n even-length steps toward a (possibly moving) target
    void approach(const std::function<Eigen::Vector3d()>& target, int n) {
        for (int i = 0; i < n; ++i) {
            const Eigen::Vector3d t = target();
            const double remaining = (t - cur.position).norm();
            step_toward(t, clampd(remaining / (n - i), 1e-6, kMaxStep * 0.96));
        }
    }
};

}  // namespace

std::vector<Pose6> oracle_trajectory(const SceneSpec& scene, TaskId task, Rng& rng, int horizon) {
    if (!task_feasible(scene, task))
        throw std::invalid_argument("oracle_trajectory: task " + task_name(task) +
                                    " infeasible in scene");
    if (horizon < 6) throw std::invalid_argument("oracle_trajectory: horizon must be >= 6");

    TrajWriter w(scene, rng);
    const int n_manip = 3;  // reach in / descend, then two manipulation steps
    const int n_approach = horizon - n_manip;

    switch (task) {
        case TaskId::OpenTopDrawer:
        case TaskId::CloseTopDrawer:
        case TaskId::OpenBottomDrawer:
        case TaskId::CloseBottomDrawer: {
            const bool top = task == TaskId::OpenTopDrawer || task == TaskId::CloseTopDrawer;
            const bool open = task == TaskId::OpenTopDrawer || task == TaskId::OpenBottomDrawer;
            // stage above the handle so the approach never drags the drawer,
            // then descend onto it; the descent is normal to the slide axis
            w.approach(
                [&]() -> Eigen::Vector3d { return handle_point(w.sim, task) + Eigen::Vector3d(0, 0, 0.06); },
                n_approach);
            w.step_toward(handle_point(w.sim, task));
            const auto& d0 = *scene.drawer;
            const double o0 = top ? d0.opening_top : d0.opening_bottom;
            const double headroom = open ? d0.range - o0 : o0;
            // small headroom: aim past the physical stop and let it clamp;
            // otherwise slide half the range (always > the success threshold)
            double target_o;
            if (headroom <= 0.5 * d0.range)
                target_o = open ? d0.range + 0.02 : -0.02;
            else
                target_o = open ? o0 + 0.5 * d0.range : o0 - 0.5 * d0.range;
            for (int i = 0; i < 2; ++i) {
                const auto& d = *w.sim.drawer;
                const double o = top ? d.opening_top : d.opening_bottom;
                const double delta = clampd(target_o - o, -0.065, 0.065);
                w.step_toward(handle_point(w.sim, task) + d.axis * delta);
            }
            break;
        }
        case TaskId::OpenDoor:
        case TaskId::CloseDoor: {
            const bool open = task == TaskId::OpenDoor;
            // the start pose sits inside the door's swing cylinder, so the
            // only contact-free route is over the top of the panel: stage
            // above the edge, then drop straight down onto its upper end
            const double ph = scene.door->panel_height;
            w.approach(
                [&]() -> Eigen::Vector3d {
                    const Eigen::Vector3d h = handle_point(w.sim, task);
                    return {h.x(), h.y(), ph + 0.04};
                },
                n_approach);
            {
                const Eigen::Vector3d h = handle_point(w.sim, task);
                w.step_toward({h.x(), h.y(), ph - 0.035});
            }
            const auto& dr0 = *scene.door;
            const double headroom = open ? dr0.max_angle - dr0.angle : dr0.angle;
            double target_th;
            if (headroom <= 0.45)
                target_th = open ? dr0.max_angle + 0.08 : -0.08;
            else
                target_th = open ? dr0.angle + 0.45 : dr0.angle - 0.45;
            for (int i = 0; i < 2; ++i) {
                const auto& dr = *w.sim.door;
                const double cap = 2.0 * std::asin(0.035 / dr.panel_width);
                const double dth = clampd(target_th - dr.angle, -cap, cap);
                const Eigen::Vector3d edge =
                    dr.anchor + rot_z(dr.closed_dir, dr.angle + dth) * dr.panel_width;
                w.step_toward(Eigen::Vector3d(edge.x(), edge.y(), w.cur.position.z()));
            }
            break;
        }
        case TaskId::OpenToaster:
        case TaskId::CloseToaster: {
            const bool open = task == TaskId::OpenToaster;
            // stage normal to the swing tangent (tilts from "above the edge"
            // when closed toward "in front of it" when open), so reaching in
            // never rotates the flap
            auto stage_normal = [&]() -> Eigen::Vector3d {
                const auto& t = *w.sim.toaster;
                const Eigen::Vector3d t0 = t.hinge_axis.cross(Eigen::Vector3d(0, 0, -1));
                return std::cos(t.angle) * Eigen::Vector3d::UnitZ() - std::sin(t.angle) * t0;
            };
            w.approach(
                [&]() -> Eigen::Vector3d {
                    return handle_point(w.sim, task) + stage_normal() * 0.05;
                },
                n_approach);
            w.step_toward(handle_point(w.sim, task));
            const auto& t0 = *scene.toaster;
            const double headroom = open ? t0.max_angle - t0.angle : t0.angle;
            double target_th;
            if (headroom <= 0.45)
                target_th = open ? t0.max_angle + 0.08 : -0.08;
            else
                target_th = open ? t0.angle + 0.45 : t0.angle - 0.45;
            for (int i = 0; i < 2; ++i) {
                const auto& t = *w.sim.toaster;
                const double cap = 2.0 * std::asin(0.035 / t.flap_depth);
                const double dth = clampd(target_th - t.angle, -cap, cap);
                const Eigen::Vector3d dir =
                    Eigen::AngleAxisd(t.angle + dth, t.hinge_axis) * Eigen::Vector3d(0, 0, -1);
                w.step_toward(t.hinge + dir * t.flap_depth);
            }
            break;
        }
        case TaskId::MoveBowl: {
            const auto& b = *scene.bowl;
            const Eigen::Vector3d hand = start_pose().position;
            // pick a push direction whose contact point is in easy reach and
            // whose endpoint stays on the table
            Eigen::Vector3d push_dir =
                (Eigen::Vector3d(b.position.x() - hand.x(), b.position.y() - hand.y(), 0))
                    .normalized();
            for (int tries = 0; tries < 40; ++tries) {
                const double ang = rng.uniform(-M_PI, M_PI);
                const Eigen::Vector3d cand(std::cos(ang), std::sin(ang), 0);
                const Eigen::Vector3d end = b.position + cand * 0.16;
                const Eigen::Vector3d contact = b.position - cand * (b.radius + 0.03);
                const bool on_table = end.x() > kTableXMin + 0.05 && end.x() < kTableXMax - 0.05 &&
                                      end.y() > kTableYMin + 0.05 && end.y() < kTableYMax - 0.05;
                if (on_table && (contact - hand).head<2>().norm() <= 0.28) {
                    push_dir = cand;
                    break;
                }
            }
            const Eigen::Vector3d contact = b.position - push_dir * (b.radius + 0.03) +
                                            Eigen::Vector3d(0, 0, 0.45 * b.rim_height);
            const Eigen::Vector3d staging(contact.x(), contact.y(), b.rim_height + 0.06);
            w.approach([&] { return staging; }, n_approach);
            w.step_toward(contact);  // vertical descent outside the contact ring
            for (int i = 1; i <= 2; ++i) w.step_toward(contact + push_dir * 0.07 * i);
            break;
        }
        case TaskId::MoveVeggies: {
            const auto& v = *scene.veggies;
            const Eigen::Vector3d hand = start_pose().position;
            // sweep along the piece grid's long axis so every piece stays
            // well inside the drag radius; enter from the side nearer the hand
            const double side = hand.x() >= v.center.x() ? 1.0 : -1.0;
            const Eigen::Vector3d u(side, 0, 0);
            const double sweep_z = v.thickness + 0.004;
            const Eigen::Vector3d entry =
                v.center + u * 0.085 + Eigen::Vector3d(0, 0, sweep_z);
            const Eigen::Vector3d staging(entry.x(), entry.y(), 0.06);
            w.approach([&] { return staging; }, n_approach);
            w.step_toward(entry);  // descend to the board
            for (int i = 1; i <= 2; ++i) w.step_toward(entry - u * 0.065 * i);
            break;
        }
    }

    while (static_cast<int>(w.poses.size()) < horizon + 1) w.step_toward(w.cur.position);
    return w.poses;
}

SceneSpec replay_poses(const SceneSpec& scene, const std::vector<Pose6>& world_poses) {
    SceneSpec cur = scene;
    for (size_t i = 1; i < world_poses.size(); ++i)
        cur = step_scene(cur, world_poses[i - 1], world_poses[i]);
    return cur;
}

// --- featurizer ---

namespace {

constexpr int kRaster = 32;
constexpr int kChannels = 6;  // 5 object types + articulation state

void splat(std::vector<double>& grid, int channel, const Eigen::Vector2d& px,
           const CameraModel& cam, double value) {
    const double gx = px.x() / cam.width * kRaster - 0.5;
    const double gy = px.y() / cam.height * kRaster - 0.5;
    const int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
    const double fx = gx - x0, fy = gy - y0;
    for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
            const int x = x0 + dx, y = y0 + dy;
            if (x < 0 || x >= kRaster || y < 0 || y >= kRaster) continue;
            const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
            grid[(static_cast<size_t>(channel) * kRaster + y) * kRaster + x] += w * value;
        }
}

void splat_point(std::vector<double>& grid, int channel, const Eigen::Vector3d& world,
                 const CameraModel& cam, double articulation = -1.0) {
    Eigen::Vector2d px;
    try {
        px = project(world, cam);
    } catch (const std::exception&) {
        return;  // behind camera; skip
    }
    splat(grid, channel, px, cam, 1.0);
    if (articulation >= 0.0) splat(grid, 5, px, cam, articulation);
}

const std::vector<float>& projection_matrix(int feature_dim) {
    static std::mutex mu;
    static std::map<int, std::vector<float>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(feature_dim);
    if (it != cache.end()) return it->second;
    const int n_in = kChannels * kRaster * kRaster;
    std::vector<float> m(static_cast<size_t>(feature_dim) * n_in);
    Rng rng(0xFEA7u);  // fixed: the featurizer is part of the data contract
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_in));
    for (auto& e : m) e = static_cast<float>(scale * rng.normal());
    return cache.emplace(feature_dim, std::move(m)).first->second;
}

}  // namespace

std::vector<double> featurize(const SceneSpec& scene, const CameraModel& cam, int feature_dim) {
    const int n_in = kChannels * kRaster * kRaster;
    std::vector<double> grid(n_in, 0.0);

    if (scene.drawer) {
        const auto& d = *scene.drawer;
        const Eigen::Vector3d perp = Eigen::Vector3d::UnitZ().cross(d.axis).normalized();
        // cabinet front face outline
        for (int i = 0; i <= 6; ++i)
            for (double z : {0.04, 0.18, 0.32})
                splat_point(grid, 0, d.base + perp * (i / 6.0 - 0.5) * d.width +
                                         Eigen::Vector3d(0, 0, z), cam);
        // drawer fronts carry the articulation state
        for (bool top : {true, false}) {
            const double opening = top ? d.opening_top : d.opening_bottom;
            const double z = top ? d.handle_z_top : d.handle_z_bottom;
            for (int i = 0; i <= 4; ++i)
                splat_point(grid, 0,
                            d.base + d.axis * opening +
                                perp * (i / 4.0 - 0.5) * 0.8 * d.width +
                                Eigen::Vector3d(0, 0, z),
                            cam, opening / d.range);
        }
    }
    if (scene.door) {
        const auto& dr = *scene.door;
        const Eigen::Vector3d dir = rot_z(dr.closed_dir, dr.angle);
        for (int i = 0; i <= 6; ++i)
            for (double z : {0.05, 0.15, 0.27})
                splat_point(grid, 1, dr.anchor + dir * (i / 6.0) * dr.panel_width +
                                         Eigen::Vector3d(0, 0, z),
                            cam, i >= 5 ? dr.angle / dr.max_angle : -1.0);
    }
    if (scene.toaster) {
        const auto& to = *scene.toaster;
        const Eigen::Vector3d dir =
            Eigen::AngleAxisd(to.angle, to.hinge_axis) * Eigen::Vector3d(0, 0, -1);
        for (int i = 0; i <= 4; ++i) {
            const Eigen::Vector3d along = to.hinge_axis * (i / 4.0 - 0.5) * to.body_size;
            splat_point(grid, 2, to.hinge + along, cam);
            splat_point(grid, 2, to.hinge + along + dir * to.flap_depth, cam,
                        to.angle / to.max_angle);
        }
    }
    if (scene.bowl) {
        const auto& b = *scene.bowl;
        for (int i = 0; i < 8; ++i) {
            const double a = 2 * M_PI * i / 8;
            splat_point(grid, 3,
                        b.position + Eigen::Vector3d(b.radius * std::cos(a),
                                                     b.radius * std::sin(a), b.rim_height),
                        cam, b.upright ? 1.0 : 0.0);
        }
    }
    if (scene.veggies) {
        const auto& v = *scene.veggies;
        for (double sx : {-1.0, 1.0})
            for (double sy : {-1.0, 1.0})
                splat_point(grid, 4,
                            v.center + Eigen::Vector3d(sx * v.half_x, sy * v.half_y, 0), cam);
        for (const auto& p : v.pieces) splat_point(grid, 4, p, cam, 1.0);
    }

    const auto& proj = projection_matrix(feature_dim);
    std::vector<double> out(feature_dim, 0.0);
    for (int j = 0; j < n_in; ++j) {
        const double x = grid[j];
        if (x == 0.0) continue;
        for (int i = 0; i < feature_dim; ++i)
            out[i] += x * proj[static_cast<size_t>(i) * n_in + j];
    }
    double norm = 0;
    for (double e : out) norm += e * e;
    norm = std::sqrt(norm);
    if (norm > 1e-12)
        for (auto& e : out) e /= norm;
    return out;
}

// --- dataset ---

Dataset build_dataset(const DatasetParams& params) {
    if (params.n_clips < 1) throw std::invalid_argument("build_dataset: n_clips must be >= 1");
    if (static_cast<int>(params.task_mix.size()) != kNumTasks)
        throw std::invalid_argument("build_dataset: task_mix must have one weight per task");
    const CameraModel cam = default_camera();
    Dataset ds;
    Rng root(params.seed);
    for (int i = 0; i < params.n_clips; ++i) {
        Rng rng = root.fork(static_cast<std::uint64_t>(i));
        SceneSpec scene = generate_scene(rng);
        std::vector<TaskId> feasible = feasible_tasks(scene);
        // weighted choice among feasible tasks
        double total = 0;
        for (TaskId t : feasible) total += params.task_mix[static_cast<int>(t)];
        TaskId task = feasible.back();
        if (total <= 0.0) {
            // all feasible tasks weighted out; fall back to a uniform choice
            task = feasible[rng.uniform_index(feasible.size())];
        } else {
            double pick = rng.uniform() * total;
            for (TaskId t : feasible) {
                pick -= params.task_mix[static_cast<int>(t)];
                if (pick <= 0) {
                    task = t;
                    break;
                }
            }
        }
        const std::vector<Pose6> world_poses =
            oracle_trajectory(scene, task, rng, params.horizon);
        const SceneSpec final_scene = replay_poses(scene, world_poses);

        Clip clip;
        clip.id = static_cast<std::uint64_t>(i);
        clip.f1 = featurize(scene, cam, params.feature_dim);
        clip.fg = featurize(final_scene, cam, params.feature_dim);
        for (const Pose6& p : world_poses) clip.poses.push_back(world_to_camera(p, cam));
        clip.meta.set("scene_id", static_cast<long long>(i));
        clip.meta.set("task", task_name(task));
        ds.clips.push_back(std::move(clip));

        if (params.val_stride > 0 && i % params.val_stride == params.val_stride - 1)
            ds.val_idx.push_back(i);
        else
            ds.train_idx.push_back(i);
    }
    ds.manifest.set("format", std::string("hclp"));
    ds.manifest.set("version", 1LL);
    ds.manifest.set("clip_count", static_cast<long long>(params.n_clips));
    ds.manifest.set("feature_dim", static_cast<long long>(params.feature_dim));
    ds.manifest.set("action_space", std::string("pose6"));
    ds.manifest.set("horizon", static_cast<long long>(params.horizon));
    ds.manifest.set("seed", static_cast<long long>(params.seed));
    ds.manifest.set("val_stride", static_cast<long long>(params.val_stride));
    ds.manifest.set("train_count", static_cast<long long>(ds.train_idx.size()));
    ds.manifest.set("val_count", static_cast<long long>(ds.val_idx.size()));
    return ds;
}

Dataset subset_dataset(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("subset_dataset: fraction must be in (0, 1]");
    if (fraction == 1.0) return ds;
    std::vector<int> train = ds.train_idx;
    Rng rng(Rng::derive(seed, 0x5b5e7));
    for (size_t i = train.size(); i > 1; --i)
        std::swap(train[i - 1], train[rng.uniform_index(i)]);
    const size_t keep = static_cast<size_t>(std::llround(fraction * train.size()));
    if (keep == 0) throw std::invalid_argument("subset_dataset: empty subset");
    train.resize(keep);
    std::sort(train.begin(), train.end());

    Dataset out;
    out.manifest = ds.manifest;
    std::vector<int> remap(ds.clips.size(), -1);
    auto copy_clip = [&](int idx) {
        remap[idx] = static_cast<int>(out.clips.size());
        out.clips.push_back(ds.clips[idx]);
        return remap[idx];
    };
    for (int idx : train) out.train_idx.push_back(copy_clip(idx));
    for (int idx : ds.val_idx) out.val_idx.push_back(copy_clip(idx));
    out.manifest.set("clip_count", static_cast<long long>(out.clips.size()));
    out.manifest.set("train_count", static_cast<long long>(out.train_idx.size()));
    out.manifest.set("val_count", static_cast<long long>(out.val_idx.size()));
    out.manifest.set("subset_fraction", fraction);
    return out;
}

namespace {
constexpr char kClipMagic[4] = {'H', 'C', 'L', 'P'};
constexpr std::uint32_t kClipVersion = 1;
}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_dataset: cannot write " + path);
    f.write(kClipMagic, 4);
    write_u32(f, kClipVersion);
    const auto offset_pos = f.tellp();
    write_u64(f, 0);  // manifest offset, patched below
    for (const Clip& c : ds.clips) {
        write_u64(f, c.id);
        write_u32(f, static_cast<std::uint32_t>(c.f1.size()));
        f.write(reinterpret_cast<const char*>(c.f1.data()),
                static_cast<std::streamsize>(c.f1.size() * sizeof(double)));
        f.put(c.fg.empty() ? 0 : 1);
        if (!c.fg.empty())
            f.write(reinterpret_cast<const char*>(c.fg.data()),
                    static_cast<std::streamsize>(c.fg.size() * sizeof(double)));
        write_u32(f, static_cast<std::uint32_t>(c.poses.size()));
        for (const Pose6& p : c.poses) {
            double buf[6] = {p.position.x(), p.position.y(), p.position.z(),
                             p.euler.x(), p.euler.y(), p.euler.z()};
            f.write(reinterpret_cast<const char*>(buf), sizeof(buf));
        }
        write_string(f, c.meta.serialize());
    }
    const std::uint64_t manifest_offset = static_cast<std::uint64_t>(f.tellp());
    KvMap manifest = ds.manifest;
    std::string train_s, val_s;
    for (int i : ds.train_idx) train_s += (train_s.empty() ? "" : ",") + std::to_string(i);
    for (int i : ds.val_idx) val_s += (val_s.empty() ? "" : ",") + std::to_string(i);
    manifest.set("train_split", train_s);
    manifest.set("val_split", val_s);
    const std::string mtext = manifest.serialize();
    write_u32(f, static_cast<std::uint32_t>(mtext.size()));
    f.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    f.seekp(offset_pos);
    write_u64(f, manifest_offset);
    if (!f) throw std::runtime_error("save_dataset: write failure on " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != std::string(kClipMagic, 4))
        throw std::runtime_error("load_dataset: bad magic in " + path);
    const std::uint32_t version = read_u32(f);
    if (version != kClipVersion)
        throw std::runtime_error("load_dataset: unsupported version " + std::to_string(version));
    const std::uint64_t manifest_offset = read_u64(f);

    Dataset ds;
    f.seekg(static_cast<std::streamoff>(manifest_offset));
    {
        const std::uint32_t mlen = read_u32(f);
        std::string mtext(mlen, '\0');
        f.read(mtext.data(), mlen);
        if (!f) throw std::runtime_error("load_dataset: truncated manifest");
        ds.manifest = KvMap::parse(mtext);
    }
    const int n = static_cast<int>(ds.manifest.get_int("clip_count"));
    const int fd = static_cast<int>(ds.manifest.get_int("feature_dim"));
    f.seekg(16);  // past header
    for (int i = 0; i < n; ++i) {
        Clip c;
        c.id = read_u64(f);
        const std::uint32_t flen = read_u32(f);
        if (static_cast<int>(flen) != fd)
            throw std::runtime_error("load_dataset: feature_dim mismatch in clip " +
                                     std::to_string(i));
        c.f1.resize(flen);
        f.read(reinterpret_cast<char*>(c.f1.data()),
               static_cast<std::streamsize>(flen * sizeof(double)));
        const int has_fg = f.get();
        if (has_fg) {
            c.fg.resize(flen);
            f.read(reinterpret_cast<char*>(c.fg.data()),
                   static_cast<std::streamsize>(flen * sizeof(double)));
        }
        const std::uint32_t np = read_u32(f);
        for (std::uint32_t k = 0; k < np; ++k) {
            double buf[6];
            f.read(reinterpret_cast<char*>(buf), sizeof(buf));
            Pose6 p;
            p.position = {buf[0], buf[1], buf[2]};
            p.euler = {buf[3], buf[4], buf[5]};
            c.poses.push_back(p);
        }
        c.meta = KvMap::parse(read_string(f));
        if (!f) throw std::runtime_error("load_dataset: truncated clip " + std::to_string(i));
        ds.clips.push_back(std::move(c));
    }
    auto parse_split = [&ds](const std::string& s, std::vector<int>& out) {
        std::istringstream is(s);
        std::string tok;
        while (std::getline(is, tok, ',')) out.push_back(std::stoi(tok));
    };
    parse_split(ds.manifest.get("train_split"), ds.train_idx);
    parse_split(ds.manifest.get("val_split"), ds.val_idx);
    // the split lists live in the manifest only on disk
    ds.manifest.erase("train_split");
    ds.manifest.erase("val_split");
    return ds;
}

bool verify_clip(const Clip& clip, double tol) {
    if (clip.poses.empty()) return false;
    for (size_t t = 1; t < clip.poses.size(); ++t) {
        const Pose6 back =
            pose_apply(clip.poses[t - 1], pose_diff(clip.poses[t], clip.poses[t - 1]));
        if ((back.position - clip.poses[t].position).norm() > tol) return false;
        if ((back.rotation() - clip.poses[t].rotation()).norm() > tol) return false;
    }
    return true;
}

}  // namespace htp
