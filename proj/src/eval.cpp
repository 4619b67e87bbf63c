#include "htp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace htp {

namespace {

// Per-suite rng stream tags; each trial's generator is derived from
// (seed, suite, row, trial), so trials are independent and order-free.
constexpr std::uint64_t kStreamUncond = 0x5e11;
constexpr std::uint64_t kStreamGoal = 0x5e12;
constexpr std::uint64_t kStreamDisamb = 0x5e13;
constexpr std::uint64_t kStreamDoor = 0x5e14;

Rng trial_rng(std::uint64_t seed, std::uint64_t suite, std::uint64_t row, std::uint64_t trial) {
    return Rng(Rng::derive(Rng::derive(Rng::derive(seed, suite), row), trial), 0);
}

Pose6 ready_ee_pose() { return forward_kinematics(ArmState::ready()); }

// Runs fn(0..n-1); with jobs > 1 the indices are strided across threads.
// Results must be written to per-index slots; aggregation stays a fold in
// index order at the call site.
template <typename Fn>
void for_each_index(int n, int jobs, Fn&& fn) {
    const int nw = std::max(1, std::min(jobs, n));
    if (nw == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errs(nw);
    std::vector<std::thread> workers;
    for (int w = 0; w < nw; ++w)
        workers.emplace_back([&, w] {
            try {
                for (int i = w; i < n; i += nw) fn(i);
            } catch (...) {
                errs[w] = std::current_exception();
            }
        });
    for (auto& t : workers) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

SceneSpec scene_with_object(const Rng& base, const std::string& object) {
    for (std::uint64_t attempt = 0; attempt < 500; ++attempt) {
        Rng r = base.fork(attempt);
        SceneSpec s = generate_scene(r);
        if (scene_has_object(s, object) && !object_tasks(s, object).empty()) return s;
    }
    throw std::runtime_error("scene_with_object: no scene with " + object + " in 500 draws");
}

SceneSpec scene_with_task(const Rng& base, TaskId task) {
    for (std::uint64_t attempt = 0; attempt < 500; ++attempt) {
        Rng r = base.fork(attempt);
        SceneSpec s = generate_scene(r);
        if (task_feasible(s, task)) return s;
    }
    throw std::runtime_error("scene_with_task: no scene offering " + task_name(task) +
                             " in 500 draws");
}

std::string archive_trace(const std::string& trace_dir, const std::string& stem,
                          const RolloutTrace& trace) {
    if (trace_dir.empty()) return stem;
    std::filesystem::create_directories(trace_dir);
    std::ofstream os(trace_dir + "/" + stem + ".txt", std::ios::binary);
    os << trace.to_text();
    if (!os) throw std::runtime_error("archive_trace: cannot write " + trace_dir + "/" + stem);
    return stem;
}

SceneSpec final_scene(const SceneSpec& start, const RolloutTrace& trace) {
    return trace.scene_states.empty() ? start : trace.scene_states.back();
}

}  // namespace

// --- policies ---

ModelPolicy::ModelPolicy(const Checkpoint& ckpt, CameraModel cam)
    : model_(Model64::from_checkpoint(ckpt)), cam_(cam) {}

std::vector<Pose6> ModelPolicy::plan(const SceneSpec& scene, const SceneSpec* goal_scene,
                                     const std::vector<double>& f1,
                                     const std::vector<double>* fg, TaskId hint, Rng& rng) {
    (void)scene;
    (void)goal_scene;
    (void)hint;
    const Pose6 start = ready_ee_pose();
    const Pose6 start_cam = world_to_camera(start, cam_);
    const std::vector<double>* goal_feature = model_.config().goal_conditioned ? fg : nullptr;
    std::vector<Pose6> cam_poses = model_.sample_trajectory(f1, goal_feature, start_cam, rng);
    std::vector<Pose6> out;
    out.reserve(cam_poses.size() + 1);
    out.push_back(start);
    for (const Pose6& p : cam_poses) out.push_back(camera_to_world(p, cam_));
    return out;
}

std::vector<Pose6> OraclePolicy::plan(const SceneSpec& scene, const SceneSpec* goal_scene,
                                      const std::vector<double>& f1,
                                      const std::vector<double>* fg, TaskId hint, Rng& rng) {
    (void)goal_scene;
    (void)f1;
    (void)fg;
    return oracle_trajectory(scene, hint, rng, horizon_);
}

std::vector<Pose6> StayPolicy::plan(const SceneSpec& scene, const SceneSpec* goal_scene,
                                    const std::vector<double>& f1, const std::vector<double>* fg,
                                    TaskId hint, Rng& rng) {
    (void)scene;
    (void)goal_scene;
    (void)f1;
    (void)fg;
    (void)hint;
    (void)rng;
    return std::vector<Pose6>(static_cast<size_t>(horizon_) + 1, ready_ee_pose());
}

std::vector<Pose6> DominantFlowPolicy::plan(const SceneSpec& scene, const SceneSpec* goal_scene,
                                            const std::vector<double>& f1,
                                            const std::vector<double>* fg, TaskId hint, Rng& rng) {
    (void)f1;
    (void)fg;
    (void)hint;
    (void)rng;
    if (!goal_scene)
        throw std::invalid_argument("DominantFlowPolicy: goal scene required");
    return baseline_dominant_flow(scene, *goal_scene, horizon_);
}

std::vector<Pose6> baseline_dominant_flow(const SceneSpec& initial, const SceneSpec& goal,
                                          int horizon) {
    if (horizon < 1) throw std::invalid_argument("baseline_dominant_flow: horizon must be >= 1");
    // Displacement field: how far each object's handle region moved between
    // the two states. The baseline follows only the dominant displacement.
    auto present = [&](TaskId t) {
        switch (t) {
            case TaskId::OpenTopDrawer:
            case TaskId::OpenBottomDrawer:
                return static_cast<bool>(initial.drawer);
            case TaskId::OpenDoor:
                return static_cast<bool>(initial.door);
            case TaskId::OpenToaster:
                return static_cast<bool>(initial.toaster);
            case TaskId::MoveBowl:
                return static_cast<bool>(initial.bowl);
            case TaskId::MoveVeggies:
                return static_cast<bool>(initial.veggies);
            default:
                return false;  // open/close pairs share a handle; one probe each
        }
    };
    Eigen::Vector3d best_start = Eigen::Vector3d::Zero(), best_disp = Eigen::Vector3d::Zero();
    for (int t = 0; t < kNumTasks; ++t) {
        const TaskId task = static_cast<TaskId>(t);
        if (!present(task)) continue;
        const Eigen::Vector3d from = handle_point(initial, task);
        const Eigen::Vector3d disp = handle_point(goal, task) - from;
        if (disp.norm() > best_disp.norm()) {
            best_start = from;
            best_disp = disp;
        }
    }
    const Pose6 ready = ready_ee_pose();
    std::vector<Pose6> out;
    out.reserve(static_cast<size_t>(horizon) + 1);
    if (best_disp.norm() < 1e-9) {  // no state change: zero motion
        out.assign(static_cast<size_t>(horizon) + 1, ready);
        return out;
    }
    for (int k = 0; k <= horizon; ++k) {
        Pose6 p = ready;  // keep the ready tool orientation throughout
        p.position = best_start + best_disp * (static_cast<double>(k) / horizon);
        out.push_back(p);
    }
    return out;
}

// --- trial bookkeeping ---

std::string failure_name(FailureKind kind) {
    switch (kind) {
        case FailureKind::None:
            return "none";
        case FailureKind::NoContact:
            return "no-contact";
        case FailureKind::StuckInfeasible:
            return "stuck-infeasible";
        case FailureKind::WrongGoal:
            return "wrong-goal";
    }
    throw std::invalid_argument("failure_name: bad kind");
}

namespace {

FailureKind failure_from_name(const std::string& name) {
    for (FailureKind k : {FailureKind::None, FailureKind::NoContact, FailureKind::StuckInfeasible,
                          FailureKind::WrongGoal})
        if (failure_name(k) == name) return k;
    throw std::invalid_argument("failure_from_name: bad name " + name);
}

}  // namespace

void TrialReport::add(const TrialResult& r) {
    ++trials;
    if (r.success) {
        ++successes;
    } else {
        switch (r.failure) {
            case FailureKind::NoContact:
                ++no_contact;
                break;
            case FailureKind::StuckInfeasible:
                ++stuck_infeasible;
                break;
            case FailureKind::WrongGoal:
                ++wrong_goal;
                break;
            case FailureKind::None:
                throw std::invalid_argument("TrialReport::add: failed trial lacks a failure kind");
        }
    }
    results.push_back(r);
}

std::vector<std::string> eval_objects() {
    return {"drawers", "door", "toaster", "bowl", "veggies"};
}

bool scene_has_object(const SceneSpec& scene, const std::string& object) {
    if (object == "drawers") return scene.drawer.has_value();
    if (object == "door") return scene.door.has_value();
    if (object == "toaster") return scene.toaster.has_value();
    if (object == "bowl") return scene.bowl.has_value();
    if (object == "veggies") return scene.veggies.has_value();
    throw std::invalid_argument("scene_has_object: unknown object " + object);
}

std::vector<TaskId> object_tasks(const SceneSpec& scene, const std::string& object) {
    std::vector<TaskId> candidates;
    if (object == "drawers")
        candidates = {TaskId::OpenTopDrawer, TaskId::CloseTopDrawer, TaskId::OpenBottomDrawer,
                      TaskId::CloseBottomDrawer};
    else if (object == "door")
        candidates = {TaskId::OpenDoor, TaskId::CloseDoor};
    else if (object == "toaster")
        candidates = {TaskId::OpenToaster, TaskId::CloseToaster};
    else if (object == "bowl")
        candidates = {TaskId::MoveBowl};
    else if (object == "veggies")
        candidates = {TaskId::MoveVeggies};
    else
        throw std::invalid_argument("object_tasks: unknown object " + object);
    std::vector<TaskId> out;
    for (TaskId t : candidates)
        if (task_feasible(scene, t)) out.push_back(t);
    return out;
}

std::string outcome_signature(const SceneSpec& before, const SceneSpec& after) {
    std::string sig;
    for (int t = 0; t < kNumTasks; ++t)
        if (success(before, after, static_cast<TaskId>(t))) {
            if (!sig.empty()) sig += "+";
            sig += task_name(static_cast<TaskId>(t));
        }
    return sig.empty() ? "none" : sig;
}

// --- suites ---

std::vector<TrialReport> run_unconditional(Policy& policy, const EvalParams& params) {
    if (params.n_trials < 1) throw std::invalid_argument("run_unconditional: n_trials must be >= 1");
    const CameraModel cam = default_camera();
    const std::vector<std::string> objects = eval_objects();
    std::vector<TrialReport> reports;
    for (size_t row = 0; row < objects.size(); ++row) {
        const std::string& object = objects[row];
        std::vector<TrialResult> results(params.n_trials);
        for_each_index(params.n_trials, params.jobs, [&](int i) {
            Rng rng = trial_rng(params.seed, kStreamUncond, row, static_cast<std::uint64_t>(i));
            const SceneSpec scene = scene_with_object(rng.fork(0), object);
            const std::vector<TaskId> tasks = object_tasks(scene, object);
            Rng pick = rng.fork(1);
            const TaskId hint = tasks[pick.uniform_index(tasks.size())];
            const std::vector<double> f1 = featurize(scene, cam);
            Rng plan_rng = rng.fork(2);
            const std::vector<Pose6> traj =
                policy.plan(scene, nullptr, f1, nullptr, hint, plan_rng);
            const RolloutTrace trace = execute_trajectory(scene, traj);
            const SceneSpec after = final_scene(scene, trace);

            TrialResult r;
            r.trial = i;
            for (TaskId t : tasks) r.success = r.success || success(scene, after, t);
            if (!r.success)
                r.failure = trace.any_contact() ? FailureKind::StuckInfeasible
                                                : FailureKind::NoContact;
            r.outcome = outcome_signature(scene, after);
            r.final_angle = after.door ? after.door->angle : 0.0;
            r.trace_id = archive_trace(params.trace_dir,
                                       "uncond_" + object + "_" + std::to_string(i), trace);
            results[static_cast<size_t>(i)] = r;
        });
        TrialReport rep;
        rep.name = object;
        for (const TrialResult& r : results) rep.add(r);
        reports.push_back(std::move(rep));
    }
    return reports;
}

std::vector<TrialReport> run_goal_conditioned(Policy& policy, const EvalParams& params) {
    if (params.n_trials < 1)
        throw std::invalid_argument("run_goal_conditioned: n_trials must be >= 1");
    const CameraModel cam = default_camera();
    std::vector<TrialReport> reports;
    StayPolicy stay;
    for (int row = 0; row <= kNumTasks; ++row) {
        const bool null_goal = row == kNumTasks;  // sanity row: goal == initial
        const TaskId task = static_cast<TaskId>(null_goal ? 0 : row);
        std::vector<TrialResult> results(params.n_trials);
        for_each_index(params.n_trials, params.jobs, [&](int i) {
            Rng rng = trial_rng(params.seed, kStreamGoal, static_cast<std::uint64_t>(row),
                                static_cast<std::uint64_t>(i));
            SceneSpec scene;
            if (null_goal) {
                Rng scene_rng = rng.fork(0);
                scene = generate_scene(scene_rng);
            } else {
                scene = scene_with_task(rng.fork(0), task);
            }
            SceneSpec goal = scene;
            if (!null_goal) {
                Rng demo_rng = rng.fork(1);
                goal = replay_poses(scene, oracle_trajectory(scene, task, demo_rng));
            }
            const std::vector<double> f1 = featurize(scene, cam);
            const std::vector<double> fg = featurize(goal, cam);
            // The plan stream equals the demonstration stream: a scripted
            // policy re-derives the exact demonstration that built the goal.
            Rng plan_rng = rng.fork(1);
            Policy& p = null_goal ? static_cast<Policy&>(stay) : policy;
            const std::vector<Pose6> traj = p.plan(scene, &goal, f1, &fg, task, plan_rng);
            const RolloutTrace trace = execute_trajectory(scene, traj);
            const SceneSpec after = final_scene(scene, trace);

            TrialResult r;
            r.trial = i;
            r.success = goal_reached(after, goal);
            if (!r.success) {
                if (!trace.any_contact())
                    r.failure = FailureKind::NoContact;
                else if (outcome_signature(scene, after) != "none")
                    r.failure = FailureKind::WrongGoal;  // changed the world, missed the goal
                else
                    r.failure = FailureKind::StuckInfeasible;
            }
            r.outcome = outcome_signature(scene, after);
            r.final_angle = after.door ? after.door->angle : 0.0;
            const std::string stem =
                (null_goal ? std::string("goal_null_goal_") : "goal_" + task_name(task) + "_") +
                std::to_string(i);
            r.trace_id = archive_trace(params.trace_dir, stem, trace);
            results[static_cast<size_t>(i)] = r;
        });
        TrialReport rep;
        rep.name = null_goal ? "null_goal" : task_name(task);
        for (const TrialResult& r : results) rep.add(r);
        reports.push_back(std::move(rep));
    }
    return reports;
}

// --- studies ---

SceneSpec disambiguation_scene() {
    DrawerStack d;
    d.base = Eigen::Vector3d(0.50, 0.0, 0.0);
    d.axis = Eigen::Vector3d(-1.0, 0.0, 0.0);
    d.opening_top = 0.0;             // top drawer closed
    d.opening_bottom = 0.5 * d.range;  // bottom drawer half open
    SceneSpec s;
    s.drawer = d;
    return s;
}

namespace {

// Which drawer outcome a rollout reached, by the largest sufficient state
// change; -1 when no drawer moved enough. At most one outcome per trial.
int classify_disambiguation(const SceneSpec& before, const SceneSpec& after) {
    const double range = before.drawer->range;
    const double d_top = after.drawer->opening_top - before.drawer->opening_top;
    const double d_bot = after.drawer->opening_bottom - before.drawer->opening_bottom;
    struct Cand {
        int idx;
        double magnitude;
    };
    std::vector<Cand> cands;
    if (d_top >= 0.30 * range) cands.push_back({0, d_top});
    if (d_bot >= 0.30 * range) cands.push_back({1, d_bot});
    if (-d_bot >= 0.30 * range) cands.push_back({2, -d_bot});
    if (cands.empty()) return -1;
    return std::max_element(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
               return a.magnitude < b.magnitude;
           })->idx;
}

}  // namespace

std::vector<DisambiguationRow> drawer_disambiguation(Policy& unconditional, Policy& goal_directed,
                                                     int n_trials, std::uint64_t seed) {
    if (n_trials < 1) throw std::invalid_argument("drawer_disambiguation: n_trials must be >= 1");
    const CameraModel cam = default_camera();
    const SceneSpec scene = disambiguation_scene();
    const std::vector<double> f1 = featurize(scene, cam);
    const std::vector<TaskId> goals = {TaskId::OpenTopDrawer, TaskId::OpenBottomDrawer,
                                       TaskId::CloseBottomDrawer};
    std::vector<DisambiguationRow> rows;
    for (std::uint64_t row = 0; row < 1 + goals.size(); ++row) {
        const bool uncond = row == 0;
        DisambiguationRow out;
        out.trials = n_trials;
        SceneSpec goal = scene;
        TaskId hint = TaskId::OpenTopDrawer;
        if (uncond) {
            out.condition = "unconditional";
        } else {
            hint = goals[row - 1];
            out.condition = task_name(hint);
            auto& d = *goal.drawer;
            if (hint == TaskId::OpenTopDrawer) d.opening_top = d.range;
            if (hint == TaskId::OpenBottomDrawer) d.opening_bottom = d.range;
            if (hint == TaskId::CloseBottomDrawer) d.opening_bottom = 0.0;
        }
        const std::vector<double> fg = featurize(goal, cam);
        for (int i = 0; i < n_trials; ++i) {
            Rng rng = trial_rng(seed, kStreamDisamb, row, static_cast<std::uint64_t>(i));
            TaskId trial_hint = hint;
            if (uncond) {
                const std::vector<TaskId> feasible = object_tasks(scene, "drawers");
                Rng pick = rng.fork(1);
                trial_hint = feasible[pick.uniform_index(feasible.size())];
            }
            Rng plan_rng = rng.fork(2);
            Policy& p = uncond ? unconditional : goal_directed;
            const std::vector<Pose6> traj =
                p.plan(scene, uncond ? nullptr : &goal, f1, uncond ? nullptr : &fg, trial_hint,
                       plan_rng);
            const SceneSpec after = final_scene(scene, execute_trajectory(scene, traj));
            switch (classify_disambiguation(scene, after)) {
                case 0:
                    ++out.top_open;
                    break;
                case 1:
                    ++out.bottom_open;
                    break;
                case 2:
                    ++out.bottom_close;
                    break;
                default:
                    break;
            }
        }
        rows.push_back(out);
    }
    return rows;
}

AngleHistogram door_angle_histogram(Policy& policy, int n_trials, int bins, std::uint64_t seed) {
    if (n_trials < 1 || bins < 1)
        throw std::invalid_argument("door_angle_histogram: n_trials and bins must be >= 1");
    const CameraModel cam = default_camera();
    AngleHistogram h;
    h.counts.assign(static_cast<size_t>(bins), 0);
    for (int i = 0; i < n_trials; ++i) {
        Rng rng = trial_rng(seed, kStreamDoor, 0, static_cast<std::uint64_t>(i));
        SceneSpec scene = scene_with_object(rng.fork(0), "door");
        scene.door->angle = 0.0;  // start from a closed door
        const std::vector<double> f1 = featurize(scene, cam);
        Rng plan_rng = rng.fork(2);
        const std::vector<Pose6> traj =
            policy.plan(scene, nullptr, f1, nullptr, TaskId::OpenDoor, plan_rng);
        const SceneSpec after = final_scene(scene, execute_trajectory(scene, traj));
        const double deg = after.door->angle * 180.0 / M_PI;
        h.angles_deg.push_back(deg);
        const double frac = (deg - h.lo_deg) / (h.hi_deg - h.lo_deg);
        const int bin = std::clamp(static_cast<int>(frac * bins), 0, bins - 1);
        ++h.counts[static_cast<size_t>(bin)];
    }
    return h;
}

// --- reporting ---

namespace {

std::string pad(const std::string& s, size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string rate_percent(int successes, int trials) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%5.1f%%", trials > 0 ? 100.0 * successes / trials : 0.0);
    return buf;
}

void emit_trial_table(std::string& out, const std::string& title,
                      const std::vector<TrialReport>& rows) {
    out += "== " + title + " ==\n";
    size_t name_w = 4;
    for (const TrialReport& r : rows) name_w = std::max(name_w, r.name.size());
    out += pad("row", name_w) + "  success  trials    rate  no-contact  stuck-infeasible  wrong-goal\n";
    for (const TrialReport& r : rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "  %7d  %6d  %s  %10d  %16d  %10d\n", r.successes,
                      r.trials, rate_percent(r.successes, r.trials).c_str(), r.no_contact,
                      r.stuck_infeasible, r.wrong_goal);
        out += pad(r.name, name_w) + buf;
    }
    out += "\n";
}

}  // namespace

std::string report_text(const EvalReport& report) {
    std::string out;
    emit_trial_table(out, "Unconditional manipulation (per object)", report.unconditional);
    emit_trial_table(out, "Goal-conditioned manipulation (per goal category)",
                     report.goal_conditioned);
    if (!report.disambiguation.empty()) {
        out += "== Drawer disambiguation (final configuration counts) ==\n";
        size_t name_w = 13;
        for (const DisambiguationRow& r : report.disambiguation)
            name_w = std::max(name_w, r.condition.size());
        out += pad("condition", name_w) + "  trials  top-open  bottom-open  bottom-close\n";
        for (const DisambiguationRow& r : report.disambiguation) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "  %6d  %8d  %11d  %12d\n", r.trials, r.top_open,
                          r.bottom_open, r.bottom_close);
            out += pad(r.condition, name_w) + buf;
        }
        out += "\n";
    }
    if (!report.door_histogram.counts.empty()) {
        const AngleHistogram& h = report.door_histogram;
        out += "== Final door angle distribution ==\n";
        const double width = (h.hi_deg - h.lo_deg) / static_cast<double>(h.counts.size());
        for (size_t b = 0; b < h.counts.size(); ++b) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "[%5.1f, %5.1f) deg  %3d  %s\n", h.lo_deg + b * width,
                          h.lo_deg + (b + 1) * width, h.counts[b],
                          std::string(static_cast<size_t>(h.counts[b]), '#').c_str());
            out += buf;
        }
        out += "\n";
    }
    return out;
}

std::string report_csv(const EvalReport& report) {
    // Long format: one metric per line, grouped by suite and row.
    std::string out = "suite,row,metric,value\n";
    auto emit_rows = [&out](const std::string& suite, const std::vector<TrialReport>& rows) {
        for (const TrialReport& r : rows) {
            out += suite + "," + r.name + ",trials," + std::to_string(r.trials) + "\n";
            out += suite + "," + r.name + ",successes," + std::to_string(r.successes) + "\n";
            out += suite + "," + r.name + ",no_contact," + std::to_string(r.no_contact) + "\n";
            out += suite + "," + r.name + ",stuck_infeasible," +
                   std::to_string(r.stuck_infeasible) + "\n";
            out += suite + "," + r.name + ",wrong_goal," + std::to_string(r.wrong_goal) + "\n";
        }
    };
    emit_rows("unconditional", report.unconditional);
    emit_rows("goal_conditioned", report.goal_conditioned);
    for (const DisambiguationRow& r : report.disambiguation) {
        out += "disambiguation," + r.condition + ",trials," + std::to_string(r.trials) + "\n";
        out += "disambiguation," + r.condition + ",top_open," + std::to_string(r.top_open) + "\n";
        out +=
            "disambiguation," + r.condition + ",bottom_open," + std::to_string(r.bottom_open) + "\n";
        out += "disambiguation," + r.condition + ",bottom_close," +
               std::to_string(r.bottom_close) + "\n";
    }
    const AngleHistogram& h = report.door_histogram;
    for (size_t b = 0; b < h.counts.size(); ++b)
        out += "door_histogram,bin" + std::to_string(b) + ",count," + std::to_string(h.counts[b]) +
               "\n";
    return out;
}

namespace {

void save_trial_rows(KvMap& kv, const std::string& prefix,
                     const std::vector<TrialReport>& rows) {
    kv.set(prefix + ".count", static_cast<long long>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        const std::string p = prefix + "." + std::to_string(r);
        const TrialReport& row = rows[r];
        kv.set(p + ".name", row.name);
        kv.set(p + ".trials", static_cast<long long>(row.trials));
        kv.set(p + ".successes", static_cast<long long>(row.successes));
        kv.set(p + ".no_contact", static_cast<long long>(row.no_contact));
        kv.set(p + ".stuck_infeasible", static_cast<long long>(row.stuck_infeasible));
        kv.set(p + ".wrong_goal", static_cast<long long>(row.wrong_goal));
        kv.set(p + ".n_results", static_cast<long long>(row.results.size()));
        for (size_t i = 0; i < row.results.size(); ++i) {
            const std::string q = p + ".t" + std::to_string(i);
            const TrialResult& t = row.results[i];
            kv.set(q + ".trial", static_cast<long long>(t.trial));
            kv.set(q + ".success", static_cast<long long>(t.success ? 1 : 0));
            kv.set(q + ".failure", failure_name(t.failure));
            kv.set(q + ".outcome", t.outcome);
            kv.set(q + ".final_angle", t.final_angle);
            kv.set(q + ".trace", t.trace_id);
        }
    }
}

std::vector<TrialReport> load_trial_rows(const KvMap& kv, const std::string& prefix) {
    std::vector<TrialReport> rows;
    const long long n = kv.get_int(prefix + ".count");
    for (long long r = 0; r < n; ++r) {
        const std::string p = prefix + "." + std::to_string(r);
        TrialReport row;
        row.name = kv.get(p + ".name");
        const long long nt = kv.get_int(p + ".n_results");
        for (long long i = 0; i < nt; ++i) {
            const std::string q = p + ".t" + std::to_string(i);
            TrialResult t;
            t.trial = static_cast<int>(kv.get_int(q + ".trial"));
            t.success = kv.get_int(q + ".success") != 0;
            t.failure = failure_from_name(kv.get(q + ".failure"));
            t.outcome = kv.get(q + ".outcome");
            t.final_angle = kv.get_double(q + ".final_angle");
            t.trace_id = kv.get(q + ".trace");
            row.add(t);
        }
        if (row.trials != kv.get_int(p + ".trials") ||
            row.successes != kv.get_int(p + ".successes") ||
            row.no_contact != kv.get_int(p + ".no_contact") ||
            row.stuck_infeasible != kv.get_int(p + ".stuck_infeasible") ||
            row.wrong_goal != kv.get_int(p + ".wrong_goal"))
            throw std::runtime_error("load_report: row counters do not reconcile with trials for " +
                                     row.name);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

void save_report(const EvalReport& report, const std::string& path) {
    KvMap kv;
    kv.set("format", std::string("htp-report"));
    kv.set("version", 1LL);
    for (const auto& [k, v] : report.meta.entries()) kv.set("meta." + k, v);
    kv.set("meta_count", static_cast<long long>(report.meta.entries().size()));
    save_trial_rows(kv, "uncond", report.unconditional);
    save_trial_rows(kv, "goal", report.goal_conditioned);
    kv.set("disamb.count", static_cast<long long>(report.disambiguation.size()));
    for (size_t r = 0; r < report.disambiguation.size(); ++r) {
        const std::string p = "disamb." + std::to_string(r);
        const DisambiguationRow& row = report.disambiguation[r];
        kv.set(p + ".condition", row.condition);
        kv.set(p + ".trials", static_cast<long long>(row.trials));
        kv.set(p + ".top_open", static_cast<long long>(row.top_open));
        kv.set(p + ".bottom_open", static_cast<long long>(row.bottom_open));
        kv.set(p + ".bottom_close", static_cast<long long>(row.bottom_close));
    }
    const AngleHistogram& h = report.door_histogram;
    kv.set("hist.lo_deg", h.lo_deg);
    kv.set("hist.hi_deg", h.hi_deg);
    kv.set("hist.bins", static_cast<long long>(h.counts.size()));
    for (size_t b = 0; b < h.counts.size(); ++b)
        kv.set("hist.count." + std::to_string(b), static_cast<long long>(h.counts[b]));
    kv.set("hist.n_angles", static_cast<long long>(h.angles_deg.size()));
    for (size_t i = 0; i < h.angles_deg.size(); ++i)
        kv.set("hist.angle." + std::to_string(i), h.angles_deg[i]);
    kv.save(path);
}

EvalReport load_report(const std::string& path) {
    const KvMap kv = KvMap::load(path);
    if (kv.get_or("format", "") != "htp-report")
        throw std::runtime_error("load_report: not a report file: " + path);
    EvalReport report;
    for (const auto& [k, v] : kv.entries())
        if (k.rfind("meta.", 0) == 0) report.meta.set(k.substr(5), v);
    report.unconditional = load_trial_rows(kv, "uncond");
    report.goal_conditioned = load_trial_rows(kv, "goal");
    const long long nd = kv.get_int("disamb.count");
    for (long long r = 0; r < nd; ++r) {
        const std::string p = "disamb." + std::to_string(r);
        DisambiguationRow row;
        row.condition = kv.get(p + ".condition");
        row.trials = static_cast<int>(kv.get_int(p + ".trials"));
        row.top_open = static_cast<int>(kv.get_int(p + ".top_open"));
        row.bottom_open = static_cast<int>(kv.get_int(p + ".bottom_open"));
        row.bottom_close = static_cast<int>(kv.get_int(p + ".bottom_close"));
        report.disambiguation.push_back(row);
    }
    AngleHistogram& h = report.door_histogram;
    h.lo_deg = kv.get_double("hist.lo_deg");
    h.hi_deg = kv.get_double("hist.hi_deg");
    const long long nb = kv.get_int("hist.bins");
    for (long long b = 0; b < nb; ++b)
        h.counts.push_back(static_cast<int>(kv.get_int("hist.count." + std::to_string(b))));
    const long long na = kv.get_int("hist.n_angles");
    for (long long i = 0; i < na; ++i)
        h.angles_deg.push_back(kv.get_double("hist.angle." + std::to_string(i)));
    return report;
}

}  // namespace htp
