#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "htp/rng.hpp"
#include "htp/sim.hpp"

using namespace htp;

namespace {

SceneSpec drawer_scene() {
    SceneSpec s;
    s.drawer = DrawerStack{};
    return s;
}

}  // namespace

TEST_CASE("fk home pose matches hand-computed chain product") {
    // all offsets stack along z at zero joint angles
    Pose6 home = forward_kinematics(ArmState::home());
    const double z = 0.28 + 0.06 + 0.30 + 0.05 + 0.30 + 0.05 + 0.08 + 0.14;
    CHECK((home.position - Eigen::Vector3d(0, 0, z)).norm() < 1e-12);
    CHECK((home.rotation() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
}

TEST_CASE("base joint rotates ee about world z") {
    ArmState a = ArmState::ready();
    Pose6 p0 = forward_kinematics(a);
    ArmState b = a;
    const double theta = 0.6;
    b.q[0] += theta;
    Pose6 p1 = forward_kinematics(b);
    Eigen::Vector3d rotated =
        Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitZ()) * p0.position;
    CHECK((p1.position - rotated).norm() < 1e-12);
}

TEST_CASE("fk is 2pi periodic per joint") {
    ArmState a = ArmState::ready();
    Pose6 p0 = forward_kinematics(a);
    for (int j = 0; j < 7; ++j) {
        ArmState b = a;
        b.q[j] += 2.0 * M_PI;
        Pose6 p1 = forward_kinematics(b);
        CHECK((p1.position - p0.position).norm() < 1e-9);
        CHECK((p1.rotation() - p0.rotation()).norm() < 1e-9);
    }
}

TEST_CASE("ik at current pose converges immediately") {
    ArmState a = ArmState::ready();
    IkResult r = ik_solve(forward_kinematics(a), a);
    CHECK(r.status == IkStatus::Converged);
    CHECK(r.iterations == 0);
}

TEST_CASE("ik reaches fk-generated targets within the workspace") {
    Rng rng(17);
    const ArmChain& chain = arm_chain();
    const Pose6 start = forward_kinematics(ArmState::ready());
    int attempted = 0, ok = 0;
    while (attempted < 1000) {
        ArmState goal;
        for (int j = 0; j < 7; ++j)
            goal.q[j] = rng.uniform(0.75 * chain.joints[j].lo, 0.75 * chain.joints[j].hi);
        const Pose6 target = forward_kinematics(goal);
        // restrict to a 0.7 m ball around the shoulder
        if ((target.position - Eigen::Vector3d(0, 0, 0.34)).norm() > 0.7) continue;
        ++attempted;
        IkResult r = ik_solve(target, ArmState::ready());
        if (r.status != IkStatus::Converged) continue;
        ++ok;
        const Pose6 reached = forward_kinematics(r.state);
        const double pos_tol =
            std::max(0.005, 0.10 * (target.position - start.position).norm());
        CHECK((reached.position - target.position).norm() <= pos_tol + 1e-9);
    }
    INFO("attempted ", attempted, " converged ", ok);
    CHECK(ok >= static_cast<int>(0.95 * attempted));
}

TEST_CASE("unreachable target reports stuck") {
    Pose6 far;
    far.position = {10, 0, 0};
    IkResult r = ik_solve(far, ArmState::ready());
    CHECK(r.status == IkStatus::Stuck);
}

TEST_CASE("scene untouched when ee is far away") {
    SceneSpec s = drawer_scene();
    Pose6 a, b;
    a.position = {0.1, 0.4, 0.5};
    b.position = {0.1, 0.45, 0.5};
    SceneSpec after = step_scene(s, a, b);
    CHECK(after.drawer->opening_top == 0.0);
    CHECK(after.drawer->opening_bottom == 0.0);
}

TEST_CASE("drawer opening advances by displacement projected on its axis") {
    SceneSpec s = drawer_scene();
    const Eigen::Vector3d handle =
        s.drawer->base + Eigen::Vector3d(0, 0, s.drawer->handle_z_bottom);
    Pose6 from, to;
    from.position = handle;
    to.position = handle + 0.05 * s.drawer->axis;
    std::vector<std::string> contacts;
    SceneSpec after = step_scene(s, from, to, &contacts);
    CHECK(after.drawer->opening_bottom == doctest::Approx(0.05));
    CHECK(after.drawer->opening_top == 0.0);
    CHECK(contacts == std::vector<std::string>{"drawer_bottom"});

    // clamped at range
    SceneSpec s2 = drawer_scene();
    s2.drawer->opening_bottom = 0.18;
    const Eigen::Vector3d h2 = s2.drawer->base + 0.18 * s2.drawer->axis +
                               Eigen::Vector3d(0, 0, s2.drawer->handle_z_bottom);
    Pose6 f2, t2;
    f2.position = h2;
    t2.position = h2 + 0.08 * s2.drawer->axis;
    SceneSpec a2 = step_scene(s2, f2, t2);
    CHECK(a2.drawer->opening_bottom == doctest::Approx(s2.drawer->range));
}

TEST_CASE("door angle advances by arc length over radius") {
    SceneSpec s;
    s.door = Door{};
    const Eigen::Vector3d edge =
        s.door->anchor + s.door->closed_dir * s.door->panel_width + Eigen::Vector3d(0, 0, 0.15);
    const Eigen::Vector3d tangent = Eigen::Vector3d::UnitZ().cross(s.door->closed_dir);
    Pose6 from, to;
    from.position = edge;
    const double arc = 0.06;
    to.position = edge + arc * tangent;
    SceneSpec after = step_scene(s, from, to);
    CHECK(after.door->angle == doctest::Approx(arc / s.door->panel_width).epsilon(1e-9));
}

TEST_CASE("bowl push and topple rule") {
    SceneSpec s;
    s.bowl = Bowl{};
    Pose6 from, to;
    from.position = s.bowl->position + Eigen::Vector3d(-s.bowl->radius, 0, 0.03);
    to.position = from.position + Eigen::Vector3d(0.06, 0, 0);
    SceneSpec after = step_scene(s, from, to);
    CHECK(after.bowl->position.x() == doctest::Approx(s.bowl->position.x() + 0.06));
    CHECK(after.bowl->upright);

    // contact above 80% of rim height topples
    Pose6 hi_from = from, hi_to = to;
    hi_from.position.z() = hi_to.position.z() = 0.9 * s.bowl->rim_height;
    SceneSpec toppled = step_scene(s, hi_from, hi_to);
    CHECK_FALSE(toppled.bowl->upright);
}

TEST_CASE("success predicates") {
    SceneSpec before = drawer_scene();
    CHECK_FALSE(success(before, before, TaskId::OpenTopDrawer));

    SceneSpec opened = before;
    opened.drawer->opening_top = before.drawer->range;
    CHECK(success(before, opened, TaskId::OpenTopDrawer));
    CHECK_FALSE(success(before, opened, TaskId::OpenBottomDrawer));
    CHECK(success(opened, before, TaskId::CloseTopDrawer));

    SceneSpec b1, b2;
    b1.bowl = Bowl{};
    b2 = b1;
    b2.bowl->position.x() += 0.06;
    CHECK(success(b1, b2, TaskId::MoveBowl));
    b2.bowl->upright = false;
    CHECK_FALSE(success(b1, b2, TaskId::MoveBowl));  // moved but toppled

    SceneSpec mismatched;
    mismatched.door = Door{};
    CHECK_THROWS(success(before, mismatched, TaskId::OpenTopDrawer));
}

TEST_CASE("goal_reached tolerances") {
    SceneSpec g = drawer_scene();
    g.drawer->opening_top = 0.15;
    CHECK(goal_reached(g, g));

    SceneSpec wrong = g;
    wrong.drawer->opening_top = 0.0;
    wrong.drawer->opening_bottom = 0.15;  // opened the wrong drawer
    CHECK_FALSE(goal_reached(wrong, g));

    SceneSpec boundary = g;
    boundary.drawer->opening_top = 0.15 - 0.20 * g.drawer->range;  // exactly at tolerance
    CHECK(goal_reached(boundary, g));
}

TEST_CASE("execute_trajectory bookkeeping and empty motion") {
    SceneSpec s = drawer_scene();
    const Pose6 start = forward_kinematics(ArmState::ready());
    std::vector<Pose6> still(4, start);
    RolloutTrace trace = execute_trajectory(s, still);
    CHECK(trace.commanded.size() == 4);
    CHECK(trace.achieved.size() == 4);
    CHECK(trace.ik_converged.size() == 4);
    CHECK(trace.scene_states.size() == 4);
    CHECK(trace.scene_states.back().drawer->opening_top == 0.0);
    CHECK_THROWS(execute_trajectory(s, {}));
}

TEST_CASE("scene kv round trip") {
    SceneSpec s;
    s.drawer = DrawerStack{};
    s.drawer->opening_top = 0.07;
    s.bowl = Bowl{};
    s.bowl->position = {0.44, 0.21, 0};
    s.veggies = VeggieBoard{};
    s.veggies->pieces = {{0.5, -0.2, 0.015}, {0.53, -0.18, 0.015}};
    SceneSpec back = SceneSpec::from_kv(KvMap::parse(s.to_kv().serialize()));
    CHECK(back.drawer->opening_top == s.drawer->opening_top);
    CHECK((back.bowl->position - s.bowl->position).norm() == 0.0);
    CHECK(back.veggies->pieces.size() == 2);
    CHECK(back.to_kv().serialize() == s.to_kv().serialize());
}
