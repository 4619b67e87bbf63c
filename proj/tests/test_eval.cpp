#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <set>

#include "doctest.h"
#include "htp/data.hpp"
#include "htp/eval.hpp"

using namespace htp;

namespace {

Checkpoint random_checkpoint(bool goal_conditioned, std::uint64_t seed) {
    ModelConfig mc = ModelConfig::desk();
    mc.goal_conditioned = goal_conditioned;
    Model64 m(mc, seed);
    return m.to_checkpoint();
}

}  // namespace

TEST_CASE("object rows cover every scene object and feasible-task filtering works") {
    const auto objects = eval_objects();
    CHECK(objects.size() == 5);
    Rng rng(41);
    int seen = 0;
    for (int i = 0; i < 200; ++i) {
        Rng r = rng.fork(i);
        const SceneSpec s = generate_scene(r);
        for (const auto& obj : objects)
            if (scene_has_object(s, obj)) {
                ++seen;
                for (TaskId t : object_tasks(s, obj)) CHECK(task_feasible(s, t));
            }
    }
    CHECK(seen > 200);  // most scenes carry 1-2 objects
    CHECK_THROWS(scene_has_object(SceneSpec{}, "lamp"));
}

TEST_CASE("outcome signature names the satisfied task criteria") {
    SceneSpec s;
    DrawerStack d;
    s.drawer = d;
    CHECK(outcome_signature(s, s) == "none");
    SceneSpec after = s;
    after.drawer->opening_top = 0.15;
    CHECK(outcome_signature(s, after) == "open_top_drawer");
    after.drawer->opening_bottom = 0.15;
    CHECK(outcome_signature(s, after) == "open_top_drawer+open_bottom_drawer");
}

TEST_CASE("dominant-flow baseline follows the largest ground-truth displacement") {
    SceneSpec s;
    DrawerStack d;
    d.base = Eigen::Vector3d(0.5, 0, 0);
    s.drawer = d;

    SUBCASE("identical scenes give zero motion") {
        const auto traj = baseline_dominant_flow(s, s);
        REQUIRE(traj.size() == kDefaultHorizon + 1);
        for (const auto& p : traj)
            CHECK((p.position - traj.front().position).norm() == doctest::Approx(0.0));
    }
    SUBCASE("10 cm drawer opening gives a 10 cm straight line along the slide axis") {
        SceneSpec goal = s;
        goal.drawer->opening_bottom = 0.10;
        const auto traj = baseline_dominant_flow(s, goal, 5);
        REQUIRE(traj.size() == 6);
        CHECK((traj.front().position - handle_point(s, TaskId::OpenBottomDrawer)).norm() < 1e-12);
        const Eigen::Vector3d total = traj.back().position - traj.front().position;
        CHECK(total.norm() == doctest::Approx(0.10));
        CHECK(total.normalized().dot(s.drawer->axis) == doctest::Approx(1.0));
        for (size_t k = 1; k < traj.size(); ++k) {
            const Eigen::Vector3d step = traj[k].position - traj[k - 1].position;
            CHECK(step.norm() == doctest::Approx(0.02));
        }
    }
    SUBCASE("the larger of two displacements wins") {
        SceneSpec both = s;
        Bowl b;
        b.position = Eigen::Vector3d(0.45, 0.25, 0);
        both.bowl = b;
        SceneSpec goal = both;
        goal.drawer->opening_top = 0.03;
        goal.bowl->position += Eigen::Vector3d(0.12, 0, 0);
        const auto traj = baseline_dominant_flow(both, goal);
        CHECK((traj.front().position - handle_point(both, TaskId::MoveBowl)).norm() < 1e-12);
        CHECK((traj.back().position - traj.front().position).norm() == doctest::Approx(0.12));
    }
    CHECK_THROWS(baseline_dominant_flow(s, s, 0));
}

TEST_CASE("scripted policy scores 100% on every unconditional object row") {
    OraclePolicy oracle;
    EvalParams params;
    params.n_trials = 20;
    params.seed = 7;
    const auto reports = run_unconditional(oracle, params);
    REQUIRE(reports.size() == eval_objects().size());
    for (const auto& r : reports) {
        CAPTURE(r.name);
        CHECK(r.trials == 20);
        CHECK(r.successes == 20);
        CHECK(r.no_contact + r.stuck_infeasible + r.wrong_goal == 0);
        CHECK(r.results.size() == 20);
    }
}

TEST_CASE("scripted policy scores 100% on every goal category plus the null-goal row") {
    OraclePolicy oracle;
    EvalParams params;
    params.n_trials = 8;
    params.seed = 11;
    const auto reports = run_goal_conditioned(oracle, params);
    REQUIRE(reports.size() == kNumTasks + 1);
    CHECK(reports.back().name == "null_goal");
    for (const auto& r : reports) {
        CAPTURE(r.name);
        CHECK(r.trials == 8);
        CHECK(r.successes == 8);
    }
    // the null-goal row holds still: no contact, scene untouched
    for (const auto& t : reports.back().results) CHECK(t.outcome == "none");
}

TEST_CASE("trial suites are deterministic in the seed and invariant to jobs") {
    OraclePolicy oracle;
    EvalParams a;
    a.n_trials = 6;
    a.seed = 123;
    EvalParams b = a;
    b.jobs = 3;
    EvalReport ra, rb;
    ra.unconditional = run_unconditional(oracle, a);
    rb.unconditional = run_unconditional(oracle, b);
    CHECK(report_csv(ra) == report_csv(rb));
    for (size_t r = 0; r < ra.unconditional.size(); ++r)
        for (size_t i = 0; i < ra.unconditional[r].results.size(); ++i)
            CHECK(ra.unconditional[r].results[i].outcome ==
                  rb.unconditional[r].results[i].outcome);

    EvalParams c = a;
    c.seed = 124;
    EvalReport rc;
    rc.unconditional = run_unconditional(oracle, c);
    bool any_diff = false;
    for (size_t r = 0; r < ra.unconditional.size(); ++r)
        for (size_t i = 0; i < ra.unconditional[r].results.size(); ++i)
            any_diff = any_diff || ra.unconditional[r].results[i].outcome !=
                                       rc.unconditional[r].results[i].outcome;
    CHECK(any_diff);
}

TEST_CASE("untrained model policy produces a well-formed report") {
    ModelPolicy policy(random_checkpoint(false, 5));
    EvalParams params;
    params.n_trials = 2;
    params.seed = 3;
    const auto reports = run_unconditional(policy, params);
    REQUIRE(reports.size() == eval_objects().size());
    for (const auto& r : reports) {
        CHECK(r.trials == 2);
        CHECK(r.successes + r.no_contact + r.stuck_infeasible + r.wrong_goal == r.trials);
        for (const auto& t : r.results) CHECK(std::isfinite(t.final_angle));
    }
}

TEST_CASE("drawer disambiguation: fixed scene, goal rows hit their targets under the oracle") {
    const SceneSpec s = disambiguation_scene();
    REQUIRE(s.drawer.has_value());
    CHECK(s.drawer->opening_top == 0.0);
    CHECK(s.drawer->opening_bottom == doctest::Approx(0.5 * s.drawer->range));

    OraclePolicy oracle;
    const auto rows = drawer_disambiguation(oracle, oracle, 10, 21);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].condition == "unconditional");
    for (const auto& r : rows) {
        CHECK(r.trials == 10);
        CHECK(r.top_open + r.bottom_open + r.bottom_close <= r.trials);
    }
    // conditioned rows concentrate on their own goal and at least match the
    // unconditional rate for it
    CHECK(rows[1].condition == "open_top_drawer");
    CHECK(rows[1].top_open == 10);
    CHECK(rows[2].condition == "open_bottom_drawer");
    CHECK(rows[2].bottom_open == 10);
    CHECK(rows[3].condition == "close_bottom_drawer");
    CHECK(rows[3].bottom_close == 10);
    CHECK(rows[1].top_open >= rows[0].top_open);
    CHECK(rows[2].bottom_open >= rows[0].bottom_open);
    CHECK(rows[3].bottom_close >= rows[0].bottom_close);
    // the unconditional oracle spreads over hints, so no goal row is empty
    CHECK(rows[0].top_open + rows[0].bottom_open + rows[0].bottom_close == 10);
}

TEST_CASE("door angle histogram stays in range; the scripted policy fills one bin") {
    OraclePolicy oracle;
    const AngleHistogram h = door_angle_histogram(oracle, 15, 5, 17);
    REQUIRE(h.counts.size() == 5);
    int total = 0;
    for (int c : h.counts) total += c;
    CHECK(total == 15);
    REQUIRE(h.angles_deg.size() == 15);
    for (double a : h.angles_deg) {
        CHECK(a >= 0.0);
        CHECK(a <= 110.0);
    }
    CHECK(*std::max_element(h.counts.begin(), h.counts.end()) == 15);
}

TEST_CASE("report emission: totals reconcile, save/load round-trips byte-identically") {
    OraclePolicy oracle;
    EvalParams params;
    params.n_trials = 3;
    params.seed = 9;
    params.trace_dir = "/tmp/htp_eval_traces";
    std::filesystem::remove_all(params.trace_dir);

    EvalReport report;
    report.meta.set("seed", 9LL);
    report.unconditional = run_unconditional(oracle, params);
    report.goal_conditioned = run_goal_conditioned(oracle, params);
    report.disambiguation = drawer_disambiguation(oracle, oracle, 3, 9);
    report.door_histogram = door_angle_histogram(oracle, 5, 5, 9);

    // every trial has an archived trace
    size_t n_traces = 0;
    for (const auto& e : std::filesystem::directory_iterator(params.trace_dir)) {
        (void)e;
        ++n_traces;
    }
    size_t n_trials = 0;
    for (const auto& r : report.unconditional) n_trials += r.results.size();
    for (const auto& r : report.goal_conditioned) n_trials += r.results.size();
    CHECK(n_traces == n_trials);

    const std::string text = report_text(report);
    const std::string csv = report_csv(report);
    CHECK(text.find("Unconditional manipulation") != std::string::npos);
    CHECK(text.find("Drawer disambiguation") != std::string::npos);
    CHECK(csv.rfind("suite,row,metric,value\n", 0) == 0);

    save_report(report, "/tmp/htp_eval_report.kv");
    const EvalReport loaded = load_report("/tmp/htp_eval_report.kv");
    CHECK(report_text(loaded) == text);
    CHECK(report_csv(loaded) == csv);
    CHECK(loaded.meta.get("seed") == report.meta.get("seed"));

    // re-saving the loaded report reproduces the file bytes
    save_report(loaded, "/tmp/htp_eval_report2.kv");
    std::ifstream f1("/tmp/htp_eval_report.kv", std::ios::binary);
    std::ifstream f2("/tmp/htp_eval_report2.kv", std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("empty report emits headers only") {
    const EvalReport empty;
    CHECK(report_csv(empty) == "suite,row,metric,value\n");
    const std::string text = report_text(empty);
    CHECK(text.find("Unconditional manipulation") != std::string::npos);
    CHECK(text.find("Drawer disambiguation") == std::string::npos);
}

TEST_CASE("corrupt report files are rejected") {
    {
        std::ofstream os("/tmp/htp_eval_bad.kv");
        os << "format = not-a-report\n";
    }
    CHECK_THROWS(load_report("/tmp/htp_eval_bad.kv"));
    CHECK_THROWS(load_report("/tmp/htp_eval_missing.kv"));
}
