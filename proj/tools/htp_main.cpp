// Command-line front end for the hand-trajectory pipeline: dataset
// generation, training, trajectory sampling, simulator rollouts, the
// evaluation suites, report re-emission, and gradient verification.
//
// Every subcommand accepts `--config <file>` (canonical key-value text, one
// `subcommand.flag = value` per line, flag names matching the long options);
// explicit flags override config-file values, which override defaults.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "htp/data.hpp"
#include "htp/eval.hpp"
#include "htp/train.hpp"
#include "htp/verify.hpp"

using namespace htp;

namespace {

void write_file(const std::string& path, const std::string& content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream os(path, std::ios::binary);
    os << content;
    if (!os) throw std::runtime_error("cannot write " + path);
}

std::string pose_line(const Pose6& p) {
    std::string out;
    for (int i = 0; i < 3; ++i) out += format_double(p.position[i]) + " ";
    for (int i = 0; i < 3; ++i) out += format_double(p.euler[i]) + (i < 2 ? " " : "");
    return out;
}

// Pose-sequence text file: '#' comment lines, then one pose per line as six
// space-separated doubles (position xyz, then roll pitch yaw).
std::string poses_to_text(const std::vector<Pose6>& poses) {
    std::string out = "# pose sequence: x y z roll pitch yaw, one pose per line\n";
    for (const Pose6& p : poses) out += pose_line(p) + "\n";
    return out;
}

std::vector<Pose6> load_poses(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open pose file " + path);
    std::vector<Pose6> poses;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        Pose6 p;
        if (!(ls >> p.position[0] >> p.position[1] >> p.position[2] >> p.euler[0] >> p.euler[1] >>
              p.euler[2]))
            throw std::runtime_error("malformed pose line in " + path + ": " + line);
        poses.push_back(p);
    }
    if (poses.empty()) throw std::runtime_error("pose file " + path + " holds no poses");
    return poses;
}

int cmd_gen_data(const DatasetParams& params, const std::string& out) {
    const Dataset ds = build_dataset(params);
    save_dataset(ds, out);
    std::cout << "wrote " << ds.clips.size() << " clips (" << ds.train_idx.size() << " train, "
              << ds.val_idx.size() << " val) to " << out << "\n";
    return 0;
}

int cmd_train(const ModelConfig& mc, const TrainConfig& tc, const std::string& data,
              const std::string& resume, const std::string& out_dir) {
    const Dataset ds = load_dataset(data);
    std::filesystem::create_directories(out_dir);
    const std::string ckpt_path = out_dir + "/checkpoint.hcpt";
    const std::string log_path = out_dir + "/train_log.txt";
    std::filesystem::remove(log_path);  // the trainer appends

    ModelConfig model_cfg = mc;
    model_cfg.horizon = ds.horizon();
    model_cfg.feature_dim = ds.feature_dim();
    const TrainResult res = train(model_cfg, tc, ds, resume, ckpt_path, log_path);
    save_checkpoint(res.checkpoint, ckpt_path, !tc.f64);

    const TrainRecord& last = res.log.back();
    std::cout << "final step " << last.step << ": recon " << format_double(last.recon) << ", kl "
              << format_double(last.kl) << "\n";
    if (!ds.val_idx.empty()) {
        const ValMetrics vm = evaluate_validation(res.checkpoint, ds);
        std::cout << "validation (" << vm.clips << " clips): recon " << format_double(vm.recon)
                  << ", kl " << format_double(vm.kl) << "\n";
    }
    std::cout << "checkpoint: " << ckpt_path << "\nlog: " << log_path << "\n";
    return 0;
}

int cmd_sample(const std::string& ckpt_path, const std::string& scene_path,
               const std::string& goal_path, int n, std::uint64_t seed, const std::string& out) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    ModelPolicy policy(ckpt);
    const SceneSpec scene = SceneSpec::load(scene_path);
    const CameraModel cam = default_camera();
    const std::vector<double> f1 = featurize(scene, cam, policy.config().feature_dim);
    std::vector<double> fg;
    SceneSpec goal;
    const bool has_goal = !goal_path.empty();
    if (has_goal) {
        goal = SceneSpec::load(goal_path);
        fg = featurize(goal, cam, policy.config().feature_dim);
    }
    for (int k = 0; k < n; ++k) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(k)), 0);
        const std::vector<Pose6> traj =
            policy.plan(scene, has_goal ? &goal : nullptr, f1, has_goal ? &fg : nullptr,
                        TaskId::MoveBowl, rng);
        const std::string path = n == 1 ? out : out + "." + std::to_string(k);
        write_file(path, poses_to_text(traj));
        std::cout << "wrote " << traj.size() << " poses to " << path << "\n";
    }
    return 0;
}

int cmd_rollout(const std::string& scene_path, const std::string& poses_path,
                const std::string& out) {
    const SceneSpec scene = SceneSpec::load(scene_path);
    const std::vector<Pose6> poses = load_poses(poses_path);
    const RolloutTrace trace = execute_trajectory(scene, poses);
    if (!out.empty()) write_file(out, trace.to_text());
    const SceneSpec after = trace.scene_states.empty() ? scene : trace.scene_states.back();
    std::cout << "steps: " << trace.commanded.size() << ", contacts: " << trace.contacts.size()
              << ", ik stuck: " << (trace.any_ik_stuck() ? "yes" : "no")
              << ", outcome: " << outcome_signature(scene, after) << "\n";
    if (!out.empty()) std::cout << "trace: " << out << "\n";
    return 0;
}

struct EvalOpts {
    std::string checkpoint;         // drives the goal-conditioned suite
    std::string uncond_checkpoint;  // drives unconditional rows; falls back to checkpoint
    bool oracle = false;
    bool flow_baseline = false;
    int trials = 20;
    int disamb_trials = 10;
    int door_trials = 15;
    int door_bins = 5;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out;
};

int cmd_eval(const EvalOpts& o) {
    std::unique_ptr<Policy> main_policy, uncond_policy;
    bool goal_capable = true;
    if (o.oracle) {
        main_policy = std::make_unique<OraclePolicy>();
        uncond_policy = std::make_unique<OraclePolicy>();
    } else {
        if (o.checkpoint.empty())
            throw std::runtime_error("eval: --checkpoint required unless --oracle is set");
        auto mp = std::make_unique<ModelPolicy>(load_checkpoint(o.checkpoint));
        goal_capable = mp->config().goal_conditioned;
        main_policy = std::move(mp);
        uncond_policy = o.uncond_checkpoint.empty()
                            ? std::make_unique<ModelPolicy>(load_checkpoint(o.checkpoint))
                            : std::make_unique<ModelPolicy>(load_checkpoint(o.uncond_checkpoint));
    }

    std::filesystem::create_directories(o.out);
    EvalParams params;
    params.n_trials = o.trials;
    params.seed = o.seed;
    params.jobs = o.jobs;
    params.trace_dir = o.out + "/traces";

    EvalReport report;
    report.meta.set("seed", static_cast<long long>(o.seed));
    report.meta.set("trials", static_cast<long long>(o.trials));
    report.meta.set("policy", o.oracle ? std::string("oracle") : o.checkpoint);
    report.unconditional = run_unconditional(*uncond_policy, params);
    if (goal_capable) {
        report.goal_conditioned = run_goal_conditioned(*main_policy, params);
        report.disambiguation =
            drawer_disambiguation(*uncond_policy, *main_policy, o.disamb_trials, o.seed);
    }
    report.door_histogram =
        door_angle_histogram(*uncond_policy, o.door_trials, o.door_bins, o.seed);
    if (o.flow_baseline && goal_capable) {
        DominantFlowPolicy flow;
        for (TrialReport r : run_goal_conditioned(flow, params)) {
            r.name = "flow:" + r.name;
            report.goal_conditioned.push_back(std::move(r));
        }
    }

    save_report(report, o.out + "/report.kv");
    const std::string text = report_text(report);
    write_file(o.out + "/report.txt", text);
    write_file(o.out + "/report.csv", report_csv(report));
    std::cout << text;
    std::cout << "report files under " << o.out << "\n";
    return 0;
}

int cmd_report(const std::string& in, const std::string& out_dir) {
    const EvalReport report = load_report(in);
    const std::string text = report_text(report);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_file(out_dir + "/report.txt", text);
        write_file(out_dir + "/report.csv", report_csv(report));
    }
    std::cout << text;
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto checks = gradient_verification_suite(seed);
    for (const auto& c : checks)
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << " (max rel err "
                  << format_double(c.max_rel_err) << ")\n";
    return gradient_suite_passes(checks) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hand-trajectory prediction pipeline"};
    app.set_config("--config", "",
                   "key-value config file shared across subcommands; keys are "
                   "subcommand-qualified (e.g. `train.lr = 0.001`), explicit flags override");
    app.fallthrough();  // lets `--config` follow the subcommand name
    app.require_subcommand(1);

    // gen-data
    DatasetParams dp;
    std::string gen_out = "dataset.hclp";
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic clip dataset");
    gen->add_option("--seed", dp.seed, "generator seed");
    gen->add_option("--n", dp.n_clips, "number of clips");
    gen->add_option("--horizon", dp.horizon, "future steps per clip");
    gen->add_option("--feature-dim", dp.feature_dim, "scene feature dimension");
    gen->add_option("--val-stride", dp.val_stride, "every k-th clip goes to the val split");
    gen->add_option("--out", gen_out, "output dataset path");

    // train
    ModelConfig mc = ModelConfig::desk();
    TrainConfig tc;
    std::string train_data, train_resume, train_out = "run", precision = "f32";
    bool full_scale = false;
    auto* tr = app.add_subcommand("train", "train the trajectory model");
    tr->add_option("--data", train_data, "dataset path")->required();
    tr->add_option("--out", train_out, "output directory");
    tr->add_option("--resume", train_resume, "checkpoint to resume from");
    tr->add_option("--seed", tc.seed, "training seed");
    tr->add_option("--steps", tc.total_steps, "optimization steps");
    tr->add_option("--batch-size", tc.batch_size, "clips per step");
    tr->add_option("--lr", tc.learning_rate, "learning rate");
    tr->add_option("--kl-warmup", tc.kl_warmup_steps, "linear KL warm-up steps");
    tr->add_option("--checkpoint-interval", tc.checkpoint_interval, "steps between checkpoints");
    tr->add_option("--log-interval", tc.log_interval, "steps between log records");
    tr->add_option("--grad-clip", tc.grad_clip, "global gradient-norm clip");
    tr->add_option("--jobs", tc.jobs, "gradient worker threads");
    tr->add_option("--precision", precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    tr->add_flag("--goal-conditioned", mc.goal_conditioned, "train with goal features");
    tr->add_flag("--include-first-step", mc.include_first_step, "include step 1 in the loss");
    tr->add_flag("--full-scale", full_scale, "512-wide architecture preset (CPU-hostile)");
    tr->add_option("--d-model", mc.d_model, "embedding width");
    tr->add_option("--heads", mc.n_heads, "attention heads");
    tr->add_option("--enc-blocks", mc.n_encoder_blocks, "encoder blocks");
    tr->add_option("--dec-blocks", mc.n_decoder_blocks, "decoder blocks");
    tr->add_option("--latent-dim", mc.latent_dim, "per-step latent width");
    tr->add_option("--dropout", mc.dropout_rate, "dropout rate");
    tr->add_option("--kl-weight", mc.kl_weight, "KL term weight");

    // sample
    std::string s_ckpt, s_scene, s_goal, s_out = "poses.txt";
    std::uint64_t s_seed = 0;
    int s_n = 1;
    auto* sa = app.add_subcommand("sample", "sample a trajectory from a checkpoint");
    sa->add_option("--checkpoint", s_ckpt, "model checkpoint")->required();
    sa->add_option("--scene", s_scene, "initial scene file")->required();
    sa->add_option("--goal", s_goal, "goal scene file (goal-conditioned models)");
    sa->add_option("--n", s_n, "number of samples")->check(CLI::PositiveNumber);
    sa->add_option("--seed", s_seed, "sampling seed");
    sa->add_option("--out", s_out, "output pose file");

    // rollout
    std::string r_scene, r_poses, r_out = "trace.txt";
    auto* ro = app.add_subcommand("rollout", "execute a pose sequence in the simulator");
    ro->add_option("--scene", r_scene, "initial scene file")->required();
    ro->add_option("--poses", r_poses, "pose sequence file")->required();
    ro->add_option("--out", r_out, "trace output path");

    // eval
    EvalOpts eo;
    auto* ev = app.add_subcommand("eval", "run the trial suites and studies");
    ev->add_option("--checkpoint", eo.checkpoint, "model checkpoint");
    ev->add_option("--unconditional-checkpoint", eo.uncond_checkpoint,
                   "separate checkpoint for the unconditional rows");
    ev->add_flag("--oracle", eo.oracle, "substitute the scripted policy (harness ceiling)");
    ev->add_flag("--flow-baseline", eo.flow_baseline,
                 "append dominant-displacement baseline rows to the goal table");
    ev->add_option("--trials", eo.trials, "trials per row");
    ev->add_option("--disamb-trials", eo.disamb_trials, "trials per disambiguation condition");
    ev->add_option("--door-trials", eo.door_trials, "door-angle trials");
    ev->add_option("--door-bins", eo.door_bins, "door-angle histogram bins");
    ev->add_option("--seed", eo.seed, "evaluation seed");
    ev->add_option("--jobs", eo.jobs, "concurrent trials");
    ev->add_option("--out", eo.out, "output directory")->required();

    // report
    std::string rep_in, rep_out;
    auto* re = app.add_subcommand("report", "re-emit tables from a saved report");
    re->add_option("--in", rep_in, "saved report (.kv)")->required();
    re->add_option("--out", rep_out, "output directory");

    // gradcheck
    std::uint64_t g_seed = 0;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_option("--seed", g_seed, "suite seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(dp, gen_out);
        if (tr->parsed()) {
            tc.f64 = precision == "f64";
            if (full_scale) {
                const ModelConfig fs = ModelConfig::full_scale();
                mc.d_model = fs.d_model;
                mc.n_heads = fs.n_heads;
                mc.n_encoder_blocks = fs.n_encoder_blocks;
                mc.n_decoder_blocks = fs.n_decoder_blocks;
                mc.latent_dim = fs.latent_dim;
            }
            return cmd_train(mc, tc, train_data, train_resume, train_out);
        }
        if (sa->parsed()) return cmd_sample(s_ckpt, s_scene, s_goal, s_n, s_seed, s_out);
        if (ro->parsed()) return cmd_rollout(r_scene, r_poses, r_out);
        if (ev->parsed()) return cmd_eval(eo);
        if (re->parsed()) return cmd_report(rep_in, rep_out);
        if (gc->parsed()) return cmd_gradcheck(g_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
