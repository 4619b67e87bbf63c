#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "htp/data.hpp"
#include "htp/gradcheck.hpp"
#include "htp/model.hpp"

using namespace htp;

namespace {

ModelConfig toy_config() {
    ModelConfig c;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_encoder_blocks = 1;
    c.n_decoder_blocks = 1;
    c.latent_dim = 4;
    c.horizon = 3;
    c.feature_dim = 8;
    c.dropout_rate = 0.0;
    return c;
}

TensorT<double> random_feature(int dim, Rng& rng) {
    TensorT<double> f(1, dim);
    for (auto& v : f.v) v = rng.normal();
    return f;
}

TensorT<double> random_actions(int horizon, Rng& rng) {
    TensorT<double> a(horizon, 6);
    for (auto& v : a.v) v = 0.05 * rng.normal();
    return a;
}

}  // namespace

TEST_CASE("config validation rejects bad dimensions") {
    ModelConfig c = toy_config();
    c.d_model = 15;  // not divisible by heads
    CHECK_THROWS(c.validate());
    c = toy_config();
    c.horizon = 1;
    CHECK_THROWS(c.validate());
    c = toy_config();
    c.latent_dim = 0;
    CHECK_THROWS(c.validate());
    CHECK_NOTHROW(ModelConfig::desk().validate());
    CHECK_NOTHROW(ModelConfig::full_scale().validate());
}

TEST_CASE("config survives key-value round-trip") {
    ModelConfig c = toy_config();
    c.goal_conditioned = true;
    c.kl_weight = 0.02;
    ModelConfig back = ModelConfig::from_kv(c.to_kv());
    CHECK(back.to_kv().serialize() == c.to_kv().serialize());
}

TEST_CASE("encoder output is deterministic and shape-correct") {
    Model64 m(toy_config(), 1);
    Rng feat(5, 0), drop(0);
    TensorT<double> f1 = random_feature(8, feat);

    Graph64 g1, g2;
    auto c1 = m.encode(g1, f1, nullptr, false, drop);
    auto c2 = m.encode(g2, f1, nullptr, false, drop);
    REQUIRE(g1.value(c1).rows == 1);
    REQUIRE(g1.value(c1).cols == 16);
    CHECK(g1.value(c1).v == g2.value(c2).v);
    for (double v : g1.value(c1).v) CHECK(std::isfinite(v));

    CHECK_THROWS(m.encode(g1, f1, &f1, false, drop));  // fg on unconditional model
}

TEST_CASE("goal token position breaks input symmetry") {
    ModelConfig cfg = toy_config();
    cfg.goal_conditioned = true;
    Model64 m(cfg, 2);
    Rng feat(6, 0), drop(0);
    TensorT<double> f1 = random_feature(8, feat), fg = random_feature(8, feat);

    Graph64 g1, g2;
    auto a = m.encode(g1, f1, &fg, false, drop);
    auto b = m.encode(g2, fg, &f1, false, drop);
    REQUIRE(g1.value(a).rows == 2);
    // swapping the features must not merely swap rows: positional embeddings
    // keep initial-scene and goal slots distinct
    CHECK(g1.value(a).v != g2.value(b).v);
    double swap_diff = 0;
    for (int c = 0; c < 16; ++c)
        swap_diff += std::abs(g1.value(a)(0, c) - g2.value(b)(1, c));
    CHECK(swap_diff > 1e-6);

    Graph64 g3;
    CHECK_THROWS(m.encode(g3, f1, nullptr, false, drop));  // missing goal
}

TEST_CASE("decoder is causal over past actions") {
    ModelConfig cfg = toy_config();
    cfg.horizon = 5;
    Model64 m(cfg, 3);
    Rng feat(7, 0), drop(0);
    TensorT<double> f1 = random_feature(8, feat);
    TensorT<double> past = random_actions(4, feat);  // a_1..a_4

    Graph64 g;
    auto base = g.value(m.decode(g, m.encode(g, f1, nullptr, false, drop), &past, false, drop));
    REQUIRE(base.rows == 5);

    for (int j = 0; j < 4; ++j) {  // perturb a_{j+1}
        TensorT<double> p = past;
        p(j, 2) += 0.1;
        Graph64 gp;
        auto out =
            gp.value(m.decode(gp, m.encode(gp, f1, nullptr, false, drop), &p, false, drop));
        for (int t = 0; t < 5; ++t) {
            double diff = 0;
            for (int c = 0; c < 16; ++c) diff += std::abs(out(t, c) - base(t, c));
            if (t <= j)
                CHECK(diff == 0.0);  // prediction t only attends to a_{<t}
            else
                CHECK(diff > 1e-9);
        }
    }
    CHECK_THROWS(m.decode(g, m.encode(g, f1, nullptr, false, drop),
                          &(const TensorT<double>&)random_actions(5, feat), false, drop));
}

TEST_CASE("cvae heads: positive sigma, correct dims, deterministic decode") {
    Model64 m(toy_config(), 4);
    Rng rng(8, 0), drop(0);
    Graph64 g;
    auto codes = m.encode(g, random_feature(8, rng), nullptr, false, drop);
    auto ctx = m.decode_step(g, codes, nullptr, false, drop);

    for (int i = 0; i < 200; ++i) {
        TensorT<double> a(1, 6);
        for (auto& v : a.v) v = 3.0 * rng.normal();
        auto [mu, sigma] = m.cvae_encode(g, g.input(a), ctx);
        REQUIRE(g.value(mu).cols == 4);
        REQUIRE(g.value(sigma).cols == 4);
        for (double s : g.value(sigma).v) CHECK(s > 0.0);
    }

    TensorT<double> z(1, 4);
    for (auto& v : z.v) v = rng.normal();
    auto a1 = g.value(m.cvae_decode(g, g.input(z), ctx));
    auto a2 = g.value(m.cvae_decode(g, g.input(z), ctx));
    REQUIRE(a1.cols == 6);
    CHECK(a1.v == a2.v);
}

TEST_CASE("kl term vanishes for a unit-gaussian posterior and is non-negative") {
    ModelConfig cfg = toy_config();
    Model64 m(cfg, 5);
    // force mu = 0, sigma = 1: zero the output head and set the sigma bias to
    // softplus^-1(1 - 1e-6)
    auto& w = m.param("cvae.enc.out.w");
    for (auto& v : w.value.v) v = 0.0;
    auto& b = m.param("cvae.enc.out.b");
    const double inv_softplus_1 = std::log(std::exp(1.0 - 1e-6) - 1.0);
    for (int c = 0; c < cfg.latent_dim; ++c) b.value(0, c) = 0.0;
    for (int c = cfg.latent_dim; c < 2 * cfg.latent_dim; ++c) b.value(0, c) = inv_softplus_1;

    Rng rng(9, 0);
    Graph64 g;
    Rng step_rng(10, 0);
    auto loss = m.forward_train(g, random_actions(3, rng), random_feature(8, rng), nullptr,
                                false, step_rng);
    CHECK(std::abs(g.value(loss.kl)(0, 0)) < 1e-9);

    // random model: KL is strictly positive
    Model64 m2(cfg, 6);
    Graph64 g2;
    Rng step2(11, 0);
    auto loss2 = m2.forward_train(g2, random_actions(3, rng), random_feature(8, rng), nullptr,
                                  false, step2);
    CHECK(g2.value(loss2.kl)(0, 0) >= 0.0);
    CHECK(std::isfinite(g2.value(loss2.total)(0, 0)));
    CHECK(loss2.per_step_recon.size() == 2);  // t = 2..3
}

TEST_CASE("total-loss gradients match finite differences") {
    ModelConfig cfg = toy_config();
    cfg.horizon = 2;
    Model64 m(cfg, 7);
    Rng data_rng(12, 0);
    TensorT<double> actions = random_actions(2, data_rng);
    TensorT<double> f1 = random_feature(8, data_rng);

    auto loss_fn = [&]() {
        Graph64 g;
        Rng step(99, 0);  // same eps draw every call
        auto l = m.forward_train(g, actions, f1, nullptr, true, step);
        return g.value(l.total)(0, 0);
    };
    auto backward_fn = [&]() {
        Graph64 g;
        Rng step(99, 0);
        auto l = m.forward_train(g, actions, f1, nullptr, true, step);
        g.backward(l.total);
    };
    std::vector<ParamT<double>*> ps;
    for (auto& p : m.params()) ps.push_back(p.get());
    auto res = grad_check(ps, loss_fn, backward_fn);
    INFO("max rel err ", res.max_rel_err);
    CHECK(res.pass);
}

TEST_CASE("sampled trajectories have horizon length and respond to the seed") {
    ModelConfig cfg = toy_config();
    cfg.feature_dim = 8;
    Model64 m(cfg, 8);
    Rng frng(13, 0);
    std::vector<double> f1(8);
    for (auto& v : f1) v = frng.normal();
    Pose6 start;
    start.position = {0.4, 0.0, 0.2};

    Rng s1(21, 0), s1b(21, 0), s2(22, 0);
    auto t1 = m.sample_trajectory(f1, nullptr, start, s1);
    auto t1b = m.sample_trajectory(f1, nullptr, start, s1b);
    auto t2 = m.sample_trajectory(f1, nullptr, start, s2);
    REQUIRE(t1.size() == 3);
    for (const auto& p : t1) {
        CHECK(p.position.allFinite());
        CHECK(p.euler.allFinite());
    }
    for (size_t i = 0; i < t1.size(); ++i) {
        CHECK(t1[i].position == t1b[i].position);
        CHECK(t1[i].euler == t1b[i].euler);
    }
    CHECK(t1.back().position != t2.back().position);
}

TEST_CASE("delta actions recovered from a pose sequence reapply exactly") {
    Rng rng(31, 0);
    SceneSpec s = generate_scene(rng);
    auto fs = feasible_tasks(s);
    REQUIRE(!fs.empty());
    auto poses = oracle_trajectory(s, fs[0], rng);
    TensorT<double> acts = actions_from_poses(poses);
    REQUIRE(acts.rows == 7);
    Pose6 cur = poses[0];
    for (int t = 0; t < acts.rows; ++t) {
        DeltaAction d;
        d.dpos = {acts(t, 0), acts(t, 1), acts(t, 2)};
        d.drot = {acts(t, 3), acts(t, 4), acts(t, 5)};
        cur = pose_apply(cur, d);
        CHECK((cur.position - poses[t + 1].position).norm() < 1e-9);
    }
}

TEST_CASE("checkpoint round-trip reproduces the model bit-for-bit") {
    ModelConfig cfg = toy_config();
    cfg.goal_conditioned = true;
    Model64 m(cfg, 9);
    const std::string path = "/tmp/htp_test_model.ckpt";
    Checkpoint c = m.to_checkpoint();
    c.extra.set("step", 123ll);
    save_checkpoint(c, path, false);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.extra.get_int("step") == 123);
    Model64 m2 = Model64::from_checkpoint(back);

    for (size_t i = 0; i < m.params().size(); ++i) {
        CHECK(m.params()[i]->name == m2.params()[i]->name);
        CHECK(m.params()[i]->value.v == m2.params()[i]->value.v);
    }
    Rng frng(41, 0);
    std::vector<double> f1(8), fg(8);
    for (auto& v : f1) v = frng.normal();
    for (auto& v : fg) v = frng.normal();
    Rng sa(50, 0), sb(50, 0);
    auto ta = m.sample_trajectory(f1, &fg, Pose6{}, sa);
    auto tb = m2.sample_trajectory(f1, &fg, Pose6{}, sb);
    for (size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i].position == tb[i].position);
        CHECK(ta[i].euler == tb[i].euler);
    }
    std::remove(path.c_str());
}

TEST_CASE("float checkpoints load into either precision within cast tolerance") {
    Model64 m(toy_config(), 10);
    const std::string path = "/tmp/htp_test_model_f32.ckpt";
    save_checkpoint(m.to_checkpoint(), path, true);
    Checkpoint back = load_checkpoint(path);
    Model32 m32 = Model32::from_checkpoint(back);
    Model64 m64 = Model64::from_checkpoint(back);
    std::remove(path.c_str());

    Rng frng(42, 0);
    std::vector<double> f1(8);
    for (auto& v : f1) v = frng.normal();
    Pose6 start;
    Rng s1(60, 0), s2(60, 0), s3(60, 0);
    auto t64 = m.sample_trajectory(f1, nullptr, start, s1);
    auto tq = m64.sample_trajectory(f1, nullptr, start, s2);
    auto tf = m32.sample_trajectory(f1, nullptr, start, s3);
    for (size_t i = 0; i < t64.size(); ++i) {
        CHECK((t64[i].position - tq[i].position).norm() < 1e-5);
        CHECK((t64[i].position - tf[i].position).norm() < 1e-4);
    }
}

TEST_CASE("checkpoint loading rejects corrupt files") {
    const std::string path = "/tmp/htp_test_model_bad.ckpt";
    {
        FILE* f = std::fopen(path.c_str(), "wb");
        std::fwrite("HCPX\1\0\0\0", 1, 8, f);
        std::fclose(f);
    }
    CHECK_THROWS(load_checkpoint(path));
    {
        Model64 m(toy_config(), 11);
        save_checkpoint(m.to_checkpoint(), path, false);
        FILE* f = std::fopen(path.c_str(), "rb");
        std::fseek(f, 0, SEEK_END);
        long n = std::ftell(f);
        std::fclose(f);
        (void)truncate(path.c_str(), n / 2);
    }
    CHECK_THROWS(load_checkpoint(path));
    std::remove(path.c_str());
    CHECK_THROWS(load_checkpoint("/tmp/htp_no_such_checkpoint.ckpt"));
}

TEST_CASE("a small model overfits one clip: posterior decode reproduces actions") {
    Rng rng(71, 0);
    SceneSpec scene = generate_scene(rng);
    auto fs = feasible_tasks(scene);
    REQUIRE(!fs.empty());
    auto poses = oracle_trajectory(scene, fs[0], rng);
    CameraModel cam = default_camera();
    std::vector<Pose6> cam_poses;
    for (const auto& p : poses) cam_poses.push_back(world_to_camera(p, cam));
    TensorT<double> actions = actions_from_poses(cam_poses);
    std::vector<double> f1 = featurize(scene, cam, 64);

    ModelConfig cfg;
    cfg.d_model = 32;
    cfg.n_heads = 4;
    cfg.n_encoder_blocks = 1;
    cfg.n_decoder_blocks = 1;
    cfg.latent_dim = 8;
    cfg.dropout_rate = 0.0;
    Model64 m(cfg, 12);
    TensorT<double> f1t(1, 64);
    for (int i = 0; i < 64; ++i) f1t(0, i) = f1[i];

    AdamStateT<double> opt;
    opt.init(m.params());
    double mse = 1e9;
    for (int step = 0; step < 1200 && mse > 5e-4; ++step) {
        Graph64 g;
        Rng srng(Rng::derive(1000, step));
        m.zero_grad();
        auto l = m.forward_train(g, actions, f1t, nullptr, true, srng);
        g.backward(l.total);
        adam_step(m.params(), opt, 1e-3);
        double recon = g.value(l.recon)(0, 0);
        mse = recon / (6.0 * l.per_step_recon.size());
    }
    INFO("final teacher-forced MSE ", mse);
    CHECK(mse < 1e-3);
}
