#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "htp/geom.hpp"
#include "htp/io.hpp"
#include "htp/rng.hpp"
#include "htp/tensor.hpp"

namespace htp {

// Stochastic autoregressive trajectory predictor: a transformer encoder over
// the scene feature (plus optional goal feature), a causal transformer
// decoder over past delta actions, and a per-step conditional VAE head that
// makes the per-step action distribution multimodal.

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_encoder_blocks = 2;
    int n_decoder_blocks = 2;
    int latent_dim = 16;
    int horizon = 7;
    int action_dim = 6;
    int feature_dim = 64;
    double dropout_rate = 0.1;
    bool goal_conditioned = false;
    double kl_weight = 1e-3;
    // the loss sums steps 2..T by default; step 1 is still predicted (from
    // the learned start token) and can be included via this flag
    bool include_first_step = false;

    static ModelConfig desk() { return ModelConfig{}; }
    static ModelConfig full_scale();  // 512-wide preset, CPU-hostile

    void validate() const;
    KvMap to_kv() const;
    static ModelConfig from_kv(const KvMap& kv);
};

// Flatten a pose sequence h_0..h_T into per-step delta actions, one row
// [dpos, drot] per step t = 1..T.
TensorT<double> actions_from_poses(const std::vector<Pose6>& poses);

struct NamedTensor {
    std::string name;
    TensorT<double> value;
};

// Self-describing parameter container; payloads keep their source precision
// tag on disk and are widened to double in memory.
struct Checkpoint {
    KvMap config;
    KvMap extra;  // trainer state: step counter, RNG key, schedule
    std::vector<NamedTensor> tensors;

    const TensorT<double>* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path, bool as_f32);
Checkpoint load_checkpoint(const std::string& path);

template <typename T>
class ModelT {
public:
    using Graph = GraphT<T>;
    using Var = typename Graph::Var;

    ModelT(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        build_params();
        Rng rng(Rng::derive(seed, 0x4d0de1));
        for (auto& p : params_) {
            const bool is_bias = p->name.ends_with(".b") || p->name.ends_with("ln.g") ||
                                 p->name.ends_with("ln.b") || p->name.ends_with(".g");
            for (auto& v : p->value.v)
                v = is_bias ? T(0) : T(rng.normal() * 0.02);
            if (p->name.ends_with(".g"))  // layer-norm gains start at identity
                for (auto& v : p->value.v) v = T(1);
        }
    }

    const ModelConfig& config() const { return cfg_; }

    // KL warm-up support: the trainer anneals the effective weight
    void set_kl_weight(double w) {
        check(w >= 0.0, "set_kl_weight: negative weight");
        cfg_.kl_weight = w;
    }
    std::vector<std::unique_ptr<ParamT<T>>>& params() { return params_; }
    const std::vector<std::unique_ptr<ParamT<T>>>& params() const { return params_; }

    ParamT<T>& param(const std::string& name) {
        auto it = index_.find(name);
        check(it != index_.end(), "model: unknown parameter " + name);
        return *params_[it->second];
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

    // ---- encoder ----------------------------------------------------------

    Var encode(Graph& g, const TensorT<T>& f1, const TensorT<T>* fg, bool training, Rng& rng) {
        check(f1.rows == 1 && f1.cols == cfg_.feature_dim, "encode: f1 shape mismatch");
        check((fg != nullptr) == cfg_.goal_conditioned,
              cfg_.goal_conditioned ? "encode: goal-conditioned model needs fg"
                                    : "encode: unconditional model got fg");
        if (fg) check(fg->rows == 1 && fg->cols == cfg_.feature_dim, "encode: fg shape mismatch");

        Var in = g.input(f1);
        Var x = linear(g, in, "enc.in");
        x = g.add(x, g.slice_rows(g.param(param("enc.pos")), 0, 1));
        if (fg) {
            Var xg = linear(g, g.input(*fg), "enc.in");
            xg = g.add(xg, g.slice_rows(g.param(param("enc.pos")), 1, 2));
            x = g.concat_rows({x, xg});
        }
        x = g.dropout(x, cfg_.dropout_rate, training, rng);
        for (int b = 0; b < cfg_.n_encoder_blocks; ++b) {
            const std::string pre = "enc.b" + std::to_string(b) + ".";
            Var h = ln(g, x, pre + "ln1");
            Var att = g.attention(linear(g, h, pre + "q"), linear(g, h, pre + "k"),
                                  linear(g, h, pre + "v"), cfg_.n_heads, false);
            att = g.dropout(linear(g, att, pre + "o"), cfg_.dropout_rate, training, rng);
            x = g.add(x, att);
            x = g.add(x, mlp(g, ln(g, x, pre + "ln2"), pre + "mlp", training, rng));
        }
        return ln(g, x, "enc.ln");
    }

    // ---- decoder -----------------------------------------------------------

    // past: rows a_1..a_{t-1} (possibly empty -> 0 rows not representable;
    // pass cols-only via t=1 overload below). Returns decoder features for
    // positions 1..t, one row per predicted step.
    Var decode(Graph& g, Var codes, const TensorT<T>* past, bool training, Rng& rng) {
        const int n_past = past ? past->rows : 0;
        check(n_past < cfg_.horizon, "decode: past length exceeds horizon");
        if (past) check(past->cols == cfg_.action_dim, "decode: action width mismatch");

        Var x = g.param(param("dec.start"));
        if (n_past > 0) {
            Var emb = linear(g, g.input(*past), "dec.act");
            x = g.concat_rows({x, emb});
        }
        x = g.add(x, g.slice_rows(g.param(param("dec.pos")), 0, n_past + 1));
        x = g.dropout(x, cfg_.dropout_rate, training, rng);
        for (int b = 0; b < cfg_.n_decoder_blocks; ++b) {
            const std::string pre = "dec.b" + std::to_string(b) + ".";
            Var h = ln(g, x, pre + "ln1");
            Var self_att = g.attention(linear(g, h, pre + "q"), linear(g, h, pre + "k"),
                                       linear(g, h, pre + "v"), cfg_.n_heads, true);
            self_att = g.dropout(linear(g, self_att, pre + "o"), cfg_.dropout_rate, training, rng);
            x = g.add(x, self_att);
            Var hc = ln(g, x, pre + "ln2");
            Var cross = g.attention(linear(g, hc, pre + "cq"), linear(g, codes, pre + "ck"),
                                    linear(g, codes, pre + "cv"), cfg_.n_heads, false);
            cross = g.dropout(linear(g, cross, pre + "co"), cfg_.dropout_rate, training, rng);
            x = g.add(x, cross);
            x = g.add(x, mlp(g, ln(g, x, pre + "ln3"), pre + "mlp", training, rng));
        }
        return ln(g, x, "dec.ln");
    }

    // Feature for the next step only (position t = past length + 1).
    Var decode_step(Graph& g, Var codes, const TensorT<T>* past, bool training, Rng& rng) {
        Var all = decode(g, codes, past, training, rng);
        const int n = g.value(all).rows;
        return g.slice_rows(all, n - 1, n);
    }

    // ---- CVAE heads (weights shared across steps) --------------------------

    std::pair<Var, Var> cvae_encode(Graph& g, Var a_t, Var ctx) {
        Var h = g.gelu(linear(g, g.concat_cols(a_t, ctx), "cvae.enc.h"));
        Var out = linear(g, h, "cvae.enc.out");
        Var mu = g.slice_cols(out, 0, cfg_.latent_dim);
        TensorT<T> floor(1, cfg_.latent_dim);
        for (auto& v : floor.v) v = T(1e-6);
        Var sigma = g.add_const(
            g.softplus(g.slice_cols(out, cfg_.latent_dim, 2 * cfg_.latent_dim)), floor);
        return {mu, sigma};
    }

    Var cvae_decode(Graph& g, Var z, Var ctx) {
        Var h = g.gelu(linear(g, g.concat_cols(z, ctx), "cvae.dec.h"));
        return linear(g, h, "cvae.dec.out");
    }

    // ---- training objective ------------------------------------------------

    struct LossVars {
        Var recon = -1, kl = -1, total = -1;
        std::vector<double> per_step_recon;
    };

    // actions: [horizon, action_dim], ground-truth deltas a_1..a_T. With
    // posterior_mean the latent is fixed to mu (deterministic validation).
    LossVars forward_train(Graph& g, const TensorT<T>& actions, const TensorT<T>& f1,
                           const TensorT<T>* fg, bool training, Rng& rng,
                           bool posterior_mean = false) {
        check(actions.rows == cfg_.horizon && actions.cols == cfg_.action_dim,
              "forward_train: actions must be [horizon, action_dim]");
        Var codes = encode(g, f1, fg, training, rng);

        // teacher forcing: the decoder sees a_1..a_{T-1} shifted right behind
        // the learned start token and predicts contexts for steps 1..T
        TensorT<T> shifted(cfg_.horizon - 1, cfg_.action_dim);
        for (int r = 0; r + 1 < cfg_.horizon; ++r)
            for (int c = 0; c < cfg_.action_dim; ++c) shifted(r, c) = actions(r, c);
        Var ctx_all = decode(g, codes, cfg_.horizon > 1 ? &shifted : nullptr, training, rng);

        LossVars out;
        const int t0 = cfg_.include_first_step ? 0 : 1;
        TensorT<T> half_l(1, 1);
        half_l(0, 0) = T(-0.5) * T(cfg_.latent_dim);
        for (int t = t0; t < cfg_.horizon; ++t) {
            Var ctx = g.slice_rows(ctx_all, t, t + 1);
            TensorT<T> a_row(1, cfg_.action_dim);
            for (int c = 0; c < cfg_.action_dim; ++c) a_row(0, c) = actions(t, c);
            Var a_t = g.input(a_row);
            auto [mu, sigma] = cvae_encode(g, a_t, ctx);

            TensorT<T> eps(1, cfg_.latent_dim);
            for (auto& v : eps.v) v = posterior_mean ? T(0) : T(rng.normal());
            Var z = g.add(mu, g.mul(sigma, g.input(eps)));
            Var a_hat = cvae_decode(g, z, ctx);

            Var recon_t = g.sum_sq(g.sub(a_t, a_hat));
            Var kl_t = g.add_const(
                g.scale(g.add(g.add(g.sum_sq(mu), g.sum_sq(sigma)),
                              g.scale(g.sum(g.log(sigma)), T(-2))),
                        T(0.5)),
                half_l);
            out.per_step_recon.push_back(static_cast<double>(g.value(recon_t)(0, 0)));
            out.recon = out.recon < 0 ? recon_t : g.add(out.recon, recon_t);
            out.kl = out.kl < 0 ? kl_t : g.add(out.kl, kl_t);
        }
        out.total = g.add(out.recon, g.scale(out.kl, T(cfg_.kl_weight)));
        return out;
    }

    // ---- inference ---------------------------------------------------------

    // Autoregressive rollout from the standard-normal prior; returns the T
    // predicted absolute poses (the start pose is not included).
    std::vector<Pose6> sample_trajectory(const std::vector<double>& f1,
                                         const std::vector<double>* fg, const Pose6& start,
                                         Rng& rng) {
        TensorT<T> f1t = feature_row(f1);
        std::optional<TensorT<T>> fgt;
        if (fg) fgt = feature_row(*fg);

        TensorT<T> past(cfg_.horizon, cfg_.action_dim);  // filled row by row
        std::vector<Pose6> out;
        Pose6 cur = start;
        Rng drop_rng(0);  // inference: dropout disabled, rng unused there
        for (int t = 0; t < cfg_.horizon; ++t) {
            Graph g;
            Var codes = encode(g, f1t, fgt ? &*fgt : nullptr, false, drop_rng);
            TensorT<T> p(t > 0 ? t : 1, cfg_.action_dim);
            for (int r = 0; r < t; ++r)
                for (int c = 0; c < cfg_.action_dim; ++c) p(r, c) = past(r, c);
            Var ctx = decode_step(g, codes, t > 0 ? &p : nullptr, false, drop_rng);

            TensorT<T> z(1, cfg_.latent_dim);
            for (auto& v : z.v) v = T(rng.normal());
            Var a_hat = cvae_decode(g, g.input(z), ctx);
            const auto& a = g.value(a_hat);
            for (int c = 0; c < cfg_.action_dim; ++c) past(t, c) = a(0, c);

            DeltaAction d;
            d.dpos = {double(a(0, 0)), double(a(0, 1)), double(a(0, 2))};
            d.drot = {double(a(0, 3)), double(a(0, 4)), double(a(0, 5))};
            cur = pose_apply(cur, d);
            out.push_back(cur);
        }
        return out;
    }

    // ---- checkpointing -----------------------------------------------------

    Checkpoint to_checkpoint() const {
        Checkpoint c;
        c.config = cfg_.to_kv();
        for (const auto& p : params_)
            c.tensors.push_back({p->name, p->value.template cast<double>()});
        return c;
    }

    static ModelT from_checkpoint(const Checkpoint& c) {
        ModelT m(ModelConfig::from_kv(c.config), 0);
        for (auto& p : m.params_) {
            const TensorT<double>* t = c.find(p->name);
            check(t != nullptr, "checkpoint: missing parameter " + p->name);
            check(t->rows == p->value.rows && t->cols == p->value.cols,
                  "checkpoint: shape mismatch for " + p->name);
            p->value = t->template cast<T>();
        }
        return m;
    }

private:
    ModelConfig cfg_;
    std::vector<std::unique_ptr<ParamT<T>>> params_;
    std::map<std::string, size_t> index_;

    void add_param(const std::string& name, int r, int c) {
        index_[name] = params_.size();
        params_.push_back(std::make_unique<ParamT<T>>(name, r, c));
    }

    void add_linear(const std::string& name, int din, int dout) {
        add_param(name + ".w", din, dout);
        add_param(name + ".b", 1, dout);
    }

    void add_ln(const std::string& name) {
        add_param(name + ".g", 1, cfg_.d_model);
        add_param(name + ".b", 1, cfg_.d_model);
    }

    void build_params() {
        const int d = cfg_.d_model, hid = 2 * cfg_.d_model;
        add_linear("enc.in", cfg_.feature_dim, d);
        add_param("enc.pos", 2, d);
        for (int b = 0; b < cfg_.n_encoder_blocks; ++b) {
            const std::string pre = "enc.b" + std::to_string(b) + ".";
            add_ln(pre + "ln1");
            for (const char* n : {"q", "k", "v", "o"}) add_linear(pre + n, d, d);
            add_ln(pre + "ln2");
            add_linear(pre + "mlp.h", d, hid);
            add_linear(pre + "mlp.out", hid, d);
        }
        add_ln("enc.ln");

        add_param("dec.start", 1, d);
        add_linear("dec.act", cfg_.action_dim, d);
        add_param("dec.pos", cfg_.horizon, d);
        for (int b = 0; b < cfg_.n_decoder_blocks; ++b) {
            const std::string pre = "dec.b" + std::to_string(b) + ".";
            add_ln(pre + "ln1");
            for (const char* n : {"q", "k", "v", "o"}) add_linear(pre + n, d, d);
            add_ln(pre + "ln2");
            for (const char* n : {"cq", "ck", "cv", "co"}) add_linear(pre + n, d, d);
            add_ln(pre + "ln3");
            add_linear(pre + "mlp.h", d, hid);
            add_linear(pre + "mlp.out", hid, d);
        }
        add_ln("dec.ln");

        add_linear("cvae.enc.h", cfg_.action_dim + d, d);
        add_linear("cvae.enc.out", d, 2 * cfg_.latent_dim);
        add_linear("cvae.dec.h", cfg_.latent_dim + d, d);
        add_linear("cvae.dec.out", d, cfg_.action_dim);
    }

    Var linear(Graph& g, Var x, const std::string& name) {
        return g.add(g.matmul(x, g.param(param(name + ".w"))), g.param(param(name + ".b")));
    }

    Var ln(Graph& g, Var x, const std::string& name) {
        return g.layer_norm(x, g.param(param(name + ".g")), g.param(param(name + ".b")));
    }

    Var mlp(Graph& g, Var x, const std::string& name, bool training, Rng& rng) {
        Var h = g.gelu(linear(g, x, name + ".h"));
        return g.dropout(linear(g, h, name + ".out"), cfg_.dropout_rate, training, rng);
    }

    TensorT<T> feature_row(const std::vector<double>& f) const {
        check(static_cast<int>(f.size()) == cfg_.feature_dim, "feature width mismatch");
        TensorT<T> t(1, cfg_.feature_dim);
        for (size_t i = 0; i < f.size(); ++i) t.v[i] = T(f[i]);
        return t;
    }
};

using Model32 = ModelT<float>;
using Model64 = ModelT<double>;

}  // namespace htp
