#include "htp/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace htp {

void TrainConfig::validate() const {
    check(learning_rate > 0, "train config: learning rate must be positive");
    check(batch_size > 0, "train config: batch size must be positive");
    check(total_steps > 0, "train config: total steps must be positive");
    check(kl_warmup_steps >= 0, "train config: negative warm-up");
    check(kl_warmup_steps <= total_steps, "train config: warm-up exceeds total steps");
    check(checkpoint_interval > 0 && log_interval > 0, "train config: intervals must be positive");
    check(grad_clip > 0, "train config: grad clip must be positive");
    check(jobs >= 1, "train config: jobs must be >= 1");
}

KvMap TrainConfig::to_kv() const {
    KvMap kv;
    kv.set("learning_rate", learning_rate);
    kv.set("batch_size", static_cast<long long>(batch_size));
    kv.set("total_steps", static_cast<long long>(total_steps));
    kv.set("kl_warmup_steps", static_cast<long long>(kl_warmup_steps));
    kv.set("seed", static_cast<long long>(seed));
    kv.set("checkpoint_interval", static_cast<long long>(checkpoint_interval));
    kv.set("log_interval", static_cast<long long>(log_interval));
    kv.set("grad_clip", grad_clip);
    kv.set("f64", static_cast<long long>(f64 ? 1 : 0));
    kv.set("jobs", static_cast<long long>(jobs));
    return kv;
}

TrainConfig TrainConfig::from_kv(const KvMap& kv) {
    TrainConfig c;
    c.learning_rate = kv.get_double("learning_rate");
    c.batch_size = static_cast<int>(kv.get_int("batch_size"));
    c.total_steps = static_cast<int>(kv.get_int("total_steps"));
    c.kl_warmup_steps = static_cast<int>(kv.get_int("kl_warmup_steps"));
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
    c.checkpoint_interval = static_cast<int>(kv.get_int("checkpoint_interval"));
    c.log_interval = static_cast<int>(kv.get_int("log_interval"));
    c.grad_clip = kv.get_double("grad_clip");
    c.f64 = kv.get_int("f64") != 0;
    c.jobs = static_cast<int>(kv.get_int_or("jobs", 1));
    c.validate();
    return c;
}

namespace {

constexpr std::uint64_t kBatchStream = 0xba7c4;
constexpr std::uint64_t kNoiseStream = 0xf0a2e;

template <typename T>
struct ClipTensors {
    TensorT<T> actions, f1, fg;
    bool has_fg = false;
};

template <typename T>
std::vector<ClipTensors<T>> prepare_clips(const Dataset& ds, const ModelConfig& mc) {
    std::vector<ClipTensors<T>> out(ds.clips.size());
    for (size_t i = 0; i < ds.clips.size(); ++i) {
        const Clip& c = ds.clips[i];
        check(static_cast<int>(c.poses.size()) == mc.horizon + 1,
              "train: clip horizon mismatch for clip " + std::to_string(c.id));
        check(static_cast<int>(c.f1.size()) == mc.feature_dim,
              "train: feature width mismatch for clip " + std::to_string(c.id));
        out[i].actions = actions_from_poses(c.poses).cast<T>();
        out[i].f1 = TensorT<T>(1, mc.feature_dim);
        for (int j = 0; j < mc.feature_dim; ++j) out[i].f1(0, j) = T(c.f1[j]);
        if (mc.goal_conditioned) {
            check(static_cast<int>(c.fg.size()) == mc.feature_dim,
                  "train: goal-conditioned model but clip " + std::to_string(c.id) +
                      " has no goal feature");
            out[i].fg = TensorT<T>(1, mc.feature_dim);
            for (int j = 0; j < mc.feature_dim; ++j) out[i].fg(0, j) = T(c.fg[j]);
            out[i].has_fg = true;
        }
    }
    return out;
}

template <typename T>
Checkpoint make_checkpoint(ModelT<T>& model, const AdamStateT<T>& opt, const TrainConfig& tc,
                           long step) {
    Checkpoint c = model.to_checkpoint();
    auto& params = model.params();
    for (size_t i = 0; i < params.size(); ++i) {
        c.tensors.push_back({"opt.m." + params[i]->name, opt.m[i].template cast<double>()});
        c.tensors.push_back({"opt.v." + params[i]->name, opt.v[i].template cast<double>()});
    }
    c.extra.set("step", static_cast<long long>(step));
    c.extra.set("adam_step", static_cast<long long>(opt.step));
    c.extra.set("train_seed", static_cast<long long>(tc.seed));
    return c;
}

template <typename T>
TrainResult train_impl(const ModelConfig& mc, const TrainConfig& tc, const Dataset& ds,
                       const std::string& resume_from, const std::string& checkpoint_path,
                       const std::string& log_path) {
    check(!ds.train_idx.empty(), "train: empty train split");
    check(mc.action_dim == 6, "train: only pose-delta actions are produced by this dataset");

    ModelT<T> model(mc, tc.seed);
    AdamStateT<T> opt;
    opt.init(model.params());
    long start_step = 0;
    if (!resume_from.empty()) {
        Checkpoint c = load_checkpoint(resume_from);
        model = ModelT<T>::from_checkpoint(c);
        auto& params = model.params();
        for (size_t i = 0; i < params.size(); ++i) {
            const auto* m = c.find("opt.m." + params[i]->name);
            const auto* v = c.find("opt.v." + params[i]->name);
            check(m && v, "train: checkpoint lacks optimizer state for " + params[i]->name);
            opt.m[i] = m->template cast<T>();
            opt.v[i] = v->template cast<T>();
        }
        opt.step = c.extra.get_int("adam_step");
        start_step = c.extra.get_int("step");
        check(start_step < tc.total_steps, "train: checkpoint already at/after total_steps");
    }

    const auto clips = prepare_clips<T>(ds, mc);
    const double beta = mc.kl_weight;
    const int n_train = static_cast<int>(ds.train_idx.size());
    const auto t_start = std::chrono::steady_clock::now();

    std::vector<std::unique_ptr<ModelT<T>>> workers;
    const int n_workers = std::min(tc.jobs, tc.batch_size);
    if (n_workers > 1)
        for (int w = 0; w < n_workers; ++w)
            workers.push_back(std::make_unique<ModelT<T>>(mc, tc.seed));

    TrainResult result;
    for (long step = start_step; step < tc.total_steps; ++step) {
        // KL warm-up: linear ramp over the first kl_warmup_steps
        const double this_step_kl =
            tc.kl_warmup_steps > 0
                ? beta * std::min(1.0, static_cast<double>(step + 1) / tc.kl_warmup_steps)
                : beta;
        model.set_kl_weight(this_step_kl);

        Rng batch_rng(Rng::derive(Rng::derive(tc.seed, kBatchStream), step));
        std::vector<int> batch(tc.batch_size);
        for (int j = 0; j < tc.batch_size; ++j)
            batch[j] = ds.train_idx[batch_rng.uniform_index(n_train)];

        std::vector<double> e_recon(tc.batch_size), e_kl(tc.batch_size), e_total(tc.batch_size);
        auto run_element = [&](ModelT<T>& m, int j) {
            const auto& ct = clips[batch[j]];
            Rng noise(Rng::derive(Rng::derive(tc.seed, kNoiseStream),
                                  static_cast<std::uint64_t>(step) * tc.batch_size + j));
            GraphT<T> g;
            auto loss =
                m.forward_train(g, ct.actions, ct.f1, ct.has_fg ? &ct.fg : nullptr, true, noise);
            g.backward(g.scale(loss.total, T(1) / T(tc.batch_size)));
            e_recon[j] = static_cast<double>(g.value(loss.recon)(0, 0));
            e_kl[j] = static_cast<double>(g.value(loss.kl)(0, 0));
            e_total[j] = static_cast<double>(g.value(loss.total)(0, 0));
        };

        model.zero_grad();
        if (workers.empty()) {
            for (int j = 0; j < tc.batch_size; ++j) run_element(model, j);
        } else {
            const int nw = static_cast<int>(workers.size());
            for (auto& w : workers) {
                w->set_kl_weight(this_step_kl);
                for (size_t i = 0; i < w->params().size(); ++i)
                    w->params()[i]->value = model.params()[i]->value;
                w->zero_grad();
            }
            std::vector<std::thread> pool;
            for (int wi = 0; wi < nw; ++wi)
                pool.emplace_back([&, wi] {
                    for (int j = wi; j < tc.batch_size; j += nw)
                        run_element(*workers[wi], j);
                });
            for (auto& t : pool) t.join();
            // fixed worker order keeps the reduction deterministic for a
            // given jobs value
            for (auto& w : workers)
                for (size_t i = 0; i < w->params().size(); ++i)
                    for (size_t k = 0; k < w->params()[i]->grad.v.size(); ++k)
                        model.params()[i]->grad.v[k] += w->params()[i]->grad.v[k];
        }
        double recon = 0, kl = 0, total = 0;
        for (int j = 0; j < tc.batch_size; ++j) {
            recon += e_recon[j];
            kl += e_kl[j];
            total += e_total[j];
        }
        recon /= tc.batch_size;
        kl /= tc.batch_size;
        total /= tc.batch_size;
        if (!std::isfinite(total))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                     " (recon " + std::to_string(recon) + ", kl " +
                                     std::to_string(kl) + ")");

        // global gradient-norm clip
        double norm2 = 0;
        for (auto& p : model.params())
            for (auto gv : p->grad.v) norm2 += static_cast<double>(gv) * gv;
        const double norm = std::sqrt(norm2);
        if (norm > tc.grad_clip) {
            const T s = T(tc.grad_clip / norm);
            for (auto& p : model.params())
                for (auto& gv : p->grad.v) gv *= s;
        }
        adam_step(model.params(), opt, T(tc.learning_rate));

        if (step % tc.log_interval == 0 || step + 1 == tc.total_steps) {
            TrainRecord r;
            r.step = step;
            r.recon = recon;
            r.kl = kl;
            r.total = total;
            r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                           .count();
            result.log.push_back(r);
        }
        if (!checkpoint_path.empty() &&
            (step + 1) % tc.checkpoint_interval == 0 && step + 1 < tc.total_steps) {
            save_checkpoint(make_checkpoint(model, opt, tc, step + 1), checkpoint_path, !tc.f64);
        }
    }

    model.set_kl_weight(beta);  // checkpoint carries the configured weight
    result.checkpoint = make_checkpoint(model, opt, tc, tc.total_steps);
    if (!checkpoint_path.empty()) save_checkpoint(result.checkpoint, checkpoint_path, !tc.f64);
    if (!log_path.empty()) {
        std::ofstream os(log_path, std::ios::app);
        check(bool(os), "train: cannot open log " + log_path);
        os << format_train_log(tc, mc, result.log);
    }
    return result;
}

}  // namespace

TrainResult train(const ModelConfig& mc, const TrainConfig& tc, const Dataset& ds,
                  const std::string& resume_from, const std::string& checkpoint_path,
                  const std::string& log_path) {
    mc.validate();
    tc.validate();
    if (tc.f64) return train_impl<double>(mc, tc, ds, resume_from, checkpoint_path, log_path);
    return train_impl<float>(mc, tc, ds, resume_from, checkpoint_path, log_path);
}

ValMetrics evaluate_validation(const Checkpoint& ckpt, const Dataset& ds) {
    check(!ds.val_idx.empty(), "evaluate_validation: empty val split");
    Model64 model = Model64::from_checkpoint(ckpt);
    const ModelConfig& mc = model.config();
    ValMetrics out;
    Rng unused(0);
    for (int idx : ds.val_idx) {
        const Clip& c = ds.clips[idx];
        TensorT<double> actions = actions_from_poses(c.poses);
        TensorT<double> f1(1, mc.feature_dim), fg(1, mc.feature_dim);
        for (int j = 0; j < mc.feature_dim; ++j) f1(0, j) = c.f1[j];
        if (mc.goal_conditioned)
            for (int j = 0; j < mc.feature_dim; ++j) fg(0, j) = c.fg[j];
        Graph64 g;
        auto loss = model.forward_train(g, actions, f1, mc.goal_conditioned ? &fg : nullptr,
                                        false, unused, /*posterior_mean=*/true);
        out.recon += g.value(loss.recon)(0, 0);
        out.kl += g.value(loss.kl)(0, 0);
        ++out.clips;
    }
    out.recon /= out.clips;
    out.kl /= out.clips;
    return out;
}

std::string format_train_log(const TrainConfig& tc, const ModelConfig& mc,
                             const std::vector<TrainRecord>& log) {
    std::ostringstream os;
    const KvMap tkv = tc.to_kv(), mkv = mc.to_kv();
    os << "# train config\n";
    for (const auto& [k, v] : tkv.entries()) os << "# " << k << " = " << v << "\n";
    os << "# model config\n";
    for (const auto& [k, v] : mkv.entries()) os << "# " << k << " = " << v << "\n";
    os << "# step recon kl total wall_s\n";
    for (const auto& r : log)
        os << r.step << " " << format_double(r.recon) << " " << format_double(r.kl) << " "
           << format_double(r.total) << " " << format_double(r.wall_s) << "\n";
    return os.str();
}

}  // namespace htp
