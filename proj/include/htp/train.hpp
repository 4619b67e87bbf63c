#pragma once

#include <string>
#include <vector>

#include "htp/data.hpp"
#include "htp/model.hpp"

namespace htp {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 16;
    int total_steps = 2000;
    int kl_warmup_steps = 0;  // linear ramp of the KL weight; 0 = no warm-up
    std::uint64_t seed = 0;
    int checkpoint_interval = 500;
    int log_interval = 100;
    double grad_clip = 1.0;
    bool f64 = false;  // double-precision verification mode (slow)
    // worker threads for batch-gradient computation; batch composition and
    // noise draws are independent of this, but float summation order is only
    // fixed for a given value, so bit-level claims assume jobs = 1
    int jobs = 1;

    void validate() const;
    KvMap to_kv() const;
    static TrainConfig from_kv(const KvMap& kv);
};

struct TrainRecord {
    long step = 0;
    double recon = 0, kl = 0, total = 0;
    double wall_s = 0;  // informational only; excluded from determinism claims
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TrainRecord> log;
};

// Seeded mini-batch training. Batch composition and every noise draw are
// derived from (seed, absolute step), so a resumed run reproduces an
// uninterrupted one exactly. Throws on NaN/Inf loss with step diagnostics.
// When checkpoint_path is nonempty, intermediate checkpoints land there;
// when log_path is nonempty, the metrics log is appended there as text.
TrainResult train(const ModelConfig& mc, const TrainConfig& tc, const Dataset& ds,
                  const std::string& resume_from = "", const std::string& checkpoint_path = "",
                  const std::string& log_path = "");

struct ValMetrics {
    double recon = 0, kl = 0;
    int clips = 0;
};

// Teacher-forced posterior-mean metrics on the val split; deterministic.
ValMetrics evaluate_validation(const Checkpoint& ckpt, const Dataset& ds);

// Metrics-log text: config echo as comments, then one record per line.
std::string format_train_log(const TrainConfig& tc, const ModelConfig& mc,
                             const std::vector<TrainRecord>& log);

}  // namespace htp
