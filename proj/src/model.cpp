#include "htp/model.hpp"

#include <fstream>

namespace htp {

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.d_model = 512;
    c.n_heads = 8;
    c.n_encoder_blocks = 4;
    c.n_decoder_blocks = 4;
    c.latent_dim = 64;
    return c;
}

void ModelConfig::validate() const {
    check(d_model > 0 && n_heads > 0 && n_encoder_blocks > 0 && n_decoder_blocks > 0 &&
              latent_dim > 0 && action_dim > 0 && feature_dim > 0,
          "model config: all dims must be positive");
    check(d_model % n_heads == 0, "model config: d_model not divisible by n_heads");
    check(horizon >= 2, "model config: horizon must be >= 2");
    check(dropout_rate >= 0.0 && dropout_rate < 1.0, "model config: dropout outside [0,1)");
    check(kl_weight >= 0.0, "model config: negative kl_weight");
}

KvMap ModelConfig::to_kv() const {
    KvMap kv;
    kv.set("d_model", static_cast<long long>(d_model));
    kv.set("n_heads", static_cast<long long>(n_heads));
    kv.set("n_encoder_blocks", static_cast<long long>(n_encoder_blocks));
    kv.set("n_decoder_blocks", static_cast<long long>(n_decoder_blocks));
    kv.set("latent_dim", static_cast<long long>(latent_dim));
    kv.set("horizon", static_cast<long long>(horizon));
    kv.set("action_dim", static_cast<long long>(action_dim));
    kv.set("feature_dim", static_cast<long long>(feature_dim));
    kv.set("dropout_rate", dropout_rate);
    kv.set("goal_conditioned", static_cast<long long>(goal_conditioned ? 1 : 0));
    kv.set("kl_weight", kl_weight);
    kv.set("include_first_step", static_cast<long long>(include_first_step ? 1 : 0));
    return kv;
}

ModelConfig ModelConfig::from_kv(const KvMap& kv) {
    ModelConfig c;
    c.d_model = static_cast<int>(kv.get_int("d_model"));
    c.n_heads = static_cast<int>(kv.get_int("n_heads"));
    c.n_encoder_blocks = static_cast<int>(kv.get_int("n_encoder_blocks"));
    c.n_decoder_blocks = static_cast<int>(kv.get_int("n_decoder_blocks"));
    c.latent_dim = static_cast<int>(kv.get_int("latent_dim"));
    c.horizon = static_cast<int>(kv.get_int("horizon"));
    c.action_dim = static_cast<int>(kv.get_int("action_dim"));
    c.feature_dim = static_cast<int>(kv.get_int("feature_dim"));
    c.dropout_rate = kv.get_double("dropout_rate");
    c.goal_conditioned = kv.get_int("goal_conditioned") != 0;
    c.kl_weight = kv.get_double("kl_weight");
    c.include_first_step = kv.get_int_or("include_first_step", 0) != 0;
    c.validate();
    return c;
}

TensorT<double> actions_from_poses(const std::vector<Pose6>& poses) {
    check(poses.size() >= 2, "actions_from_poses: need at least 2 poses");
    TensorT<double> out(static_cast<int>(poses.size()) - 1, 6);
    for (size_t t = 1; t < poses.size(); ++t) {
        const DeltaAction d = pose_diff(poses[t], poses[t - 1]);
        const int r = static_cast<int>(t) - 1;
        out(r, 0) = d.dpos.x();
        out(r, 1) = d.dpos.y();
        out(r, 2) = d.dpos.z();
        out(r, 3) = d.drot.x();
        out(r, 4) = d.drot.y();
        out(r, 5) = d.drot.z();
    }
    return out;
}

const TensorT<double>* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t.value;
    return nullptr;
}

namespace {
constexpr char kMagic[4] = {'H', 'C', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kTagF32 = 4;
constexpr std::uint32_t kTagF64 = 8;
}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path, bool as_f32) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    check(bool(os), "checkpoint: cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_string(os, ckpt.config.serialize());
    write_string(os, ckpt.extra.serialize());
    write_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        write_string(os, t.name);
        write_u32(os, as_f32 ? kTagF32 : kTagF64);
        write_u32(os, static_cast<std::uint32_t>(t.value.rows));
        write_u32(os, static_cast<std::uint32_t>(t.value.cols));
        if (as_f32) {
            for (double v : t.value.v) {
                const float f = static_cast<float>(v);
                os.write(reinterpret_cast<const char*>(&f), sizeof f);
            }
        } else {
            os.write(reinterpret_cast<const char*>(t.value.v.data()),
                     static_cast<std::streamsize>(t.value.v.size() * sizeof(double)));
        }
    }
    check(bool(os), "checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(bool(is), "checkpoint: cannot open: " + path);
    char magic[4] = {};
    is.read(magic, 4);
    check(is.gcount() == 4 && std::equal(magic, magic + 4, kMagic),
          "checkpoint: bad magic in " + path);
    const std::uint32_t version = read_u32(is);
    check(version == kVersion, "checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    c.config = KvMap::parse(read_string(is));
    c.extra = KvMap::parse(read_string(is));
    const std::uint32_t n = read_u32(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        NamedTensor t;
        t.name = read_string(is);
        const std::uint32_t tag = read_u32(is);
        check(tag == kTagF32 || tag == kTagF64, "checkpoint: unknown dtype tag");
        const int rows = static_cast<int>(read_u32(is));
        const int cols = static_cast<int>(read_u32(is));
        check(rows > 0 && cols > 0, "checkpoint: bad tensor shape");
        t.value = TensorT<double>(rows, cols);
        if (tag == kTagF32) {
            for (auto& v : t.value.v) {
                float f;
                is.read(reinterpret_cast<char*>(&f), sizeof f);
                v = static_cast<double>(f);
            }
        } else {
            is.read(reinterpret_cast<char*>(t.value.v.data()),
                    static_cast<std::streamsize>(t.value.v.size() * sizeof(double)));
        }
        check(bool(is), "checkpoint: truncated file: " + path);
        c.tensors.push_back(std::move(t));
    }
    return c;
}

}  // namespace htp
