#pragma once

#include <cmath>
#include <cstdint>

namespace htp {

// Keyed counter-based generator (splitmix64 finalizer). Output depends only
// on (key, counter), so streams can be re-derived from scratch at any step —
// this is what makes checkpoint-resume and --jobs independence exact.
class Rng {
public:
    explicit Rng(std::uint64_t key, std::uint64_t counter = 0)
        : key_(key), counter_(counter) {}

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Derive an independent stream; used per-trial / per-step.
    static std::uint64_t derive(std::uint64_t key, std::uint64_t stream) {
        return mix(key ^ mix(stream + 0x632be59bd9b4e019ULL));
    }
    Rng fork(std::uint64_t stream) const { return Rng(derive(key_, stream)); }

    std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    // standard normal, Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace htp
