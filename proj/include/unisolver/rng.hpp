#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace unisolver {

// Deterministic random source. The mt19937_64 engine is bit-exact across
// platforms; the distribution transforms below are hand-rolled because the
// std::*_distribution classes are implementation-defined and would break
// byte-identical dataset replay.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
    std::uint64_t uniform_int(std::uint64_t n);

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; the second draw of each pair is cached.
    double normal();

    // Derives an independent per-item stream seed from (seed, index) using
    // splitmix64 mixing, so parallel sample generation stays reproducible.
    static std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index);

    std::string serialize_state() const;
    void restore_state(const std::string& text);

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// In-place Fisher-Yates shuffle driven by the deterministic Rng.
template <typename T>
void fisher_yates(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace unisolver
