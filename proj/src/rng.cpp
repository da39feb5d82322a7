#include "unisolver/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace unisolver {

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // u1 in (0,1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::derive_stream(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer over a seed/index combination.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::string Rng::serialize_state() const {
    std::ostringstream os;
    os << engine_;
    if (have_spare_) os << " 1 " << spare_;
    else os << " 0 0";
    return os.str();
}

void Rng::restore_state(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
    int flag = 0;
    is >> flag >> spare_;
    if (!is) throw std::runtime_error("Rng: malformed state string");
    have_spare_ = (flag != 0);
}

}  // namespace unisolver
