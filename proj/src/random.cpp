#include "thzdiff/random.hpp"

#include <cmath>

namespace thz {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

Rng stream_rng(std::uint64_t master_seed, std::uint64_t index) {
    return Rng(splitmix64(master_seed + (index + 1) * 0x9E3779B97F4A7C15ull));
}

double standard_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

double uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

double laplace(Rng& rng, double scale) {
    // inverse CDF on u in (-1/2, 1/2)
    double u = uniform(rng, -0.5, 0.5);
    double sign = u < 0.0 ? -1.0 : 1.0;
    return -scale * sign * std::log1p(-2.0 * std::abs(u));
}

}  // namespace thz
