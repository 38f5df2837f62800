#pragma once

#include <cstdint>
#include <random>

namespace thz {

using Rng = std::mt19937_64;

// Independent stream for work item `index` under `master_seed`.
//
// Counter scheme: the engine is seeded with splitmix64(master_seed + (index + 1) * 0x9E3779B97F4A7C15),
// so every index gets a fixed stream regardless of how items are scheduled across workers.
Rng stream_rng(std::uint64_t master_seed, std::uint64_t index);

std::uint64_t splitmix64(std::uint64_t x);

double standard_normal(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
// Zero-mean Laplacian with scale b (density exp(-|x|/b) / 2b).
double laplace(Rng& rng, double scale);

}  // namespace thz
