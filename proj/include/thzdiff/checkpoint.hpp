#pragma once

#include "thzdiff/diffusion.hpp"
#include "thzdiff/dit.hpp"
#include "thzdiff/geometry.hpp"
#include "thzdiff/params.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace thz {

// Everything `sample` needs besides the weights.
struct CheckpointMeta {
    std::uint32_t k_rx = 1;
    std::uint32_t k_tx = 1;
    double normalization_scalar = 1.0;
    DiffusionSchedule schedule;
    Vec3 tx_origin = Vec3::Zero();
};

struct Checkpoint {
    DitConfig config;
    CheckpointMeta meta;
    ParameterStore params;
    ParameterStore ema;
    AdamState adam;
};

// "THZW" v1: magic, u32 version, DitConfig (u32 n_rx, n_tx, patch, embed_dim, depth, n_heads; f64 mlp_ratio,
// sigma_data), metadata (u32 k_rx, k_tx; f64 scalar, horizon, sigma_min; u32 n_steps; f64 tx_origin[3]),
// u64 Adam step, u32 record count, then records (u32 name length, name, u32 rank, u64 dims, f32 data).
// Record names carry a raw/, ema/, adam_m/ or adam_v/ prefix.
std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws FormatError on bad magic/version/truncation and when any record shape disagrees with the config.
Checkpoint parse_checkpoint(std::string_view bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace thz
