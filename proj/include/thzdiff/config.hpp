#pragma once

#include "thzdiff/dataset.hpp"
#include "thzdiff/diffusion.hpp"
#include "thzdiff/dit.hpp"
#include "thzdiff/geometry.hpp"
#include "thzdiff/gscm.hpp"
#include "thzdiff/training.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace thz {

struct SplitConfig {
    double test_fraction = 0.1;
    double cell_edge = 0.5;  // meters
};

struct PathsConfig {
    std::string data;        // directory holding train.thzc / test.thzc
    std::string checkpoint;
};

// Full run description. The DiT input dims always follow geometry.n_rx / geometry.n_tx.
struct RunConfig {
    ArrayLayout geometry;
    GscmConfig gscm;
    PositionRegion region;
    DitConfig dit;
    DiffusionSchedule schedule;
    TrainConfig training;
    SplitConfig split;
    PathsConfig paths;
    std::uint64_t seed = 0;

    // Throws ConfigError whose field() is the dotted path of the offending key.
    void validate() const;
};

// Strict JSON schema: every key optional (defaults above), unknown keys and wrong types raise ConfigError.
// Spacings are given in wavelengths (intra_spacing_wavelengths, inter_spacing_wavelengths).
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::string& path);

std::string to_json(const RunConfig& config);

}  // namespace thz
