#pragma once

#include "thzdiff/beamspace.hpp"
#include "thzdiff/geometry.hpp"
#include "thzdiff/gscm.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace thz {

// Real 2 x N_r x N_t stack (real plane, then imaginary plane; row-major within a plane).
Eigen::VectorXd stack_channel(const CMatrix& h);
CMatrix unstack_channel(const Eigen::VectorXd& tensor, int n_rx, int n_tx);

struct ChannelSample {
    GeometryCondition condition;
    Eigen::VectorXd tensor;
};

struct DatasetHeader {
    std::uint32_t version = 1;
    std::uint32_t n_rx = 0;
    std::uint32_t n_tx = 0;
    std::uint32_t k_rx = 1;
    std::uint32_t k_tx = 1;
    std::uint32_t condition_dim = kConditionDim;
    std::uint64_t sample_count = 0;
    double normalization_scalar = 1.0;
    std::uint64_t master_seed = 0;

    std::size_t tensor_size() const noexcept { return 2ull * n_rx * n_tx; }
};

struct Dataset {
    DatasetHeader header;
    std::vector<ChannelSample> samples;
};

// Axis-aligned box of absolute Rx positions, meters.
struct PositionRegion {
    Vec3 lo = Vec3(2.0, -2.0, -0.5);
    Vec3 hi = Vec3(10.0, 2.0, 0.5);

    void validate() const;
};

// One sample per index, each from stream_rng(master_seed, index): uniform Rx position in the region,
// GSCM paths, SWM ground truth, block-DFT beamspace, real/imag stack, condition vector.
// Degenerate-geometry errors are rethrown with the sample index in the message.
Dataset build_dataset(std::uint64_t master_seed, const ArrayGeometry& geometry, const GscmConfig& gscm,
                      const PositionRegion& region, std::size_t n);

// Divides every tensor by s = mean_i ||tensor_i||_F / sqrt(2 N_r N_t) and folds s into the header
// scalar. Returns s. Throws std::invalid_argument for an empty or all-zero dataset.
double normalize(Dataset& dataset);

// Position-cell-disjoint split: Rx positions are hashed to cubic cells of edge `cell_edge` and whole
// cells go to the test set (shuffled with the header seed) until its size is within +-2 percentage
// points of the request. Throws InsufficientDataError when that cannot be met.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, double cell_edge = 0.5);

// Cell key used by split().
std::array<long long, 3> position_cell(const GeometryCondition& c, double cell_edge);

// Bit-exact "THZC" file format. Conditions and tensors are stored as f32.
std::string serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(std::string_view bytes);
void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace thz
