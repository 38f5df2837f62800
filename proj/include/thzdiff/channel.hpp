#pragma once

#include "thzdiff/geometry.hpp"

#include <Eigen/Dense>

#include <complex>
#include <optional>
#include <vector>

namespace thz {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// One propagation path. Gain, phase and angles are referenced to the full-array origins;
// per-element and per-subarray quantities are re-derived from `scatterer` by swm/hpsm.
struct Path {
    // |alpha| at the array origins: sqrt(N_r N_t) * path_gain * prod(lambda / (4 pi d_segment)). The array
    // gain offsets the unit-norm steering vectors so PWM entries carry the per-element free-space amplitude.
    double gain_magnitude = 0.0;
    // (2 pi / lambda) * origin-to-origin path length, wrapped to [0, 2 pi).
    double global_phase = 0.0;
    // Single interaction point; empty for the line-of-sight path.
    std::optional<Vec3> scatterer;
    // Multiplies the free-space segment amplitudes (reflection loss, path-loss-exponent correction).
    double path_gain = 1.0;
    // Departure direction (Tx -> first point) and arrival direction (Rx -> last point).
    Direction aod;
    Direction aoa;

    bool is_los() const noexcept { return !scatterer.has_value(); }
};

struct PathSet {
    std::vector<Path> paths;
    bool includes_los = false;
};

// Fills gain, phase and angles of a path from the geometry. Throws DegenerateGeometryError if the
// scatterer coincides with an array origin.
Path resolve_path(const ArrayGeometry& geometry, std::optional<Vec3> scatterer, double path_gain);

enum class Domain { spatial, beamspace };

struct ChannelMatrix {
    CMatrix entries;  // N_r x N_t
    Domain domain = Domain::spatial;
};

// Subarray selector for steering_vector: a subarray index, or the whole array.
inline constexpr int kFullArray = -1;

// Response of the selected (sub)array: element k is exp(-j k0 <r_k - ref, u>) / sqrt(n), with
// ref the (sub)array centroid. Throws std::out_of_range for a bad subarray index.
CVector steering_vector(const ArrayGeometry& geometry, Side side, int subarray, const Direction& dir);

// Far-field model: H = sum_l alpha_l a_r a_t^H with alpha_l = |alpha_l| exp(-j global_phase).
// The Rx factor is evaluated for the wave travelling toward the array, i.e. conj(a_r(aoa)).
ChannelMatrix pwm_channel(const PathSet& paths, const ArrayGeometry& geometry);

// Exact per-antenna-pair spherical wavefront model.
ChannelMatrix swm_channel(const PathSet& paths, const ArrayGeometry& geometry);

// Hybrid model: planar within subarrays, spherical (center-to-center) across subarrays. Block gains carry
// the subarray array gain sqrt(N_r^sub N_t^sub), as the full-array gain does for pwm_channel.
ChannelMatrix hpsm_channel(const PathSet& paths, const ArrayGeometry& geometry);

}  // namespace thz
