#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace thz {

using Vec3 = Eigen::Vector3d;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.14159265358979323846;

enum class Side { tx, rx };

// Azimuth in (-pi, pi], elevation in [-pi/2, pi/2].
struct Direction {
    double azimuth = 0.0;
    double elevation = 0.0;
};

// Unit vector (cos el cos az, cos el sin az, sin el).
Vec3 unit_vector(const Direction& dir);

// Direction of `v` under the azimuth = atan2(y, x), elevation = asin(z / |v|) convention.
// Throws DegenerateGeometryError for a zero vector.
Direction direction_of(const Vec3& v);

// Layout parameters for a pair of uniform linear multi-subarray arrays.
struct ArrayLayout {
    double carrier_frequency = 300e9;  // Hz
    int n_tx = 256;
    int n_rx = 64;
    int k_tx = 2;
    int k_rx = 2;
    double intra_spacing = 0.0;  // meters; 0 selects lambda / 2
    double inter_spacing = 0.0;  // meters; 0 selects 16 lambda, or aperture + 16 lambda for wider subarrays
    Vec3 tx_origin = Vec3::Zero();
    Vec3 rx_origin = Vec3(5.0, 0.0, 0.0);
    // Unit axis along which both arrays extend.
    Vec3 array_axis = Vec3::UnitY();
};

// Tx/Rx antenna layout. Elements of subarray k sit at
//   origin + (k - (K-1)/2) * inter_spacing * axis + (m - (n_sub-1)/2) * intra_spacing * axis,
// so each subarray center and the full-array origin are element centroids.
class ArrayGeometry {
public:
    // Validates the layout; throws std::invalid_argument naming the violated invariant.
    explicit ArrayGeometry(const ArrayLayout& layout);

    const ArrayLayout& layout() const noexcept { return layout_; }
    double carrier_frequency() const noexcept { return layout_.carrier_frequency; }
    double wavelength() const noexcept { return wavelength_; }
    double wavenumber() const noexcept { return 2.0 * kPi / wavelength_; }
    double intra_spacing() const noexcept { return intra_spacing_; }
    double inter_spacing() const noexcept { return inter_spacing_; }

    int n_tx() const noexcept { return layout_.n_tx; }
    int n_rx() const noexcept { return layout_.n_rx; }
    int k_tx() const noexcept { return layout_.k_tx; }
    int k_rx() const noexcept { return layout_.k_rx; }

    int antennas(Side side) const noexcept { return side == Side::tx ? n_tx() : n_rx(); }
    int subarrays(Side side) const noexcept { return side == Side::tx ? k_tx() : k_rx(); }
    int subarray_size(Side side) const noexcept { return antennas(side) / subarrays(side); }

    const Vec3& origin(Side side) const noexcept {
        return side == Side::tx ? layout_.tx_origin : layout_.rx_origin;
    }
    const std::vector<Vec3>& element_positions(Side side) const noexcept {
        return side == Side::tx ? tx_elements_ : rx_elements_;
    }
    const std::vector<Vec3>& subarray_centers(Side side) const noexcept {
        return side == Side::tx ? tx_centers_ : rx_centers_;
    }

    // Largest element-to-element extent of the full array / of one subarray.
    double aperture(Side side) const;
    double subarray_aperture(Side side) const;

    // Same layout with the Rx array moved to `rx_origin`.
    ArrayGeometry with_rx_origin(const Vec3& rx_origin) const;

private:
    void build(Side side);

    ArrayLayout layout_;
    double wavelength_ = 0.0;
    double intra_spacing_ = 0.0;
    double inter_spacing_ = 0.0;
    std::vector<Vec3> tx_elements_, rx_elements_;
    std::vector<Vec3> tx_centers_, rx_centers_;
};

// 2 D^2 / lambda. Throws std::invalid_argument for non-positive inputs.
double rayleigh_distance(double aperture, double wavelength);

// p = [d, x, y, z, sin az, cos az, sin el, cos el] for the Rx position relative to the Tx.
struct GeometryCondition {
    std::array<double, 8> p{};

    double distance() const noexcept { return p[0]; }
    Vec3 relative_position() const noexcept { return {p[1], p[2], p[3]}; }
};

inline constexpr int kConditionDim = 8;

// Throws DegenerateGeometryError when the positions coincide.
GeometryCondition condition_vector(const Vec3& tx_origin, const Vec3& rx_origin);

}  // namespace thz
