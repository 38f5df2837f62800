#include "thzdiff/geometry.hpp"

#include "thzdiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace thz {

Vec3 unit_vector(const Direction& dir) {
    const double ce = std::cos(dir.elevation);
    return {ce * std::cos(dir.azimuth), ce * std::sin(dir.azimuth), std::sin(dir.elevation)};
}

Direction direction_of(const Vec3& v) {
    const double norm = v.norm();
    if (!(norm > 0.0)) throw DegenerateGeometryError("direction of a zero-length vector");
    double az = std::atan2(v.y(), v.x());
    if (az == -kPi) az = kPi;
    const double el = std::asin(std::clamp(v.z() / norm, -1.0, 1.0));
    return {az, el};
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("ArrayGeometry: " + what);
}

}  // namespace

ArrayGeometry::ArrayGeometry(const ArrayLayout& layout) : layout_(layout) {
    require(layout.carrier_frequency > 0.0, "carrier_frequency must be positive");
    wavelength_ = kSpeedOfLight / layout.carrier_frequency;
    intra_spacing_ = layout.intra_spacing > 0.0 ? layout.intra_spacing : 0.5 * wavelength_;
    require(layout.intra_spacing >= 0.0 && layout.inter_spacing >= 0.0, "spacings must be non-negative");
    require(layout.n_tx >= 1 && layout.n_rx >= 1, "antenna counts must be positive");
    require(layout.k_tx >= 1 && layout.k_rx >= 1, "subarray counts must be positive");
    require(layout.n_tx % layout.k_tx == 0, "n_tx must be divisible by k_tx");
    require(layout.n_rx % layout.k_rx == 0, "n_rx must be divisible by k_rx");
    if (layout.inter_spacing > 0.0) {
        inter_spacing_ = layout.inter_spacing;
    } else {
        // 16 lambda, or a 16 lambda gap when subarrays are wider than that
        const int widest = std::max(layout.n_tx / layout.k_tx, layout.n_rx / layout.k_rx);
        const double aperture = (widest - 1) * intra_spacing_;
        inter_spacing_ = 16.0 * wavelength_ > aperture ? 16.0 * wavelength_ : aperture + 16.0 * wavelength_;
    }
    require(inter_spacing_ >= intra_spacing_, "inter_spacing must be >= intra_spacing");
    require(std::abs(layout.array_axis.norm() - 1.0) < 1e-12, "array_axis must be a unit vector");
    for (Side side : {Side::tx, Side::rx}) {
        if (subarrays(side) > 1) {
            std::ostringstream msg;
            msg << "subarray aperture " << (subarray_size(side) - 1) * intra_spacing_
                << " m must be smaller than inter_spacing " << inter_spacing_ << " m";
            require((subarray_size(side) - 1) * intra_spacing_ < inter_spacing_, msg.str());
        }
        build(side);
    }
}

void ArrayGeometry::build(Side side) {
    const int k = subarrays(side);
    const int n_sub = subarray_size(side);
    const Vec3& axis = layout_.array_axis;
    auto& centers = side == Side::tx ? tx_centers_ : rx_centers_;
    auto& elements = side == Side::tx ? tx_elements_ : rx_elements_;
    centers.clear();
    elements.clear();
    for (int s = 0; s < k; ++s) {
        Vec3 center = origin(side) + (s - 0.5 * (k - 1)) * inter_spacing_ * axis;
        centers.push_back(center);
        for (int m = 0; m < n_sub; ++m) {
            elements.push_back(center + (m - 0.5 * (n_sub - 1)) * intra_spacing_ * axis);
        }
    }
}

double ArrayGeometry::aperture(Side side) const {
    const auto& e = element_positions(side);
    return (e.back() - e.front()).norm();
}

double ArrayGeometry::subarray_aperture(Side side) const {
    return (subarray_size(side) - 1) * intra_spacing_;
}

ArrayGeometry ArrayGeometry::with_rx_origin(const Vec3& rx_origin) const {
    ArrayLayout moved = layout_;
    moved.intra_spacing = intra_spacing_;
    moved.inter_spacing = inter_spacing_;
    moved.rx_origin = rx_origin;
    return ArrayGeometry(moved);
}

double rayleigh_distance(double aperture, double wavelength) {
    if (!(aperture > 0.0) || !(wavelength > 0.0)) {
        throw std::invalid_argument("rayleigh_distance: aperture and wavelength must be positive");
    }
    return 2.0 * aperture * aperture / wavelength;
}

GeometryCondition condition_vector(const Vec3& tx_origin, const Vec3& rx_origin) {
    const Vec3 rel = rx_origin - tx_origin;
    const double d = rel.norm();
    if (!(d > 0.0)) throw DegenerateGeometryError("condition_vector: Tx and Rx positions coincide");
    const double az = std::atan2(rel.y(), rel.x());
    const double el = std::asin(std::clamp(rel.z() / d, -1.0, 1.0));
    GeometryCondition c;
    c.p = {d, rel.x(), rel.y(), rel.z(), std::sin(az), std::cos(az), std::sin(el), std::cos(el)};
    return c;
}

}  // namespace thz
