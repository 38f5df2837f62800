#include "thzdiff/channel.hpp"

#include "thzdiff/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace thz {

namespace {

// Shorter than this (relative to the wavelength) counts as coincident.
constexpr double kCoincidenceFraction = 1e-9;

double segment_distance(const Vec3& a, const Vec3& b, double wavelength) {
    double d = (a - b).norm();
    if (!(d > kCoincidenceFraction * wavelength)) {
        throw DegenerateGeometryError("scatterer coincides with an antenna position");
    }
    return d;
}

struct SegmentSum {
    double length;
    double amplitude;  // prod(lambda / (4 pi d_segment))
};

SegmentSum propagate(const Vec3& from, const std::optional<Vec3>& via, const Vec3& to, double wavelength) {
    const double fs = wavelength / (4.0 * kPi);
    if (!via) {
        double d = segment_distance(from, to, wavelength);
        return {d, fs / d};
    }
    double d1 = segment_distance(from, *via, wavelength);
    double d2 = segment_distance(*via, to, wavelength);
    return {d1 + d2, (fs / d1) * (fs / d2)};
}

double wrap_phase(double phase) {
    double w = std::fmod(phase, 2.0 * kPi);
    return w < 0.0 ? w + 2.0 * kPi : w;
}

void require_paths(const PathSet& paths, const char* op) {
    if (paths.paths.empty()) throw std::invalid_argument(std::string(op) + ": empty PathSet");
}

}  // namespace

Path resolve_path(const ArrayGeometry& geometry, std::optional<Vec3> scatterer, double path_gain) {
    const Vec3& tx = geometry.origin(Side::tx);
    const Vec3& rx = geometry.origin(Side::rx);
    SegmentSum seg = propagate(tx, scatterer, rx, geometry.wavelength());
    Path path;
    path.scatterer = scatterer;
    path.path_gain = path_gain;
    path.gain_magnitude = std::sqrt(static_cast<double>(geometry.n_tx()) * geometry.n_rx()) * path_gain * seg.amplitude;
    path.global_phase = wrap_phase(geometry.wavenumber() * seg.length);
    path.aod = direction_of((scatterer ? *scatterer : rx) - tx);
    path.aoa = direction_of((scatterer ? *scatterer : tx) - rx);
    return path;
}

CVector steering_vector(const ArrayGeometry& geometry, Side side, int subarray, const Direction& dir) {
    const auto& elements = geometry.element_positions(side);
    Vec3 ref;
    int first = 0;
    int count = 0;
    if (subarray == kFullArray) {
        ref = geometry.origin(side);
        count = geometry.antennas(side);
    } else {
        if (subarray < 0 || subarray >= geometry.subarrays(side)) {
            throw std::out_of_range("steering_vector: subarray index " + std::to_string(subarray) +
                                    " out of range [0, " + std::to_string(geometry.subarrays(side)) + ")");
        }
        ref = geometry.subarray_centers(side)[subarray];
        count = geometry.subarray_size(side);
        first = subarray * count;
    }
    const Vec3 u = unit_vector(dir);
    const double k0 = geometry.wavenumber();
    const double scale = 1.0 / std::sqrt(static_cast<double>(count));
    CVector a(count);
    for (int i = 0; i < count; ++i) {
        double phase = -k0 * (elements[first + i] - ref).dot(u);
        a[i] = std::polar(scale, phase);
    }
    return a;
}

ChannelMatrix pwm_channel(const PathSet& paths, const ArrayGeometry& geometry) {
    require_paths(paths, "pwm_channel");
    ChannelMatrix h{CMatrix::Zero(geometry.n_rx(), geometry.n_tx()), Domain::spatial};
    for (const Path& p : paths.paths) {
        Complex alpha = std::polar(p.gain_magnitude, -p.global_phase);
        CVector ar = steering_vector(geometry, Side::rx, kFullArray, p.aoa).conjugate();
        CVector at = steering_vector(geometry, Side::tx, kFullArray, p.aod);
        h.entries.noalias() += alpha * ar * at.adjoint();
    }
    return h;
}

ChannelMatrix swm_channel(const PathSet& paths, const ArrayGeometry& geometry) {
    require_paths(paths, "swm_channel");
    const auto& tx = geometry.element_positions(Side::tx);
    const auto& rx = geometry.element_positions(Side::rx);
    const double k0 = geometry.wavenumber();
    const double lambda = geometry.wavelength();
    ChannelMatrix h{CMatrix::Zero(geometry.n_rx(), geometry.n_tx()), Domain::spatial};
    for (const Path& p : paths.paths) {
        for (int i = 0; i < geometry.n_tx(); ++i) {
            for (int n = 0; n < geometry.n_rx(); ++n) {
                SegmentSum seg = propagate(tx[i], p.scatterer, rx[n], lambda);
                h.entries(n, i) += std::polar(p.path_gain * seg.amplitude, -k0 * seg.length);
            }
        }
    }
    return h;
}

ChannelMatrix hpsm_channel(const PathSet& paths, const ArrayGeometry& geometry) {
    require_paths(paths, "hpsm_channel");
    const int kt = geometry.k_tx();
    const int kr = geometry.k_rx();
    const int nt_sub = geometry.subarray_size(Side::tx);
    const int nr_sub = geometry.subarray_size(Side::rx);
    const auto& tx_centers = geometry.subarray_centers(Side::tx);
    const auto& rx_centers = geometry.subarray_centers(Side::rx);
    const double k0 = geometry.wavenumber();
    const double lambda = geometry.wavelength();
    const double array_gain = std::sqrt(static_cast<double>(nt_sub) * nr_sub);
    ChannelMatrix h{CMatrix::Zero(geometry.n_rx(), geometry.n_tx()), Domain::spatial};
    for (const Path& p : paths.paths) {
        for (int t = 0; t < kt; ++t) {
            const Vec3& ct = tx_centers[t];
            for (int r = 0; r < kr; ++r) {
                const Vec3& cr = rx_centers[r];
                const Vec3 first = p.scatterer ? *p.scatterer : cr;
                const Vec3 last = p.scatterer ? *p.scatterer : ct;
                SegmentSum seg = propagate(ct, p.scatterer, cr, lambda);
                Complex gain = std::polar(array_gain * p.path_gain * seg.amplitude, -wrap_phase(k0 * seg.length));
                CVector a_t = steering_vector(geometry, Side::tx, t, direction_of(first - ct));
                CVector a_r = steering_vector(geometry, Side::rx, r, direction_of(last - cr)).conjugate();
                h.entries.block(r * nr_sub, t * nt_sub, nr_sub, nt_sub).noalias() += gain * a_r * a_t.adjoint();
            }
        }
    }
    return h;
}

}  // namespace thz
