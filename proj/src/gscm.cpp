#include "thzdiff/gscm.hpp"

#include "thzdiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace thz {

namespace {

// Scatterers closer than this to either array origin are redrawn.
constexpr double kClearance = 0.1;
constexpr int kMaxRedraws = 1000;
constexpr double kCentroidElevationLimit = kPi / 6.0;

void require(bool ok, const char* field, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("GscmConfig.") + field + ": " + what);
}

double wrap_azimuth(double az) {
    double w = std::remainder(az, 2.0 * kPi);
    return w <= -kPi ? w + 2.0 * kPi : w;
}

}  // namespace

void GscmConfig::validate() const {
    require(n_clusters >= 1, "n_clusters", "must be >= 1");
    require(rays_per_cluster >= 1, "rays_per_cluster", "must be >= 1");
    require(std::isfinite(k_factor_mean_db), "k_factor_mean_db", "must be finite");
    require(k_factor_std_db >= 0.0, "k_factor_std_db", "must be >= 0");
    require(azimuth_spread > 0.0, "azimuth_spread", "must be > 0");
    require(elevation_spread > 0.0, "elevation_spread", "must be > 0");
    require(path_loss_exponent > 0.0, "path_loss_exponent", "must be > 0");
    require(scatterer_radius_min > 0.0, "scatterer_radius_min", "must be > 0");
    require(scatterer_radius_min < scatterer_radius_max, "scatterer_radius_max", "must exceed scatterer_radius_min");
}

PathSet draw_paths(Rng& rng, const GscmConfig& config, const ArrayGeometry& geometry) {
    config.validate();
    const Vec3& tx = geometry.origin(Side::tx);
    const Vec3& rx = geometry.origin(Side::rx);
    const double link = (rx - tx).norm();
    if (!(link > 0.0)) throw DegenerateGeometryError("draw_paths: Tx and Rx origins coincide");
    const Vec3 midpoint = 0.5 * (tx + rx);
    const double lambda = geometry.wavelength();
    // resolve_path folds this into gain_magnitude; the budget below is per antenna pair
    const double array_gain = std::sqrt(static_cast<double>(geometry.n_tx()) * geometry.n_rx());

    // Target powers at the array origins.
    const double fs = lambda / (4.0 * kPi);
    const double total_power = fs * fs * std::pow(link, -config.path_loss_exponent);
    const double k_db = config.k_factor_mean_db + config.k_factor_std_db * standard_normal(rng);
    const double k_linear = std::pow(10.0, k_db / 10.0);
    const double los_power = total_power * k_linear / (1.0 + k_linear);
    const double scattered_power = total_power / (1.0 + k_linear);

    PathSet set;
    set.includes_los = true;
    {
        Path los = resolve_path(geometry, std::nullopt, 1.0);
        double gain = array_gain * std::sqrt(los_power) / los.gain_magnitude;
        set.paths.push_back(resolve_path(geometry, std::nullopt, gain));
    }

    std::vector<double> shares(config.n_clusters);
    double share_sum = 0.0;
    for (double& s : shares) {
        s = -std::log1p(-uniform(rng, 0.0, 1.0));
        share_sum += s;
    }

    auto clear_of_arrays = [&](const Vec3& s) {
        return (s - tx).norm() > kClearance && (s - rx).norm() > kClearance;
    };

    for (int c = 0; c < config.n_clusters; ++c) {
        Vec3 centroid;
        int attempts = 0;
        do {
            if (++attempts > kMaxRedraws) throw DegenerateGeometryError("draw_paths: cannot place cluster");
            // uniform in the spherical shell, elevation band limited
            double r3 = uniform(rng, std::pow(config.scatterer_radius_min, 3), std::pow(config.scatterer_radius_max, 3));
            double radius = std::cbrt(r3);
            Direction dir{uniform(rng, -kPi, kPi),
                          std::asin(uniform(rng, -std::sin(kCentroidElevationLimit), std::sin(kCentroidElevationLimit)))};
            centroid = midpoint + radius * unit_vector(dir);
        } while (!clear_of_arrays(centroid));

        const Direction center_dir = direction_of(centroid - tx);
        const double range = (centroid - tx).norm();
        const double ray_power = scattered_power * shares[c] / share_sum / config.rays_per_cluster;
        for (int r = 0; r < config.rays_per_cluster; ++r) {
            Vec3 scatterer;
            attempts = 0;
            do {
                if (++attempts > kMaxRedraws) throw DegenerateGeometryError("draw_paths: cannot place ray");
                Direction ray{wrap_azimuth(center_dir.azimuth + laplace(rng, config.azimuth_spread)),
                              std::clamp(center_dir.elevation + laplace(rng, config.elevation_spread),
                                         -kPi / 2.0, kPi / 2.0)};
                scatterer = tx + range * unit_vector(ray);
            } while (!clear_of_arrays(scatterer));
            Path unit = resolve_path(geometry, scatterer, 1.0);
            set.paths.push_back(resolve_path(geometry, scatterer, array_gain * std::sqrt(ray_power) / unit.gain_magnitude));
        }
    }
    return set;
}

}  // namespace thz
