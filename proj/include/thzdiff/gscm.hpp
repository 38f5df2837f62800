#pragma once

#include "thzdiff/channel.hpp"
#include "thzdiff/random.hpp"

namespace thz {

// Statistics of the stochastic multipath generator.
struct GscmConfig {
    int n_clusters = 3;
    int rays_per_cluster = 5;
    double k_factor_mean_db = 8.0;
    double k_factor_std_db = 3.0;
    double azimuth_spread = 0.05;    // Laplacian scale, radians
    double elevation_spread = 0.02;  // Laplacian scale, radians
    double path_loss_exponent = 2.0;
    double scatterer_radius_min = 1.0;  // meters from the Tx-Rx midpoint
    double scatterer_radius_max = 6.0;

    // Throws std::invalid_argument naming the violated field.
    void validate() const;
};

// One LoS path followed by n_clusters * rays_per_cluster single-bounce rays.
//
// Total power at the array origins follows (lambda / 4 pi)^2 d^-n with d the Tx-Rx distance and n the
// path-loss exponent. The LoS/scattered power ratio is 10^(K/10) with K ~ N(mean_db, std_db); cluster
// shares are Exp(1) draws normalized to one, split evenly across rays. Cluster centroids are uniform in
// the radius shell (elevation limited to +-pi/6); ray departure angles are Laplacian around the
// centroid direction.
PathSet draw_paths(Rng& rng, const GscmConfig& config, const ArrayGeometry& geometry);

}  // namespace thz
