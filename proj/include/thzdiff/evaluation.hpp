#pragma once

#include "thzdiff/channel.hpp"
#include "thzdiff/dataset.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace thz {

struct SsimParams {
    int window = 11;          // side of the square Gaussian window
    double window_std = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    // Dynamic range L; <= 0 selects the per-pair max absolute value over both inputs.
    double dynamic_range = 0.0;

    void validate() const;
};

// Normalized window weights (window x window, sum 1).
Eigen::MatrixXd ssim_window(const SsimParams& params);

// Mean over all valid window positions of the luminance * contrast * structure product.
// Throws std::invalid_argument on shape mismatch or when the input is smaller than the window.
double ssim(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const SsimParams& params = {});

enum class SsimMode { magnitude, real_imag };

// SSIM of |a| vs |b| (magnitude) or the average of the real-part and imaginary-part SSIMs.
double ssim_channel(const CMatrix& a, const CMatrix& b, const SsimParams& params = {},
                    SsimMode mode = SsimMode::magnitude);

struct SsimCdf {
    std::vector<double> values;  // ascending
    std::vector<double> cdf;     // (i + 1) / n
    double mean = 0.0;
};

// Throws std::invalid_argument for an empty input.
SsimCdf ssim_cdf(std::span<const double> values);

struct ChannelPair {
    const CMatrix* generated;
    const CMatrix* reference;
};

// Per-pair SSIM (parallel over pairs) summarized as a CDF.
SsimCdf ssim_cdf(std::span<const ChannelPair> pairs, const SsimParams& params = {},
                 SsimMode mode = SsimMode::magnitude);

struct AngularPowerMap {
    Eigen::MatrixXd mean_power;  // N_r x N_t, mean |H_b|^2
    Eigen::VectorXd tx_profile;  // column sums
    Eigen::VectorXd rx_profile;  // row sums
    std::size_t sample_count = 0;
};

// Averaged map over beamspace channels. Throws std::invalid_argument for an empty set, spatial-domain
// inputs or unequal dims.
AngularPowerMap angular_power(std::span<const ChannelMatrix> samples);
// Dataset tensors are beamspace by construction.
AngularPowerMap angular_power(const Dataset& dataset);

struct ProfileComparison {
    double tv_distance;        // 0.5 * sum |p - q| of the sum-normalized profiles
    double cosine_similarity;  // of the raw profiles
    bool argmax_match;
};

struct PowerComparison {
    ProfileComparison tx;
    ProfileComparison rx;
};

ProfileComparison compare_profiles(const Eigen::VectorXd& gen, const Eigen::VectorXd& ref);
// Throws std::invalid_argument on unequal dims or a zero-energy profile.
PowerComparison compare_power(const AngularPowerMap& gen, const AngularPowerMap& ref);

// ||a - b||_F^2 / ||b||_F^2. Throws std::invalid_argument on shape mismatch or zero reference.
double nmse(const CMatrix& a, const CMatrix& b);

}  // namespace thz
