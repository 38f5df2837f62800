#include "thzdiff/evaluation.hpp"

#include "thzdiff/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace thz {

void SsimParams::validate() const {
    if (window < 1) throw std::invalid_argument("SsimParams.window: must be >= 1");
    if (!(window_std > 0.0)) throw std::invalid_argument("SsimParams.window_std: must be positive");
    if (!(k1 > 0.0) || !(k2 > 0.0)) throw std::invalid_argument("SsimParams: k1 and k2 must be positive");
}

Eigen::MatrixXd ssim_window(const SsimParams& params) {
    params.validate();
    const double c = (params.window - 1) / 2.0;
    Eigen::VectorXd g(params.window);
    for (int i = 0; i < params.window; ++i) {
        const double x = i - c;
        g[i] = std::exp(-x * x / (2.0 * params.window_std * params.window_std));
    }
    Eigen::MatrixXd w = g * g.transpose();
    return w / w.sum();
}

double ssim(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const SsimParams& params) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("ssim: shape mismatch");
    if (a.rows() < params.window || a.cols() < params.window) {
        throw std::invalid_argument("ssim: input " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " is smaller than the " + std::to_string(params.window) + "x" +
                                    std::to_string(params.window) + " window");
    }
    const Eigen::MatrixXd w = ssim_window(params);
    double range = params.dynamic_range;
    if (!(range > 0.0)) range = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    if (!(range > 0.0)) range = 1.0;  // both inputs are all zero
    const double c1 = (params.k1 * range) * (params.k1 * range);
    const double c2 = (params.k2 * range) * (params.k2 * range);

    const int n = params.window;
    double total = 0.0;
    long count = 0;
    for (Eigen::Index r = 0; r + n <= a.rows(); ++r) {
        for (Eigen::Index c = 0; c + n <= a.cols(); ++c) {
            auto pa = a.block(r, c, n, n).array();
            auto pb = b.block(r, c, n, n).array();
            const double mu_a = (w.array() * pa).sum();
            const double mu_b = (w.array() * pb).sum();
            const double var_a = (w.array() * (pa - mu_a).square()).sum();
            const double var_b = (w.array() * (pb - mu_b).square()).sum();
            const double cov = (w.array() * (pa - mu_a) * (pb - mu_b)).sum();
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

double ssim_channel(const CMatrix& a, const CMatrix& b, const SsimParams& params, SsimMode mode) {
    if (mode == SsimMode::magnitude) return ssim(a.cwiseAbs(), b.cwiseAbs(), params);
    return 0.5 * (ssim(a.real(), b.real(), params) + ssim(a.imag(), b.imag(), params));
}

SsimCdf ssim_cdf(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("ssim_cdf: no SSIM values");
    SsimCdf out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    out.values.assign(values.begin(), values.end());
    std::sort(out.values.begin(), out.values.end());
    out.cdf.resize(out.values.size());
    for (std::size_t i = 0; i < out.cdf.size(); ++i) {
        out.cdf[i] = static_cast<double>(i + 1) / static_cast<double>(out.cdf.size());
    }
    return out;
}

SsimCdf ssim_cdf(std::span<const ChannelPair> pairs, const SsimParams& params, SsimMode mode) {
    if (pairs.empty()) throw std::invalid_argument("ssim_cdf: no channel pairs");
    std::vector<double> values(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
        values[i] = ssim_channel(*pairs[i].generated, *pairs[i].reference, params, mode);
    });
    return ssim_cdf(values);
}

AngularPowerMap angular_power(std::span<const ChannelMatrix> samples) {
    if (samples.empty()) throw std::invalid_argument("angular_power: no samples");
    const Eigen::Index rows = samples[0].entries.rows(), cols = samples[0].entries.cols();
    AngularPowerMap map;
    map.mean_power = Eigen::MatrixXd::Zero(rows, cols);
    for (const auto& s : samples) {
        if (s.domain != Domain::beamspace) throw std::invalid_argument("angular_power: spatial-domain sample");
        if (s.entries.rows() != rows || s.entries.cols() != cols) {
            throw std::invalid_argument("angular_power: samples have unequal dims");
        }
        map.mean_power += s.entries.cwiseAbs2();
    }
    map.sample_count = samples.size();
    map.mean_power /= static_cast<double>(samples.size());
    map.tx_profile = map.mean_power.colwise().sum().transpose();
    map.rx_profile = map.mean_power.rowwise().sum();
    return map;
}

AngularPowerMap angular_power(const Dataset& dataset) {
    std::vector<ChannelMatrix> mats;
    mats.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples) {
        mats.push_back({unstack_channel(s.tensor, static_cast<int>(dataset.header.n_rx),
                                        static_cast<int>(dataset.header.n_tx)),
                        Domain::beamspace});
    }
    return angular_power(mats);
}

ProfileComparison compare_profiles(const Eigen::VectorXd& gen, const Eigen::VectorXd& ref) {
    if (gen.size() != ref.size()) throw std::invalid_argument("compare_power: profile dims differ");
    const double sg = gen.sum(), sr = ref.sum();
    if (!(sg > 0.0) || !(sr > 0.0)) throw std::invalid_argument("compare_power: zero-energy profile");
    ProfileComparison out;
    out.tv_distance = 0.5 * (gen / sg - ref / sr).cwiseAbs().sum();
    out.cosine_similarity = gen.dot(ref) / (gen.norm() * ref.norm());
    Eigen::Index ig, ir;
    gen.maxCoeff(&ig);
    ref.maxCoeff(&ir);
    out.argmax_match = ig == ir;
    return out;
}

PowerComparison compare_power(const AngularPowerMap& gen, const AngularPowerMap& ref) {
    return {compare_profiles(gen.tx_profile, ref.tx_profile), compare_profiles(gen.rx_profile, ref.rx_profile)};
}

double nmse(const CMatrix& a, const CMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("nmse: shape mismatch");
    const double ref = b.squaredNorm();
    if (!(ref > 0.0)) throw std::invalid_argument("nmse: zero reference");
    return (a - b).squaredNorm() / ref;
}

}  // namespace thz
