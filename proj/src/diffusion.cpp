#include "thzdiff/diffusion.hpp"

#include "thzdiff/errors.hpp"
#include "thzdiff/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace thz {

void DiffusionSchedule::validate() const {
    if (!(sigma_min > 0.0)) throw std::invalid_argument("DiffusionSchedule: sigma_min must be positive");
    if (!(sigma_min < horizon)) throw std::invalid_argument("DiffusionSchedule: sigma_min must be below horizon");
    if (n_steps < 1) throw std::invalid_argument("DiffusionSchedule: n_steps must be >= 1");
}

double DiffusionSchedule::sample_training_sigma(Rng& rng) const {
    return std::exp(uniform(rng, std::log(sigma_min), std::log(horizon)));
}

std::vector<double> DiffusionSchedule::time_grid() const {
    validate();
    std::vector<double> grid(n_steps + 1);
    for (int i = 0; i <= n_steps; ++i) {
        grid[i] = horizon + (sigma_min - horizon) * static_cast<double>(i) / n_steps;
    }
    grid.back() = sigma_min;
    return grid;
}

Eigen::VectorXd perturb(const Eigen::VectorXd& h0, double sigma, Rng& rng) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("perturb: sigma must be non-negative");
    Eigen::VectorXd out = h0;
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += sigma * standard_normal(rng);
    return out;
}

std::vector<NoiseDraw> draw_noise(std::span<const TrainingExample> batch, const DiffusionSchedule& schedule,
                                  Rng& rng) {
    std::vector<NoiseDraw> draws;
    draws.reserve(batch.size());
    for (const auto& ex : batch) {
        double sigma = schedule.sample_training_sigma(rng);
        draws.push_back({sigma, perturb(*ex.clean, sigma, rng)});
    }
    return draws;
}

double sample_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& clean) {
    return (prediction - clean).squaredNorm() / static_cast<double>(clean.size());
}

Eigen::VectorXd sample_loss_gradient(const Eigen::VectorXd& prediction, const Eigen::VectorXd& clean) {
    return 2.0 * (prediction - clean) / static_cast<double>(clean.size());
}

double denoising_loss(const Denoiser& denoiser, std::span<const TrainingExample> batch,
                      const DiffusionSchedule& schedule, Rng& rng, const LossGradientHook& hook) {
    if (batch.empty()) throw std::invalid_argument("denoising_loss: empty batch");
    std::vector<NoiseDraw> draws = draw_noise(batch, schedule, rng);
    return denoising_loss(denoiser, batch, draws, hook);
}

double denoising_loss(const Denoiser& denoiser, std::span<const TrainingExample> batch,
                      std::span<const NoiseDraw> draws, const LossGradientHook& hook) {
    if (batch.empty()) throw std::invalid_argument("denoising_loss: empty batch");
    if (draws.size() != batch.size()) throw std::invalid_argument("denoising_loss: draws do not match batch");
    std::vector<double> losses(batch.size());
    std::vector<Eigen::VectorXd> predictions(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        predictions[i] = denoiser.denoise(draws[i].noisy, draws[i].sigma, *batch[i].condition);
        if (!predictions[i].allFinite()) {
            throw NumericError("denoising_loss: non-finite denoiser output for sample " + std::to_string(i));
        }
        losses[i] = sample_loss(predictions[i], *batch[i].clean);
    });
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        total += losses[i];
        if (hook) hook(i, inv_batch * sample_loss_gradient(predictions[i], *batch[i].clean));
    }
    return total * inv_batch;
}

Eigen::VectorXd score_from_denoiser(const Eigen::VectorXd& denoised, const Eigen::VectorXd& noisy, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("score_from_denoiser: sigma must be positive");
    return (denoised - noisy) / (sigma * sigma);
}

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(Eigen::VectorXd mu, double sigma_d)
    : mu_(std::move(mu)), sigma_d_(sigma_d) {
    if (!(sigma_d >= 0.0)) throw std::invalid_argument("AnalyticGaussianDenoiser: sigma_d must be >= 0");
}

Eigen::VectorXd AnalyticGaussianDenoiser::denoise(const Eigen::VectorXd& noisy, double sigma,
                                                  const GeometryCondition&) const {
    const double vd = sigma_d_ * sigma_d_;
    const double vn = sigma * sigma;
    if (vd + vn == 0.0) return noisy;
    if (std::isinf(vn)) return mu_;
    return (vd * noisy + vn * mu_) / (vd + vn);
}

Eigen::VectorXd AnalyticGaussianDenoiser::exact_score(const Eigen::VectorXd& noisy, double sigma) const {
    return -(noisy - mu_) / (sigma_d_ * sigma_d_ + sigma * sigma);
}

Eigen::VectorXd euler_integrate(const Denoiser& denoiser, const GeometryCondition& condition,
                                const DiffusionSchedule& schedule, Eigen::VectorXd state) {
    const std::vector<double> grid = schedule.time_grid();
    for (int i = 0; i + 1 < static_cast<int>(grid.size()); ++i) {
        const double t = grid[i];
        const double dt = grid[i] - grid[i + 1];
        const double sigma = schedule.sigma(t);
        Eigen::VectorXd score = score_from_denoiser(denoiser.denoise(state, sigma, condition), state, sigma);
        state += dt * schedule.sigma_derivative(t) * sigma * score;
        if (!state.allFinite()) {
            throw NumericError("euler_sample: non-finite state at step " + std::to_string(i));
        }
    }
    return state;
}

Eigen::VectorXd euler_sample(const Denoiser& denoiser, const GeometryCondition& condition,
                             const DiffusionSchedule& schedule, Rng& rng, Eigen::Index size) {
    schedule.validate();
    Eigen::VectorXd state(size);
    for (Eigen::Index i = 0; i < size; ++i) state[i] = schedule.horizon * standard_normal(rng);
    return euler_integrate(denoiser, condition, schedule, std::move(state));
}

void ema_update(std::span<double> shadow, std::span<const double> current, double decay) {
    if (shadow.size() != current.size()) throw std::invalid_argument("ema_update: shape mismatch");
    if (!(decay >= 0.0 && decay <= 1.0)) throw std::invalid_argument("ema_update: decay must lie in [0, 1]");
    for (std::size_t i = 0; i < shadow.size(); ++i) shadow[i] = decay * shadow[i] + (1.0 - decay) * current[i];
}

}  // namespace thz
