#pragma once

#include "thzdiff/geometry.hpp"
#include "thzdiff/random.hpp"

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

namespace thz {

// Variance-exploding schedule with sigma(t) = t on [sigma_min, horizon].
struct DiffusionSchedule {
    double horizon = 10.0;
    double sigma_min = 0.01;
    int n_steps = 100;

    void validate() const;

    double sigma(double t) const noexcept { return t; }
    double sigma_derivative(double /*t*/) const noexcept { return 1.0; }

    // Training noise level, log-uniform on [sigma_min, horizon].
    double sample_training_sigma(Rng& rng) const;

    // Decreasing uniform grid horizon = t_0 > ... > t_n = sigma_min (n_steps + 1 points).
    std::vector<double> time_grid() const;
};

// D(noisy, sigma, p) -> predicted clean tensor of the same shape.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual Eigen::VectorXd denoise(const Eigen::VectorXd& noisy, double sigma,
                                    const GeometryCondition& condition) const = 0;
};

// h0 + sigma * eps with eps ~ N(0, I) drawn entry by entry from rng.
Eigen::VectorXd perturb(const Eigen::VectorXd& h0, double sigma, Rng& rng);

struct TrainingExample {
    const Eigen::VectorXd* clean;
    const GeometryCondition* condition;
};

// Noise level and noisy input for one training example.
struct NoiseDraw {
    double sigma;
    Eigen::VectorXd noisy;
};

// Draws one (sigma, noisy) per example, in order: sigma from the schedule, then the Gaussian tensor.
std::vector<NoiseDraw> draw_noise(std::span<const TrainingExample> batch, const DiffusionSchedule& schedule,
                                  Rng& rng);

// Per-entry mean square ||prediction - clean||^2 / size, and its gradient w.r.t. the prediction.
double sample_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& clean);
Eigen::VectorXd sample_loss_gradient(const Eigen::VectorXd& prediction, const Eigen::VectorXd& clean);

// Receives d(batch loss)/d(prediction) for each example index.
using LossGradientHook = std::function<void(std::size_t index, const Eigen::VectorXd& grad_prediction)>;

// Denoising objective averaged over the batch and over tensor entries. Draws come from draw_noise;
// denoiser calls may run in parallel, the reduction is in index order. Throws NumericError naming
// the example when the denoiser output is non-finite.
double denoising_loss(const Denoiser& denoiser, std::span<const TrainingExample> batch,
                      const DiffusionSchedule& schedule, Rng& rng, const LossGradientHook& hook = {});

// Loss on precomputed draws (used for fixed-noise evaluation).
double denoising_loss(const Denoiser& denoiser, std::span<const TrainingExample> batch,
                      std::span<const NoiseDraw> draws, const LossGradientHook& hook = {});

// (d - h_t) / sigma^2. Throws std::invalid_argument for sigma <= 0.
Eigen::VectorXd score_from_denoiser(const Eigen::VectorXd& denoised, const Eigen::VectorXd& noisy, double sigma);

// Posterior mean under the prior N(mu, sigma_d^2 I): (sigma_d^2 h + sigma^2 mu) / (sigma_d^2 + sigma^2).
class AnalyticGaussianDenoiser final : public Denoiser {
public:
    AnalyticGaussianDenoiser(Eigen::VectorXd mu, double sigma_d);

    Eigen::VectorXd denoise(const Eigen::VectorXd& noisy, double sigma,
                            const GeometryCondition& condition) const override;

    // Score of the perturbed prior N(mu, (sigma_d^2 + sigma^2) I).
    Eigen::VectorXd exact_score(const Eigen::VectorXd& noisy, double sigma) const;

private:
    Eigen::VectorXd mu_;
    double sigma_d_;
};

// Probability-flow ODE integrated backward with Euler steps on schedule.time_grid():
//   H <- H + (t_i - t_{i+1}) * sigma'(t_i) sigma(t_i) * score(H, t_i),
// starting from H ~ N(0, horizon^2 I). Throws NumericError with the step index on non-finite state.
Eigen::VectorXd euler_sample(const Denoiser& denoiser, const GeometryCondition& condition,
                             const DiffusionSchedule& schedule, Rng& rng, Eigen::Index size);

// Same integration from a given initial state.
Eigen::VectorXd euler_integrate(const Denoiser& denoiser, const GeometryCondition& condition,
                                const DiffusionSchedule& schedule, Eigen::VectorXd state);

// shadow <- decay * shadow + (1 - decay) * current.
void ema_update(std::span<double> shadow, std::span<const double> current, double decay);

}  // namespace thz
