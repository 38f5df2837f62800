#pragma once

#include "thzdiff/dataset.hpp"
#include "thzdiff/diffusion.hpp"
#include "thzdiff/dit.hpp"
#include "thzdiff/params.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace thz {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 8;
    AdamConfig adam;
    double ema_decay = 0.999;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochReport {
    int epoch;  // 1-based
    double train_loss;
    double test_loss;
};

using EpochCallback = std::function<void(const EpochReport&)>;

struct TrainResult {
    ParameterStore params;
    ParameterStore ema;
    AdamState adam;
    std::vector<double> train_loss;  // per epoch, mean over batches
    std::vector<double> test_loss;   // per epoch, EMA weights on fixed noise draws; NaN without a test set
};

// Fixed per-sample noise draws for test-loss evaluation (stream index = sample index).
std::vector<NoiseDraw> fixed_test_draws(const Dataset& test, const DiffusionSchedule& schedule, std::uint64_t seed);

// Per-entry denoising loss of `model` on `data` with precomputed draws.
double evaluate_loss(const DitModel& model, const Dataset& data, const std::vector<NoiseDraw>& draws);

// Adam + EMA training loop. Each epoch shuffles the training indices with a stream derived from the seed;
// batch b of epoch e draws its noise from its own stream. Per-sample gradients are computed in parallel and
// reduced in index order. Throws NumericError carrying epoch/batch indices when the loss diverges and
// std::invalid_argument when the dataset dims disagree with the model config.
// `init` resumes from existing parameters (EMA shadow starts at the same values).
TrainResult train(const Dataset& train_set, const Dataset& test_set, const DitConfig& config,
                  const DiffusionSchedule& schedule, const TrainConfig& train_config,
                  const EpochCallback& on_epoch = {}, std::optional<ParameterStore> init = std::nullopt);

// Mean loss and accumulated parameter gradient of one batch (gradient already divided by batch size).
double batch_gradient(const DitModel& model, std::span<const TrainingExample> batch,
                      std::span<const NoiseDraw> draws, ParameterStore& grads);

}  // namespace thz
