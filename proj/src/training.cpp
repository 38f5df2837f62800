#include "thzdiff/training.hpp"

#include "thzdiff/errors.hpp"
#include "thzdiff/parallel.hpp"
#include "thzdiff/random.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace thz {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ull << 32;
constexpr std::uint64_t kTestStream = 0x54455354ull << 32;

// Noise seed per (epoch, batch), independent of the shuffle streams.
Rng batch_rng(std::uint64_t seed, int epoch, std::size_t batch) {
    return stream_rng(splitmix64(seed ^ 0xBA7C4ull), (static_cast<std::uint64_t>(epoch) << 32) | batch);
}

std::vector<TrainingExample> examples_of(const Dataset& data) {
    std::vector<TrainingExample> out;
    out.reserve(data.samples.size());
    for (const auto& s : data.samples) out.push_back({&s.tensor, &s.condition});
    return out;
}

void check_dims(const Dataset& data, const DitConfig& config, const char* which) {
    if (data.samples.empty()) return;
    if (static_cast<int>(data.header.n_rx) != config.n_rx || static_cast<int>(data.header.n_tx) != config.n_tx) {
        throw std::invalid_argument(std::string("train: ") + which + " set is " + std::to_string(data.header.n_rx) +
                                    "x" + std::to_string(data.header.n_tx) + " but the model expects " +
                                    std::to_string(config.n_rx) + "x" + std::to_string(config.n_tx));
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig.epochs: must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig.batch_size: must be >= 1");
    if (!(adam.lr >= 0.0)) throw std::invalid_argument("TrainConfig.lr: must be >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw std::invalid_argument("TrainConfig.beta1: must lie in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw std::invalid_argument("TrainConfig.beta2: must lie in [0, 1)");
    if (!(adam.epsilon > 0.0)) throw std::invalid_argument("TrainConfig.epsilon: must be positive");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw std::invalid_argument("TrainConfig.ema_decay: must lie in [0, 1]");
}

std::vector<NoiseDraw> fixed_test_draws(const Dataset& test, const DiffusionSchedule& schedule, std::uint64_t seed) {
    std::vector<NoiseDraw> draws;
    draws.reserve(test.samples.size());
    for (std::size_t i = 0; i < test.samples.size(); ++i) {
        Rng rng = stream_rng(seed, kTestStream | i);
        const double sigma = schedule.sample_training_sigma(rng);
        draws.push_back({sigma, perturb(test.samples[i].tensor, sigma, rng)});
    }
    return draws;
}

double evaluate_loss(const DitModel& model, const Dataset& data, const std::vector<NoiseDraw>& draws) {
    const std::vector<TrainingExample> ex = examples_of(data);
    return denoising_loss(model, ex, draws);
}

double batch_gradient(const DitModel& model, std::span<const TrainingExample> batch,
                      std::span<const NoiseDraw> draws, ParameterStore& grads) {
    if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    if (draws.size() != batch.size()) throw std::invalid_argument("batch_gradient: draws do not match batch");
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    std::vector<double> losses(batch.size());
    std::vector<ParameterStore> per_sample(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        DitForwardCache cache = model.forward(draws[i].noisy, draws[i].sigma, *batch[i].condition);
        losses[i] = sample_loss(cache.output, *batch[i].clean);
        per_sample[i] = model.params().zeros_like();
        model.backward(cache, inv_batch * sample_loss_gradient(cache.output, *batch[i].clean), per_sample[i]);
    });
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        total += losses[i];
        grads.accumulate(per_sample[i]);
    }
    return total * inv_batch;
}

TrainResult train(const Dataset& train_set, const Dataset& test_set, const DitConfig& config,
                  const DiffusionSchedule& schedule, const TrainConfig& train_config, const EpochCallback& on_epoch,
                  std::optional<ParameterStore> init) {
    config.validate();
    schedule.validate();
    train_config.validate();
    if (train_set.samples.empty()) throw InsufficientDataError("train: empty training set");
    check_dims(train_set, config, "training");
    check_dims(test_set, config, "test");

    DitModel model = init ? DitModel(config, std::move(*init)) : DitModel::initialize(config, train_config.seed);
    TrainResult result;
    result.ema = model.params();
    result.adam = AdamState::for_params(model.params());

    const std::vector<TrainingExample> examples = examples_of(train_set);
    const std::vector<NoiseDraw> test_draws = fixed_test_draws(test_set, schedule, train_config.seed);
    std::vector<std::size_t> order(examples.size());
    ParameterStore grads = model.params().zeros_like();
    const std::size_t bs = static_cast<std::size_t>(train_config.batch_size);
    const std::size_t n_batches = (examples.size() + bs - 1) / bs;

    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = stream_rng(train_config.seed, kShuffleStream | static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng() % i]);
        }

        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < n_batches; ++b) {
            std::vector<TrainingExample> batch;
            for (std::size_t k = b * bs; k < std::min(order.size(), (b + 1) * bs); ++k) batch.push_back(examples[order[k]]);
            Rng rng = batch_rng(train_config.seed, epoch, b);
            const std::vector<NoiseDraw> draws = draw_noise(batch, schedule, rng);

            grads.set_zero();
            double loss;
            try {
                loss = batch_gradient(model, batch, draws, grads);
            } catch (const NumericError& e) {
                throw NumericError("train: epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(b) +
                                   ": " + e.what());
            }
            if (!std::isfinite(loss) || !grads.all_finite()) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                   std::to_string(b));
            }
            adam_step(model.params(), grads, result.adam, train_config.adam);
            ema_update(result.ema, model.params(), train_config.ema_decay);
            epoch_loss += loss;
        }
        result.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));

        double test_loss = std::numeric_limits<double>::quiet_NaN();
        if (!test_set.samples.empty()) {
            DitModel ema_model(config, result.ema);
            test_loss = evaluate_loss(ema_model, test_set, test_draws);
        }
        result.test_loss.push_back(test_loss);
        if (on_epoch) on_epoch({epoch + 1, result.train_loss.back(), test_loss});
    }
    result.params = std::move(model.params());
    return result;
}

}  // namespace thz
