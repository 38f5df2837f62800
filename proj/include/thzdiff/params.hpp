#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace thz {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Named dense tensor, row-major contiguous storage.
struct Tensor {
    std::string name;
    std::vector<int> shape;
    Eigen::VectorXd values;

    Tensor() = default;
    Tensor(std::string name, std::vector<int> shape);

    Eigen::Index size() const noexcept { return values.size(); }
    std::span<double> span() noexcept { return {values.data(), static_cast<std::size_t>(values.size())}; }
    std::span<const double> span() const noexcept {
        return {values.data(), static_cast<std::size_t>(values.size())};
    }

    // Rank-2 view; rank-1 tensors are viewed as a single row.
    Eigen::Map<RowMatrix> matrix();
    Eigen::Map<const RowMatrix> matrix() const;
};

// Ordered collection of tensors with identical layout across raw weights, gradients, optimizer moments
// and EMA shadows.
class ParameterStore {
public:
    Tensor& add(std::string name, std::vector<int> shape);

    std::size_t count() const noexcept { return tensors_.size(); }
    Tensor& operator[](std::size_t i) { return tensors_[i]; }
    const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

    // Throws std::out_of_range for unknown names.
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;

    // Same names and shapes, all values zero.
    ParameterStore zeros_like() const;
    bool same_layout(const ParameterStore& other) const;
    Eigen::Index total_size() const;

    void set_zero();
    // this += other (layouts must match).
    void accumulate(const ParameterStore& other);
    bool all_finite() const;

private:
    std::vector<Tensor> tensors_;
};

// shadow <- decay * shadow + (1 - decay) * current, tensor by tensor.
void ema_update(ParameterStore& shadow, const ParameterStore& current, double decay);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-3;
};

struct AdamState {
    ParameterStore m;
    ParameterStore v;
    std::uint64_t step = 0;

    static AdamState for_params(const ParameterStore& params);
};

// Bias-corrected Adam: m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2,
// p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps), with t the incremented step.
void adam_step(ParameterStore& params, const ParameterStore& grads, AdamState& state, const AdamConfig& config);

}  // namespace thz
