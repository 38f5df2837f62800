#include "thzdiff/params.hpp"

#include "thzdiff/diffusion.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace thz {

Tensor::Tensor(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    Eigen::Index size = std::accumulate(shape.begin(), shape.end(), Eigen::Index{1},
                                        [](Eigen::Index a, int b) { return a * b; });
    values = Eigen::VectorXd::Zero(size);
}

Eigen::Map<RowMatrix> Tensor::matrix() {
    Eigen::Index rows = shape.size() == 2 ? shape[0] : 1;
    return {values.data(), rows, values.size() / rows};
}

Eigen::Map<const RowMatrix> Tensor::matrix() const {
    Eigen::Index rows = shape.size() == 2 ? shape[0] : 1;
    return {values.data(), rows, values.size() / rows};
}

Tensor& ParameterStore::add(std::string name, std::vector<int> shape) {
    for (const auto& t : tensors_) {
        if (t.name == name) throw std::invalid_argument("ParameterStore: duplicate tensor " + name);
    }
    tensors_.emplace_back(std::move(name), std::move(shape));
    return tensors_.back();
}

std::size_t ParameterStore::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].name == name) return i;
    }
    throw std::out_of_range("ParameterStore: no tensor named " + name);
}

Tensor& ParameterStore::at(const std::string& name) { return tensors_[index_of(name)]; }
const Tensor& ParameterStore::at(const std::string& name) const { return tensors_[index_of(name)]; }

ParameterStore ParameterStore::zeros_like() const {
    ParameterStore out;
    for (const auto& t : tensors_) out.add(t.name, t.shape);
    return out;
}

bool ParameterStore::same_layout(const ParameterStore& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].name != other.tensors_[i].name || tensors_[i].shape != other.tensors_[i].shape) return false;
    }
    return true;
}

Eigen::Index ParameterStore::total_size() const {
    Eigen::Index n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
}

void ParameterStore::set_zero() {
    for (auto& t : tensors_) t.values.setZero();
}

void ParameterStore::accumulate(const ParameterStore& other) {
    if (!same_layout(other)) throw std::invalid_argument("ParameterStore::accumulate: layout mismatch");
    for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].values += other.tensors_[i].values;
}

bool ParameterStore::all_finite() const {
    for (const auto& t : tensors_) {
        if (!t.values.allFinite()) return false;
    }
    return true;
}

void ema_update(ParameterStore& shadow, const ParameterStore& current, double decay) {
    if (!shadow.same_layout(current)) throw std::invalid_argument("ema_update: parameter layout mismatch");
    for (std::size_t i = 0; i < shadow.count(); ++i) ema_update(shadow[i].span(), current[i].span(), decay);
}

AdamState AdamState::for_params(const ParameterStore& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParameterStore& params, const ParameterStore& grads, AdamState& state, const AdamConfig& config) {
    if (!params.same_layout(grads) || !params.same_layout(state.m) || !params.same_layout(state.v)) {
        throw std::invalid_argument("adam_step: parameter/gradient/moment layout mismatch");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(config.beta1, t);
    const double bias2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t k = 0; k < params.count(); ++k) {
        auto& p = params[k].values;
        const auto& g = grads[k].values;
        auto& m = state.m[k].values;
        auto& v = state.v[k].values;
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
        p.array() -= config.lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + config.epsilon);
    }
}

}  // namespace thz
