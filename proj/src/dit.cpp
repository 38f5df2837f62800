#include "thzdiff/dit.hpp"

#include "thzdiff/errors.hpp"
#include "thzdiff/random.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace thz {

namespace {

using Eigen::VectorXd;

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

VectorXd silu(const VectorXd& x) {
    return x.unaryExpr([](double v) { return v * sigmoid(v); });
}

VectorXd silu_grad(const VectorXd& x) {
    return x.unaryExpr([](double v) {
        double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
    });
}

RowMatrix gelu(const RowMatrix& x) {
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); });
}

RowMatrix gelu_grad(const RowMatrix& x) {
    return x.unaryExpr([](double v) {
        double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    });
}

RowMatrix layer_norm_cached(const RowMatrix& x, VectorXd& inv_std) {
    const double d = static_cast<double>(x.cols());
    RowMatrix out(x.rows(), x.cols());
    inv_std.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).sum() / d;
        const double var = (x.row(r).array() - mean).square().sum() / d;
        inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
        out.row(r) = (x.row(r).array() - mean) * inv_std[r];
    }
    return out;
}

RowMatrix layer_norm_backward(const RowMatrix& grad_norm, const RowMatrix& norm, const VectorXd& inv_std) {
    const double d = static_cast<double>(norm.cols());
    RowMatrix dx(norm.rows(), norm.cols());
    for (Eigen::Index r = 0; r < norm.rows(); ++r) {
        const double mean_g = grad_norm.row(r).sum() / d;
        const double mean_gx = grad_norm.row(r).dot(norm.row(r)) / d;
        dx.row(r) = inv_std[r] * (grad_norm.row(r).array() - mean_g - norm.row(r).array() * mean_gx);
    }
    return dx;
}

RowMatrix modulate_norm(const RowMatrix& norm, const VectorXd& shift, const VectorXd& scale) {
    RowMatrix out = norm;
    out.array().rowwise() *= (1.0 + scale.array()).transpose();
    out.rowwise() += shift.transpose();
    return out;
}

RowMatrix linear(const RowMatrix& x, const Tensor& w, const Tensor& b) {
    RowMatrix y = x * w.matrix();
    y.rowwise() += b.values.transpose();
    return y;
}

VectorXd linear(const VectorXd& x, const Tensor& w, const Tensor& b) {
    return (x.transpose() * w.matrix()).transpose() + b.values;
}

// Accumulates weight/bias gradients of y = x W + b and returns dL/dx.
RowMatrix linear_backward(const RowMatrix& x, const RowMatrix& grad_y, const Tensor& w, Tensor& gw, Tensor& gb) {
    gw.matrix().noalias() += x.transpose() * grad_y;
    gb.values += grad_y.colwise().sum().transpose();
    return grad_y * w.matrix().transpose();
}

VectorXd linear_backward(const VectorXd& x, const VectorXd& grad_y, const Tensor& w, Tensor& gw, Tensor& gb) {
    gw.matrix().noalias() += x * grad_y.transpose();
    gb.values += grad_y;
    return w.matrix() * grad_y;
}

void check_finite(const RowMatrix& m, const std::string& layer) {
    if (!m.allFinite()) throw NumericError("dit_forward: non-finite activations in " + layer);
}

void check_finite(const VectorXd& v, const std::string& layer) {
    if (!v.allFinite()) throw NumericError("dit_forward: non-finite activations in " + layer);
}

std::string block_name(int b, const char* part) { return "blocks." + std::to_string(b) + "." + part; }

struct BlockParams {
    const Tensor &ada_w, &ada_b, &qkv_w, &qkv_b, &proj_w, &proj_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b;
};

struct BlockGrads {
    Tensor &ada_w, &ada_b, &qkv_w, &qkv_b, &proj_w, &proj_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b;
};

template <typename Store, typename Out>
Out block_tensors(Store& store, int b) {
    return Out{store.at(block_name(b, "ada.weight")),  store.at(block_name(b, "ada.bias")),
               store.at(block_name(b, "qkv.weight")),  store.at(block_name(b, "qkv.bias")),
               store.at(block_name(b, "proj.weight")), store.at(block_name(b, "proj.bias")),
               store.at(block_name(b, "fc1.weight")),  store.at(block_name(b, "fc1.bias")),
               store.at(block_name(b, "fc2.weight")),  store.at(block_name(b, "fc2.bias"))};
}

AttentionResult attention_core(const RowMatrix& qkv, int n_heads, RowMatrix& heads) {
    const Eigen::Index n = qkv.rows();
    const Eigen::Index d = qkv.cols() / 3;
    const Eigen::Index hd = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    AttentionResult res;
    heads.resize(n, d);
    for (int h = 0; h < n_heads; ++h) {
        auto q = qkv.middleCols(h * hd, hd);
        auto k = qkv.middleCols(d + h * hd, hd);
        auto v = qkv.middleCols(2 * d + h * hd, hd);
        RowMatrix scores = scale * (q * k.transpose());
        for (Eigen::Index r = 0; r < n; ++r) {
            double mx = scores.row(r).maxCoeff();
            scores.row(r) = (scores.row(r).array() - mx).exp();
            scores.row(r) /= scores.row(r).sum();
        }
        heads.middleCols(h * hd, hd).noalias() = scores * v;
        res.weights.push_back(std::move(scores));
    }
    return res;
}

RowMatrix run_block(const BlockParams& p, const RowMatrix& x, const VectorXd& sc, int n_heads, DitBlockCache& c) {
    const Eigen::Index d = x.cols();
    c.input = x;
    c.modulation = linear(sc, p.ada_w, p.ada_b);
    const VectorXd shift1 = c.modulation.segment(0, d), scale1 = c.modulation.segment(d, d),
                   gate1 = c.modulation.segment(2 * d, d), shift2 = c.modulation.segment(3 * d, d),
                   scale2 = c.modulation.segment(4 * d, d), gate2 = c.modulation.segment(5 * d, d);

    c.norm1 = layer_norm_cached(x, c.inv_std1);
    c.mod1 = modulate_norm(c.norm1, shift1, scale1);
    c.qkv = linear(c.mod1, p.qkv_w, p.qkv_b);
    c.attention = attention_core(c.qkv, n_heads, c.heads).weights;
    c.attn_out = linear(c.heads, p.proj_w, p.proj_b);
    c.mid = x;
    c.mid.array() += c.attn_out.array().rowwise() * gate1.transpose().array();

    c.norm2 = layer_norm_cached(c.mid, c.inv_std2);
    c.mod2 = modulate_norm(c.norm2, shift2, scale2);
    c.fc1_pre = linear(c.mod2, p.fc1_w, p.fc1_b);
    c.fc1_act = gelu(c.fc1_pre);
    c.fc2_out = linear(c.fc1_act, p.fc2_w, p.fc2_b);
    RowMatrix out = c.mid;
    out.array() += c.fc2_out.array().rowwise() * gate2.transpose().array();
    return out;
}

// Returns dL/d(block input); accumulates dL/d(silu(c)) into grad_sc.
RowMatrix block_backward(const BlockParams& p, BlockGrads& g, const DitBlockCache& c, const RowMatrix& grad_out,
                         const VectorXd& sc, int n_heads, VectorXd& grad_sc) {
    const Eigen::Index d = c.input.cols();
    const Eigen::Index n = c.input.rows();
    const Eigen::Index hd = d / n_heads;
    const VectorXd scale1 = c.modulation.segment(d, d), gate1 = c.modulation.segment(2 * d, d),
                   scale2 = c.modulation.segment(4 * d, d), gate2 = c.modulation.segment(5 * d, d);
    VectorXd grad_mod(6 * d);

    // out = mid + gate2 * fc2_out
    RowMatrix grad_mid = grad_out;
    grad_mod.segment(5 * d, d) = (grad_out.array() * c.fc2_out.array()).colwise().sum().transpose();
    RowMatrix grad_fc2 = grad_out.array().rowwise() * gate2.transpose().array();
    RowMatrix grad_act = linear_backward(c.fc1_act, grad_fc2, p.fc2_w, g.fc2_w, g.fc2_b);
    RowMatrix grad_pre = grad_act.cwiseProduct(gelu_grad(c.fc1_pre));
    RowMatrix grad_mod2 = linear_backward(c.mod2, grad_pre, p.fc1_w, g.fc1_w, g.fc1_b);
    grad_mod.segment(3 * d, d) = grad_mod2.colwise().sum().transpose();
    grad_mod.segment(4 * d, d) = (grad_mod2.array() * c.norm2.array()).colwise().sum().transpose();
    RowMatrix grad_norm2 = grad_mod2.array().rowwise() * (1.0 + scale2.array()).transpose();
    grad_mid += layer_norm_backward(grad_norm2, c.norm2, c.inv_std2);

    // mid = input + gate1 * attn_out
    RowMatrix grad_in = grad_mid;
    grad_mod.segment(2 * d, d) = (grad_mid.array() * c.attn_out.array()).colwise().sum().transpose();
    RowMatrix grad_attn = grad_mid.array().rowwise() * gate1.transpose().array();
    RowMatrix grad_heads = linear_backward(c.heads, grad_attn, p.proj_w, g.proj_w, g.proj_b);

    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
    RowMatrix grad_qkv(n, 3 * d);
    for (int h = 0; h < n_heads; ++h) {
        auto q = c.qkv.middleCols(h * hd, hd);
        auto k = c.qkv.middleCols(d + h * hd, hd);
        auto v = c.qkv.middleCols(2 * d + h * hd, hd);
        const RowMatrix& a = c.attention[h];
        auto grad_o = grad_heads.middleCols(h * hd, hd);
        RowMatrix grad_a = grad_o * v.transpose();
        grad_qkv.middleCols(2 * d + h * hd, hd).noalias() = a.transpose() * grad_o;
        // softmax backward, row-wise
        VectorXd row_dot = (grad_a.array() * a.array()).rowwise().sum();
        RowMatrix grad_s = a.array() * (grad_a.array().colwise() - row_dot.array());
        grad_qkv.middleCols(h * hd, hd).noalias() = att_scale * (grad_s * k);
        grad_qkv.middleCols(d + h * hd, hd).noalias() = att_scale * (grad_s.transpose() * q);
    }
    RowMatrix grad_mod1 = linear_backward(c.mod1, grad_qkv, p.qkv_w, g.qkv_w, g.qkv_b);
    grad_mod.segment(0, d) = grad_mod1.colwise().sum().transpose();
    grad_mod.segment(d, d) = (grad_mod1.array() * c.norm1.array()).colwise().sum().transpose();
    RowMatrix grad_norm1 = grad_mod1.array().rowwise() * (1.0 + scale1.array()).transpose();
    grad_in += layer_norm_backward(grad_norm1, c.norm1, c.inv_std1);

    grad_sc += linear_backward(sc, grad_mod, p.ada_w, g.ada_w, g.ada_b);
    return grad_in;
}

void xavier_uniform(Tensor& t, Rng& rng) {
    const double fan_in = t.shape[0];
    const double fan_out = t.shape[1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : t.values) v = uniform(rng, -bound, bound);
}

}  // namespace

void DitConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("DitConfig: " + what); };
    if (patch_size < 1) fail("patch_size must be >= 1");
    if (n_rx < 1 || n_tx < 1) fail("input dims must be positive");
    if (n_rx % patch_size || n_tx % patch_size) fail("n_rx and n_tx must be divisible by patch_size");
    if (embed_dim < 4 || embed_dim % 4) fail("embed_dim must be a positive multiple of 4");
    if (n_heads < 1 || embed_dim % n_heads) fail("embed_dim must be divisible by n_heads");
    if (depth < 0) fail("depth must be >= 0");
    if (!(mlp_ratio > 0.0) || hidden_dim() < 1) fail("mlp_ratio must give a positive hidden width");
    if (!(sigma_data > 0.0)) fail("sigma_data must be positive");
}

int DitConfig::hidden_dim() const noexcept {
    return static_cast<int>(std::lround(mlp_ratio * embed_dim));
}

RowMatrix patchify(const Eigen::VectorXd& tensor, int n_rx, int n_tx, int patch) {
    if (patch < 1 || n_rx % patch || n_tx % patch) {
        throw std::invalid_argument("patchify: dims must be divisible by the patch size");
    }
    if (tensor.size() != 2LL * n_rx * n_tx) throw std::invalid_argument("patchify: tensor size mismatch");
    const int gr = n_rx / patch, gc = n_tx / patch;
    const Eigen::Index plane = static_cast<Eigen::Index>(n_rx) * n_tx;
    RowMatrix out(gr * gc, 2 * patch * patch);
    for (int i = 0; i < gr; ++i) {
        for (int j = 0; j < gc; ++j) {
            for (int ch = 0; ch < 2; ++ch) {
                for (int r = 0; r < patch; ++r) {
                    for (int c = 0; c < patch; ++c) {
                        out(i * gc + j, (ch * patch + r) * patch + c) =
                            tensor[ch * plane + static_cast<Eigen::Index>(i * patch + r) * n_tx + j * patch + c];
                    }
                }
            }
        }
    }
    return out;
}

Eigen::VectorXd unpatchify(const RowMatrix& patches, int n_rx, int n_tx, int patch) {
    if (patch < 1 || n_rx % patch || n_tx % patch) {
        throw std::invalid_argument("unpatchify: dims must be divisible by the patch size");
    }
    const int gr = n_rx / patch, gc = n_tx / patch;
    if (patches.rows() != gr * gc || patches.cols() != 2 * patch * patch) {
        throw std::invalid_argument("unpatchify: patch matrix shape mismatch");
    }
    const Eigen::Index plane = static_cast<Eigen::Index>(n_rx) * n_tx;
    Eigen::VectorXd out(2 * plane);
    for (int i = 0; i < gr; ++i) {
        for (int j = 0; j < gc; ++j) {
            for (int ch = 0; ch < 2; ++ch) {
                for (int r = 0; r < patch; ++r) {
                    for (int c = 0; c < patch; ++c) {
                        out[ch * plane + static_cast<Eigen::Index>(i * patch + r) * n_tx + j * patch + c] =
                            patches(i * gc + j, (ch * patch + r) * patch + c);
                    }
                }
            }
        }
    }
    return out;
}

RowMatrix positional_table(int grid_rows, int grid_cols, int embed_dim) {
    if (embed_dim < 4 || embed_dim % 4) throw std::invalid_argument("positional_table: embed_dim must be divisible by 4");
    if (grid_rows < 1 || grid_cols < 1) throw std::invalid_argument("positional_table: empty grid");
    const int quarter = embed_dim / 4;
    RowMatrix table(grid_rows * grid_cols, embed_dim);
    for (int i = 0; i < grid_rows; ++i) {
        for (int j = 0; j < grid_cols; ++j) {
            auto row = table.row(i * grid_cols + j);
            for (int k = 0; k < quarter; ++k) {
                const double w = std::pow(10000.0, -static_cast<double>(k) / quarter);
                row[k] = std::sin(i * w);
                row[quarter + k] = std::cos(i * w);
                row[2 * quarter + k] = std::sin(j * w);
                row[3 * quarter + k] = std::cos(j * w);
            }
        }
    }
    return table;
}

Eigen::VectorXd timestep_features(double sigma, int dim) {
    if (!(sigma > 0.0)) throw std::invalid_argument("embed_timestep: sigma must be positive");
    if (dim < 2 || dim % 2) throw std::invalid_argument("timestep_features: dim must be even");
    const double c_noise = std::log(sigma) / 4.0;
    const int half = dim / 2;
    Eigen::VectorXd f(dim);
    for (int k = 0; k < half; ++k) {
        const double w = std::exp(-std::log(10000.0) * k / half);
        f[k] = std::cos(c_noise * w);
        f[half + k] = std::sin(c_noise * w);
    }
    return f;
}

RowMatrix layer_norm(const RowMatrix& x) {
    Eigen::VectorXd inv_std;
    return layer_norm_cached(x, inv_std);
}

RowMatrix modulate(const RowMatrix& x, const Eigen::VectorXd& shift, const Eigen::VectorXd& scale) {
    if (shift.size() != x.cols() || scale.size() != x.cols()) throw std::invalid_argument("modulate: shape mismatch");
    return modulate_norm(layer_norm(x), shift, scale);
}

RowMatrix adaln(const RowMatrix& x, const Eigen::VectorXd& c, const RowMatrix& weight, const Eigen::VectorXd& bias) {
    const Eigen::Index d = x.cols();
    if (c.size() != weight.rows() || weight.cols() != 2 * d || bias.size() != 2 * d) {
        throw std::invalid_argument("adaln: shape mismatch");
    }
    Eigen::VectorXd mod = (silu(c).transpose() * weight).transpose() + bias;
    return modulate(x, mod.segment(0, d), mod.segment(d, d));
}

AttentionResult mhsa(const RowMatrix& x, const RowMatrix& qkv_weight, const Eigen::VectorXd& qkv_bias,
                     const RowMatrix& out_weight, const Eigen::VectorXd& out_bias, int n_heads) {
    const Eigen::Index d = x.cols();
    if (n_heads < 1 || d % n_heads) throw std::invalid_argument("mhsa: embed dim must be divisible by n_heads");
    if (qkv_weight.rows() != d || qkv_weight.cols() != 3 * d || qkv_bias.size() != 3 * d ||
        out_weight.rows() != d || out_weight.cols() != d || out_bias.size() != d) {
        throw std::invalid_argument("mhsa: weight shape mismatch");
    }
    RowMatrix qkv = x * qkv_weight;
    qkv.rowwise() += qkv_bias.transpose();
    RowMatrix heads;
    AttentionResult res = attention_core(qkv, n_heads, heads);
    res.output = heads * out_weight;
    res.output.rowwise() += out_bias.transpose();
    return res;
}

Preconditioning Preconditioning::at(double sigma, double sigma_data) {
    const double s2 = sigma * sigma;
    const double d2 = sigma_data * sigma_data;
    return {d2 / (s2 + d2), sigma * sigma_data / std::sqrt(s2 + d2), 1.0 / std::sqrt(s2 + d2)};
}

ParameterStore DitModel::parameter_layout(const DitConfig& cfg) {
    cfg.validate();
    const int d = cfg.embed_dim;
    ParameterStore p;
    p.add("patch.weight", {cfg.patch_dim(), d});
    p.add("patch.bias", {d});
    p.add("time.fc1.weight", {d, d});
    p.add("time.fc1.bias", {d});
    p.add("time.fc2.weight", {d, d});
    p.add("time.fc2.bias", {d});
    p.add("cond.fc1.weight", {kConditionDim, d});
    p.add("cond.fc1.bias", {d});
    p.add("cond.fc2.weight", {d, d});
    p.add("cond.fc2.bias", {d});
    for (int b = 0; b < cfg.depth; ++b) {
        p.add(block_name(b, "ada.weight"), {d, 6 * d});
        p.add(block_name(b, "ada.bias"), {6 * d});
        p.add(block_name(b, "qkv.weight"), {d, 3 * d});
        p.add(block_name(b, "qkv.bias"), {3 * d});
        p.add(block_name(b, "proj.weight"), {d, d});
        p.add(block_name(b, "proj.bias"), {d});
        p.add(block_name(b, "fc1.weight"), {d, cfg.hidden_dim()});
        p.add(block_name(b, "fc1.bias"), {cfg.hidden_dim()});
        p.add(block_name(b, "fc2.weight"), {cfg.hidden_dim(), d});
        p.add(block_name(b, "fc2.bias"), {d});
    }
    p.add("final.ada.weight", {d, 2 * d});
    p.add("final.ada.bias", {2 * d});
    p.add("final.head.weight", {d, cfg.patch_dim()});
    p.add("final.head.bias", {cfg.patch_dim()});
    return p;
}

DitModel::DitModel(const DitConfig& config, ParameterStore params) : config_(config), params_(std::move(params)) {
    config_.validate();
    if (!params_.same_layout(parameter_layout(config_))) {
        throw std::invalid_argument("DitModel: parameter layout does not match the config");
    }
    positions_ = positional_table(config_.grid_rows(), config_.grid_cols(), config_.embed_dim);
}

DitModel DitModel::initialize(const DitConfig& config, std::uint64_t seed) {
    ParameterStore p = parameter_layout(config);
    Rng rng = stream_rng(seed, 0);
    for (Tensor& t : p) {
        const bool is_weight = t.shape.size() == 2;
        const bool zero_init = t.name.find(".ada.") != std::string::npos || t.name.rfind("final.head", 0) == 0;
        if (!is_weight || zero_init) continue;
        if (t.name.rfind("time.", 0) == 0) {
            for (double& v : t.values) v = 0.02 * standard_normal(rng);
        } else {
            xavier_uniform(t, rng);
        }
    }
    return DitModel(config, std::move(p));
}

Eigen::VectorXd DitModel::embed_timestep(double sigma) const {
    Eigen::VectorXd f = timestep_features(sigma, config_.embed_dim);
    return linear(silu(linear(f, params_.at("time.fc1.weight"), params_.at("time.fc1.bias"))),
                  params_.at("time.fc2.weight"), params_.at("time.fc2.bias"));
}

Eigen::VectorXd DitModel::embed_condition(const GeometryCondition& condition) const {
    Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(condition.p.data(), kConditionDim);
    if (!p.allFinite()) throw std::invalid_argument("embed_condition: non-finite condition vector");
    return linear(silu(linear(p, params_.at("cond.fc1.weight"), params_.at("cond.fc1.bias"))),
                  params_.at("cond.fc2.weight"), params_.at("cond.fc2.bias"));
}

Eigen::VectorXd DitModel::conditioning(double sigma, const GeometryCondition& condition) const {
    return embed_timestep(sigma) + embed_condition(condition);
}

RowMatrix DitModel::block_forward(int block, const RowMatrix& x, const Eigen::VectorXd& c) const {
    if (block < 0 || block >= config_.depth) throw std::out_of_range("block_forward: bad block index");
    if (x.cols() != config_.embed_dim || c.size() != config_.embed_dim) {
        throw std::invalid_argument("block_forward: shape mismatch");
    }
    DitBlockCache cache;
    return run_block(block_tensors<const ParameterStore, BlockParams>(params_, block), x, silu(c), config_.n_heads,
                     cache);
}

DitForwardCache DitModel::forward(const Eigen::VectorXd& noisy, double sigma, const GeometryCondition& condition) const {
    if (!(sigma > 0.0)) throw std::invalid_argument("dit_forward: sigma must be positive");
    if (noisy.size() != config_.tensor_size()) {
        throw std::invalid_argument("dit_forward: input has " + std::to_string(noisy.size()) + " entries, expected " +
                                    std::to_string(config_.tensor_size()));
    }
    DitForwardCache c;
    c.sigma = sigma;
    c.noisy = noisy;
    c.precond = Preconditioning::at(sigma, config_.sigma_data);
    c.patches = patchify(c.precond.c_in * noisy, config_.n_rx, config_.n_tx, config_.patch_size);

    c.time_features = timestep_features(sigma, config_.embed_dim);
    c.time_hidden = linear(c.time_features, params_.at("time.fc1.weight"), params_.at("time.fc1.bias"));
    Eigen::VectorXd e_t = linear(silu(c.time_hidden), params_.at("time.fc2.weight"), params_.at("time.fc2.bias"));
    c.cond_input = Eigen::Map<const Eigen::VectorXd>(condition.p.data(), kConditionDim);
    if (!c.cond_input.allFinite()) throw std::invalid_argument("embed_condition: non-finite condition vector");
    c.cond_hidden = linear(c.cond_input, params_.at("cond.fc1.weight"), params_.at("cond.fc1.bias"));
    Eigen::VectorXd e_p = linear(silu(c.cond_hidden), params_.at("cond.fc2.weight"), params_.at("cond.fc2.bias"));
    c.c = e_t + e_p;
    check_finite(c.c, "conditioning");
    const Eigen::VectorXd sc = silu(c.c);

    RowMatrix x = linear(c.patches, params_.at("patch.weight"), params_.at("patch.bias")) + positions_;
    check_finite(x, "patch");
    c.blocks.resize(config_.depth);
    for (int b = 0; b < config_.depth; ++b) {
        x = run_block(block_tensors<const ParameterStore, BlockParams>(params_, b), x, sc, config_.n_heads, c.blocks[b]);
        check_finite(x, "blocks." + std::to_string(b));
    }

    const int d = config_.embed_dim;
    c.final_input = x;
    c.final_modulation = linear(sc, params_.at("final.ada.weight"), params_.at("final.ada.bias"));
    c.final_norm = layer_norm_cached(x, c.final_inv_std);
    c.final_mod = modulate_norm(c.final_norm, c.final_modulation.segment(0, d), c.final_modulation.segment(d, d));
    RowMatrix head = linear(c.final_mod, params_.at("final.head.weight"), params_.at("final.head.bias"));
    check_finite(head, "final.head");
    c.network_output = unpatchify(head, config_.n_rx, config_.n_tx, config_.patch_size);
    c.output = c.precond.c_skip * noisy + c.precond.c_out * c.network_output;
    c.valid = true;
    return c;
}

Eigen::VectorXd DitModel::network(const Eigen::VectorXd& scaled_input, double sigma,
                                  const GeometryCondition& condition) const {
    Preconditioning pc = Preconditioning::at(sigma, config_.sigma_data);
    return forward(scaled_input / pc.c_in, sigma, condition).network_output;
}

Eigen::VectorXd DitModel::denoise(const Eigen::VectorXd& noisy, double sigma, const GeometryCondition& condition) const {
    return forward(noisy, sigma, condition).output;
}

void DitModel::backward(const DitForwardCache& c, const Eigen::VectorXd& grad_output, ParameterStore& grads) const {
    if (!c.valid) throw std::logic_error("dit_backward: missing forward context");
    if (grad_output.size() != config_.tensor_size()) throw std::invalid_argument("dit_backward: gradient size mismatch");
    if (!grads.same_layout(params_)) throw std::invalid_argument("dit_backward: gradient store layout mismatch");
    const int d = config_.embed_dim;
    const Eigen::VectorXd sc = silu(c.c);
    Eigen::VectorXd grad_sc = Eigen::VectorXd::Zero(d);

    RowMatrix grad_head =
        patchify(c.precond.c_out * grad_output, config_.n_rx, config_.n_tx, config_.patch_size);
    RowMatrix grad_mod = linear_backward(c.final_mod, grad_head, params_.at("final.head.weight"),
                                         grads.at("final.head.weight"), grads.at("final.head.bias"));
    Eigen::VectorXd grad_fmod(2 * d);
    grad_fmod.segment(0, d) = grad_mod.colwise().sum().transpose();
    grad_fmod.segment(d, d) = (grad_mod.array() * c.final_norm.array()).colwise().sum().transpose();
    RowMatrix grad_norm = grad_mod.array().rowwise() * (1.0 + c.final_modulation.segment(d, d).array()).transpose();
    RowMatrix grad_x = layer_norm_backward(grad_norm, c.final_norm, c.final_inv_std);
    grad_sc += linear_backward(sc, grad_fmod, params_.at("final.ada.weight"), grads.at("final.ada.weight"),
                               grads.at("final.ada.bias"));

    for (int b = config_.depth - 1; b >= 0; --b) {
        BlockGrads g = block_tensors<ParameterStore, BlockGrads>(grads, b);
        grad_x = block_backward(block_tensors<const ParameterStore, BlockParams>(params_, b), g, c.blocks[b], grad_x, sc,
                                config_.n_heads, grad_sc);
    }

    linear_backward(c.patches, grad_x, params_.at("patch.weight"), grads.at("patch.weight"), grads.at("patch.bias"));

    const Eigen::VectorXd grad_c = grad_sc.cwiseProduct(silu_grad(c.c));
    Eigen::VectorXd grad_t = linear_backward(silu(c.time_hidden), grad_c, params_.at("time.fc2.weight"),
                                             grads.at("time.fc2.weight"), grads.at("time.fc2.bias"));
    linear_backward(c.time_features, grad_t.cwiseProduct(silu_grad(c.time_hidden)), params_.at("time.fc1.weight"),
                    grads.at("time.fc1.weight"), grads.at("time.fc1.bias"));
    Eigen::VectorXd grad_p = linear_backward(silu(c.cond_hidden), grad_c, params_.at("cond.fc2.weight"),
                                             grads.at("cond.fc2.weight"), grads.at("cond.fc2.bias"));
    linear_backward(c.cond_input, grad_p.cwiseProduct(silu_grad(c.cond_hidden)), params_.at("cond.fc1.weight"),
                    grads.at("cond.fc1.weight"), grads.at("cond.fc1.bias"));
}

}  // namespace thz
