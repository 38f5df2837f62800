#pragma once

#include "thzdiff/diffusion.hpp"
#include "thzdiff/params.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace thz {

struct DitConfig {
    int n_rx = 8;
    int n_tx = 16;
    int patch_size = 4;
    int embed_dim = 64;
    int depth = 4;
    int n_heads = 4;
    double mlp_ratio = 4.0;
    // RMS of the normalized data, used by the preconditioning coefficients.
    double sigma_data = 1.0;

    // Throws std::invalid_argument naming the violated invariant.
    void validate() const;

    int grid_rows() const noexcept { return n_rx / patch_size; }
    int grid_cols() const noexcept { return n_tx / patch_size; }
    int tokens() const noexcept { return grid_rows() * grid_cols(); }
    int patch_dim() const noexcept { return 2 * patch_size * patch_size; }
    int head_dim() const noexcept { return embed_dim / n_heads; }
    int hidden_dim() const noexcept;
    Eigen::Index tensor_size() const noexcept { return 2LL * n_rx * n_tx; }
};

// Tensor (2 x n_rx x n_tx) -> N x 2P^2 matrix. Patches are ordered row-major over the patch grid;
// each row holds the patch's (channel, row, col) values in that nesting order.
RowMatrix patchify(const Eigen::VectorXd& tensor, int n_rx, int n_tx, int patch);
Eigen::VectorXd unpatchify(const RowMatrix& patches, int n_rx, int n_tx, int patch);

// Fixed 2-D sin/cos table: for token (i, j) the row is
// [sin(i w_k), cos(i w_k), sin(j w_k), cos(j w_k)], w_k = 10000^(-k / (D/4)), k < D/4.
RowMatrix positional_table(int grid_rows, int grid_cols, int embed_dim);

// Sinusoidal features [cos(c w_k), sin(c w_k)] of c_noise = ln(sigma) / 4, w_k = 10000^(-k / (dim/2)).
Eigen::VectorXd timestep_features(double sigma, int dim);

inline constexpr double kLayerNormEps = 1e-6;

// Row-wise normalization to zero mean and unit variance, no affine.
RowMatrix layer_norm(const RowMatrix& x);

// layer_norm(x) * (1 + scale) + shift, with scale/shift broadcast over tokens.
RowMatrix modulate(const RowMatrix& x, const Eigen::VectorXd& shift, const Eigen::VectorXd& scale);

// adaLN with modulation map (shift, scale) = silu(c) W + b, W: D x 2D.
RowMatrix adaln(const RowMatrix& x, const Eigen::VectorXd& c, const RowMatrix& weight, const Eigen::VectorXd& bias);

struct AttentionResult {
    RowMatrix output;                  // N x D after the output projection
    std::vector<RowMatrix> weights;    // per head, N x N, rows sum to 1
};

// Multi-head self-attention: [Q K V] = x W_qkv + b_qkv, softmax(Q_h K_h^T / sqrt(D/h)) V_h per head,
// heads concatenated then projected by W_o, b_o.
AttentionResult mhsa(const RowMatrix& x, const RowMatrix& qkv_weight, const Eigen::VectorXd& qkv_bias,
                     const RowMatrix& out_weight, const Eigen::VectorXd& out_bias, int n_heads);

// Preconditioning coefficients for D = c_skip H + c_out F(c_in H).
struct Preconditioning {
    double c_skip;
    double c_out;
    double c_in;

    static Preconditioning at(double sigma, double sigma_data);
};

struct DitForwardCache;

// Conditional DiT with adaLN-Zero blocks. Parameters (y = x W + b convention):
//   patch.{weight,bias}                      2P^2 -> D
//   time.fc1, time.fc2                       D -> D -> D on timestep features
//   cond.fc1, cond.fc2                       8 -> D -> D on the condition vector
//   blocks.i.{ada,qkv,proj,fc1,fc2}          ada: D -> 6D (shift1, scale1, gate1, shift2, scale2, gate2)
//   final.ada, final.head                    D -> 2D (shift, scale), D -> 2P^2
// The positional table is fixed and not part of the parameter store.
class DitModel final : public Denoiser {
public:
    DitModel(const DitConfig& config, ParameterStore params);

    // Fresh parameters: Xavier-uniform linears, N(0, 0.02) timestep MLP, zero biases; every adaLN map and
    // the output head start at zero so each block is the identity.
    static DitModel initialize(const DitConfig& config, std::uint64_t seed);
    // Parameter layout (all zeros) for a config.
    static ParameterStore parameter_layout(const DitConfig& config);

    const DitConfig& config() const noexcept { return config_; }
    const ParameterStore& params() const noexcept { return params_; }
    ParameterStore& params() noexcept { return params_; }
    const RowMatrix& positions() const noexcept { return positions_; }

    Eigen::VectorXd embed_timestep(double sigma) const;
    Eigen::VectorXd embed_condition(const GeometryCondition& condition) const;
    // c = e_t + e_p
    Eigen::VectorXd conditioning(double sigma, const GeometryCondition& condition) const;

    RowMatrix block_forward(int block, const RowMatrix& x, const Eigen::VectorXd& c) const;

    // F_theta: raw network output (no preconditioning) on an already scaled input.
    Eigen::VectorXd network(const Eigen::VectorXd& scaled_input, double sigma, const GeometryCondition& condition) const;

    // D_theta(H, sigma, p). Throws std::invalid_argument for sigma <= 0 or a wrong input size and
    // NumericError naming the layer on non-finite activations.
    Eigen::VectorXd denoise(const Eigen::VectorXd& noisy, double sigma,
                            const GeometryCondition& condition) const override;

    // Forward pass that records the intermediates needed by backward().
    DitForwardCache forward(const Eigen::VectorXd& noisy, double sigma, const GeometryCondition& condition) const;

    // Adds d(loss)/d(params) to `grads` given d(loss)/d(output) for a cached forward pass.
    void backward(const DitForwardCache& cache, const Eigen::VectorXd& grad_output, ParameterStore& grads) const;

private:
    DitConfig config_;
    ParameterStore params_;
    RowMatrix positions_;
};

struct DitBlockCache {
    RowMatrix input;
    Eigen::VectorXd modulation;  // 6D
    RowMatrix norm1;             // layer_norm(input)
    Eigen::VectorXd inv_std1;
    RowMatrix mod1;
    RowMatrix qkv;
    std::vector<RowMatrix> attention;
    RowMatrix heads;  // concatenated head outputs, N x D
    RowMatrix attn_out;
    RowMatrix mid;  // input + gate1 * attn_out
    RowMatrix norm2;
    Eigen::VectorXd inv_std2;
    RowMatrix mod2;
    RowMatrix fc1_pre;
    RowMatrix fc1_act;
    RowMatrix fc2_out;
};

struct DitForwardCache {
    bool valid = false;
    double sigma = 0.0;
    Preconditioning precond{};
    Eigen::VectorXd noisy;
    RowMatrix patches;  // patchify(c_in * noisy)
    Eigen::VectorXd time_features;
    Eigen::VectorXd time_hidden;  // pre-activation
    Eigen::VectorXd cond_input;
    Eigen::VectorXd cond_hidden;  // pre-activation
    Eigen::VectorXd c;
    std::vector<DitBlockCache> blocks;
    RowMatrix final_input;
    Eigen::VectorXd final_modulation;  // 2D
    RowMatrix final_norm;
    Eigen::VectorXd final_inv_std;
    RowMatrix final_mod;
    Eigen::VectorXd network_output;  // F_theta, unpatchified
    Eigen::VectorXd output;          // D_theta
};

}  // namespace thz
