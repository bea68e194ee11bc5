#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lsnt/matrix.hpp"
#include "lsnt/rng.hpp"

namespace lsnt {

/// Predicted probabilities are clamped to [kProbClamp, 1 - kProbClamp]
/// before any logarithm.
inline constexpr double kProbClamp = 1e-7;

enum class Pooling { mean, last };

struct ModelConfig {
    std::size_t d = 0;         // input feature dimension, set from the encoder
    std::size_t d_h = 32;      // latent dimension
    std::size_t h = 4;         // attention heads; must divide d_h
    std::size_t T = 16;        // window length
    std::size_t n_blocks = 2;  // stacked attention blocks
    std::size_t d_f = 0;       // classifier hidden width; 0 means 4*d_h
    double dropout_rate = 0.1;
    Pooling pooling = Pooling::mean;
    std::uint64_t seed = 7;

    std::size_t head_dim() const { return d_h / h; }
    std::size_t ff_dim() const { return d_f ? d_f : 4 * d_h; }

    /// Throws ConfigError on any violated constraint (h | d_h, T >= 1, ...).
    void validate() const;
};

/// One attention block: per-head Q/K/V projections plus the output map.
struct BlockParams {
    std::vector<Matrix> w_q, w_k, w_v;  // each d_h x (d_h/h)
    Matrix w_o;                         // d_h x d_h
};

struct ModelParams {
    Matrix w_e;   // d x d_h feature embedding
    Matrix pos;   // T x d_h fixed sinusoidal table, never trained
    std::vector<BlockParams> blocks;
    Matrix w1;    // d_h x d_f
    Matrix b1;    // 1 x d_f
    Matrix w2;    // d_f x 1
    Matrix b2;    // 1 x 1
};

struct HeadTrace {
    Matrix q, k, v;  // T x (d_h/h)
    Matrix attn;     // T x T, row-stochastic
};

struct BlockTrace {
    Matrix input;  // T x d_h
    std::vector<HeadTrace> heads;
    Matrix concat;  // T x d_h
    Matrix mask;    // dropout mask; empty when not applied
    Matrix output;  // T x d_h
};

/// Every intermediate needed by the backward pass.
struct ForwardTrace {
    Matrix x;
    Matrix h0;
    std::vector<BlockTrace> blocks;
    Matrix pooled;  // 1 x d_h
    Matrix z_pre;   // 1 x d_f
    Matrix z_mask;  // dropout mask on the hidden layer; empty when not applied
    Matrix z;       // 1 x d_f
    double y_pre = 0.0;
    double y_hat = 0.0;
};

/// Fixed table: pos[t, 2j] = sin(t / 10000^(2j/d_h)), pos[t, 2j+1] = cos(...).
Matrix positional_encoding(std::size_t T, std::size_t d_h);

/// Gaussian(0, 2/(fan_in+fan_out)) weights from SeededRng(cfg.seed), zero
/// biases, fixed positional table.
ModelParams init_params(const ModelConfig& cfg);

/// x * w_e + pos for a T x d window.
Matrix embed(const Matrix& x, const ModelParams& params);

/// softmax(q k^T / sqrt(d_k)) v for one head.
Matrix attention_head(const Matrix& h, const Matrix& w_q, const Matrix& w_k, const Matrix& w_v);
HeadTrace attention_head_traced(const Matrix& h, const Matrix& w_q, const Matrix& w_k,
                                const Matrix& w_v);

/// Concatenated heads projected by w_o, residual added, dropout when training.
Matrix multi_head(const Matrix& h, const BlockParams& block, double dropout_rate, bool training,
                  SeededRng* rng);
BlockTrace multi_head_traced(const Matrix& h, const BlockParams& block, double dropout_rate,
                             bool training, SeededRng* rng);

/// Pool over time, apply the two-layer head, return a probability in (0, 1).
double classify_head(const Matrix& h_final, const ModelParams& params, const ModelConfig& cfg);

/// Full pipeline; the returned trace carries y_hat and every intermediate.
/// rng is required only when training with a nonzero dropout rate.
ForwardTrace forward(const Matrix& x, const ModelParams& params, const ModelConfig& cfg,
                     bool training, SeededRng* rng);

/// Analytic gradients of the weighted binary cross-entropy loss with respect
/// to every learnable tensor (the positional table is excluded). Dropout
/// masks recorded in the trace are reused.
ModelParams backward(const ForwardTrace& trace, const ModelParams& params, const ModelConfig& cfg,
                     int label, double pos_weight = 1.0);

/// Same-shaped parameter set with all learnable tensors zeroed; pos is left
/// empty so optimizers cannot touch it.
ModelParams zeros_like_learnable(const ModelParams& params);

/// Learnable tensors in canonical order: w_e, per block (per head q/k/v, then
/// w_o), w1, b1, w2, b2. The order is the serialization and update contract.
std::vector<Matrix*> learnable_tensors(ModelParams& params);
std::vector<const Matrix*> learnable_tensors(const ModelParams& params);

/// All tensors with stable names (canonical order plus "pos" after "w_e").
std::vector<std::pair<std::string, const Matrix*>> tensor_manifest(const ModelParams& params);
std::vector<std::pair<std::string, Matrix*>> tensor_manifest(ModelParams& params);

/// Zero-valued parameter set in the shapes cfg prescribes, including the
/// (zeroed) positional slot; used when deserializing.
ModelParams shaped_params(const ModelConfig& cfg);

std::vector<double> flatten_learnable(const ModelParams& params);
void unflatten_learnable(ModelParams& params, const std::vector<double>& flat);

double sigmoid_scalar(double x);

}  // namespace lsnt
