#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsnt/data.hpp"
#include "lsnt/model.hpp"

namespace lsnt {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::size_t patience = 5;  // epochs without validation-AUC improvement
    double pos_weight = 0.0;   // <= 0 selects N_neg/N_pos from the training split
    std::uint64_t seed = 7;

    void validate() const;
};

/// Weighted binary cross-entropy on a clamped probability:
/// -(pos_weight * y * ln p + (1 - y) * ln(1 - p)).
double bce_loss(double y_hat, int label, double pos_weight = 1.0);

struct AdamState {
    ModelParams m, v;  // first and second moments, shaped like the params
};

AdamState init_adam_state(const ModelParams& params);

/// Bias-corrected adaptive-moment update over every learnable tensor; the
/// positional table is never touched. t is the 1-based step index.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg, std::size_t t);

struct TrainReport {
    std::vector<double> train_loss;  // mean per-example loss per epoch
    std::vector<double> val_auc;     // per epoch
    std::size_t best_epoch = 0;      // 1-based; 0 when no epochs ran
    double wall_seconds = 0.0;
};

struct TrainResult {
    ModelParams params;  // from the best validation epoch
    TrainReport report;
};

/// Mini-batch loop with per-epoch seeded shuffling of the training set only,
/// early stopping on validation AUC, and parameters returned from the best
/// epoch. Gradients are reduced in example order, so identical seeds give
/// identical runs.
TrainResult train(const std::vector<SequenceWindow>& train_windows,
                  const std::vector<SequenceWindow>& val_windows, const ModelConfig& mcfg,
                  const TrainConfig& tcfg);

struct WindowSplits {
    std::vector<SequenceWindow> train, val, test;
};

struct PreparedData {
    FeatureEncoder encoder;  // fitted on the training split only
    WindowSplits windows;
};

/// The standard batch pipeline: chronological record split, encoder fit on
/// the training records, per-split windowing with the same frozen encoder.
PreparedData prepare_splits(const std::vector<TransactionRecord>& records, std::size_t T,
                            std::size_t stride = 1, LabelRule rule = LabelRule::any_positive);

/// A trained model bundle: weights, config, frozen encoder, and the alert
/// threshold chosen on validation.
struct TrainedModel {
    ModelParams params;
    ModelConfig cfg;
    FeatureEncoder encoder;
    double threshold = 0.5;
};

/// Binary model file: magic "LSNT", u16 version, u32 header length, canonical
/// JSON header (config, encoder, tensor manifest, threshold), then raw
/// little-endian 64-bit float payloads in manifest order.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

/// Max guarded relative error between analytic gradients and central finite
/// differences of the full forward + BCE pipeline on a random window.
/// Requires cfg.dropout_rate == 0.
double gradient_check_max_error(const ModelConfig& cfg, std::uint64_t data_seed, int label,
                                double pos_weight = 1.0, double eps = 1e-5);

}  // namespace lsnt
