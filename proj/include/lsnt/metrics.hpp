#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lsnt/train.hpp"

namespace lsnt {

struct ScoredSample {
    double score = 0.0;
    int label = 0;
};

/// Rank-based AUC (Mann-Whitney) with midranks: a tie between a positive and
/// a negative counts 0.5. Equals the fraction of correctly ordered
/// positive-negative pairs. Throws MetricError when only one class is present.
double auc(const std::vector<ScoredSample>& samples);

struct MetricsReport {
    double auc = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double threshold = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t n_pos = 0, n_neg = 0;
    bool no_predicted_positives = false;  // precision reported as 0 by convention

    bool operator==(const MetricsReport&) const = default;
};

/// Confusion counts and precision/recall/F1 at a threshold; a sample is
/// predicted positive iff score >= threshold. Does not fill `auc`.
MetricsReport prf_at(const std::vector<ScoredSample>& samples, double threshold);

/// Scans all distinct score midpoints plus {0, 1} and returns the threshold
/// maximizing F1, ties broken toward the larger threshold.
double best_f1_threshold(const std::vector<ScoredSample>& samples);

struct SweepEntry {
    std::size_t heads = 0;
    MetricsReport metrics;
    bool operator==(const SweepEntry&) const = default;
};

struct SweepResult {
    std::vector<SweepEntry> entries;  // head counts strictly increasing
    std::size_t best_heads = 0;       // argmax by AUC
    bool operator==(const SweepResult&) const = default;
};

/// Trains one model per head count on shared splits and seed, evaluates each
/// on the test split at its validation-selected threshold. Head counts must
/// be strictly increasing and divide base.d_h; validation happens before any
/// training starts.
SweepResult head_sweep(const WindowSplits& splits, ModelConfig base, const TrainConfig& tcfg,
                       const std::vector<std::size_t>& head_counts);

enum class ReportFormat { json, csv };

/// Fixed column order model,auc,f1,precision,recall,threshold; floats with
/// six decimal places in both formats.
std::string metrics_to_json(const MetricsReport& report, const std::string& model_name);
std::string metrics_to_csv(const MetricsReport& report, const std::string& model_name);
std::string sweep_to_json(const SweepResult& sweep);
std::string sweep_to_csv(const SweepResult& sweep);

void emit_report(const MetricsReport& report, const std::string& model_name, ReportFormat format,
                 const std::string& path);
void emit_report(const SweepResult& sweep, ReportFormat format, const std::string& path);

/// Parse back what metrics_to_json produced (round-trip support).
MetricsReport parse_metrics_json(const std::string& text, std::string* model_name = nullptr);

/// Inference scores for a window set, in order.
std::vector<ScoredSample> score_windows(const std::vector<SequenceWindow>& windows,
                                        const ModelParams& params, const ModelConfig& cfg);

}  // namespace lsnt
