#include "lsnt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "lsnt/errors.hpp"

namespace lsnt {

double auc(const std::vector<ScoredSample>& samples) {
    std::size_t n_pos = 0;
    for (const auto& s : samples) n_pos += (s.label == 1);
    const std::size_t n_neg = samples.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw MetricError("AUC is undefined for a single-class sample set");
    }

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return samples[a].score < samples[b].score;
    });

    // midranks over tie groups
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (samples[order[k]].label == 1) pos_rank_sum += midrank;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

MetricsReport prf_at(const std::vector<ScoredSample>& samples, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) {
        throw ParameterError("threshold must be in [0, 1], got " + std::to_string(threshold));
    }
    MetricsReport r;
    r.threshold = threshold;
    for (const auto& s : samples) {
        const bool predicted = s.score >= threshold;
        if (s.label == 1) {
            ++r.n_pos;
            predicted ? ++r.tp : ++r.fn;
        } else {
            ++r.n_neg;
            predicted ? ++r.fp : ++r.tn;
        }
    }
    if (r.tp + r.fp == 0) {
        r.no_predicted_positives = true;
        r.precision = 0.0;
    } else {
        r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
    }
    r.recall = (r.n_pos == 0) ? 0.0 : static_cast<double>(r.tp) / static_cast<double>(r.n_pos);
    r.f1 = (r.precision + r.recall > 0.0)
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

double best_f1_threshold(const std::vector<ScoredSample>& samples) {
    bool any_pos = false, any_neg = false;
    for (const auto& s : samples) (s.label == 1 ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg) {
        throw MetricError("F1 threshold selection needs both classes");
    }

    std::vector<double> scores;
    scores.reserve(samples.size());
    for (const auto& s : samples) scores.push_back(s.score);
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

    std::vector<double> candidates = {0.0};
    for (std::size_t i = 0; i + 1 < scores.size(); ++i) {
        const double mid = 0.5 * (scores[i] + scores[i + 1]);
        if (mid > 0.0 && mid < 1.0) candidates.push_back(mid);
    }
    candidates.push_back(1.0);
    std::sort(candidates.begin(), candidates.end());

    double best_f1 = -1.0;
    double best_t = 0.0;
    for (double t : candidates) {
        const MetricsReport r = prf_at(samples, t);
        if (r.f1 >= best_f1) {  // >= breaks ties toward the larger threshold
            best_f1 = r.f1;
            best_t = t;
        }
    }
    return best_t;
}

std::vector<ScoredSample> score_windows(const std::vector<SequenceWindow>& windows,
                                        const ModelParams& params, const ModelConfig& cfg) {
    std::vector<ScoredSample> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        out.push_back({forward(w.features, params, cfg, false, nullptr).y_hat, w.label});
    }
    return out;
}

SweepResult head_sweep(const WindowSplits& splits, ModelConfig base, const TrainConfig& tcfg,
                       const std::vector<std::size_t>& head_counts) {
    if (head_counts.empty()) throw ConfigError("head sweep needs at least one head count");
    for (std::size_t i = 0; i < head_counts.size(); ++i) {
        if (i > 0 && head_counts[i] <= head_counts[i - 1]) {
            throw ConfigError("head counts must be strictly increasing");
        }
        if (head_counts[i] == 0 || base.d_h % head_counts[i] != 0) {
            throw ConfigError("head count " + std::to_string(head_counts[i]) +
                              " does not divide d_h=" + std::to_string(base.d_h));
        }
    }

    SweepResult result;
    double best_auc = -1.0;
    for (std::size_t h : head_counts) {
        ModelConfig cfg = base;
        cfg.h = h;
        TrainResult trained = train(splits.train, splits.val, cfg, tcfg);
        const double threshold =
            best_f1_threshold(score_windows(splits.val, trained.params, cfg));
        const auto test_scores = score_windows(splits.test, trained.params, cfg);
        MetricsReport report = prf_at(test_scores, threshold);
        report.auc = auc(test_scores);

        if (report.auc > best_auc) {
            best_auc = report.auc;
            result.best_heads = h;
        }
        result.entries.push_back({h, std::move(report)});
    }
    return result;
}

namespace {

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_text(const std::string& text, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

constexpr const char* kCsvHeader = "model,auc,f1,precision,recall,threshold\n";

std::string csv_row(const MetricsReport& r, const std::string& name) {
    return name + "," + fmt6(r.auc) + "," + fmt6(r.f1) + "," + fmt6(r.precision) + "," +
           fmt6(r.recall) + "," + fmt6(r.threshold) + "\n";
}

std::string json_object(const MetricsReport& r, const std::string& name) {
    std::string out = "{";
    out += "\"model\":" + nlohmann::json(name).dump();
    out += ",\"auc\":" + fmt6(r.auc);
    out += ",\"f1\":" + fmt6(r.f1);
    out += ",\"precision\":" + fmt6(r.precision);
    out += ",\"recall\":" + fmt6(r.recall);
    out += ",\"threshold\":" + fmt6(r.threshold);
    out += ",\"tp\":" + std::to_string(r.tp);
    out += ",\"fp\":" + std::to_string(r.fp);
    out += ",\"tn\":" + std::to_string(r.tn);
    out += ",\"fn\":" + std::to_string(r.fn);
    out += ",\"n_pos\":" + std::to_string(r.n_pos);
    out += ",\"n_neg\":" + std::to_string(r.n_neg);
    out += ",\"no_predicted_positives\":";
    out += r.no_predicted_positives ? "true" : "false";
    out += "}";
    return out;
}

}  // namespace

std::string metrics_to_json(const MetricsReport& report, const std::string& model_name) {
    return json_object(report, model_name) + "\n";
}

std::string metrics_to_csv(const MetricsReport& report, const std::string& model_name) {
    return kCsvHeader + csv_row(report, model_name);
}

std::string sweep_to_json(const SweepResult& sweep) {
    std::string out = "{\"results\":[";
    for (std::size_t i = 0; i < sweep.entries.size(); ++i) {
        if (i) out += ",";
        out += json_object(sweep.entries[i].metrics,
                           "h=" + std::to_string(sweep.entries[i].heads));
    }
    out += "],\"best_heads\":" + std::to_string(sweep.best_heads) + "}\n";
    return out;
}

std::string sweep_to_csv(const SweepResult& sweep) {
    std::string out = kCsvHeader;
    for (const auto& e : sweep.entries) {
        out += csv_row(e.metrics, "h=" + std::to_string(e.heads));
    }
    return out;
}

void emit_report(const MetricsReport& report, const std::string& model_name, ReportFormat format,
                 const std::string& path) {
    write_text(format == ReportFormat::json ? metrics_to_json(report, model_name)
                                            : metrics_to_csv(report, model_name),
               path);
}

void emit_report(const SweepResult& sweep, ReportFormat format, const std::string& path) {
    write_text(format == ReportFormat::json ? sweep_to_json(sweep) : sweep_to_csv(sweep), path);
}

MetricsReport parse_metrics_json(const std::string& text, std::string* model_name) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed metrics JSON: ") + e.what());
    }
    MetricsReport r;
    try {
        if (model_name) *model_name = j.at("model").get<std::string>();
        r.auc = j.at("auc").get<double>();
        r.f1 = j.at("f1").get<double>();
        r.precision = j.at("precision").get<double>();
        r.recall = j.at("recall").get<double>();
        r.threshold = j.at("threshold").get<double>();
        r.tp = j.at("tp").get<std::size_t>();
        r.fp = j.at("fp").get<std::size_t>();
        r.tn = j.at("tn").get<std::size_t>();
        r.fn = j.at("fn").get<std::size_t>();
        r.n_pos = j.at("n_pos").get<std::size_t>();
        r.n_neg = j.at("n_neg").get<std::size_t>();
        r.no_predicted_positives = j.at("no_predicted_positives").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed metrics JSON: ") + e.what());
    }
    return r;
}

}  // namespace lsnt
