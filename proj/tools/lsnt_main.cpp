// lsnt: generate, train, evaluate, sweep, and serve transaction anomaly
// models from the command line.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lsnt/metrics.hpp"
#include "lsnt/serving.hpp"
#include "lsnt/train.hpp"

namespace {

using namespace lsnt;

volatile std::sig_atomic_t g_shutdown = 0;
void on_signal(int) { g_shutdown = 1; }

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::size_t stride = 1;
    LabelRule label_rule = LabelRule::any_positive;
};

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }

    if (j.contains("model")) {
        const auto& m = j["model"];
        if (m.contains("d_h")) cfg.model.d_h = m["d_h"].get<std::size_t>();
        if (m.contains("h")) cfg.model.h = m["h"].get<std::size_t>();
        if (m.contains("T")) cfg.model.T = m["T"].get<std::size_t>();
        if (m.contains("n_blocks")) cfg.model.n_blocks = m["n_blocks"].get<std::size_t>();
        if (m.contains("d_f")) cfg.model.d_f = m["d_f"].get<std::size_t>();
        if (m.contains("dropout_rate")) cfg.model.dropout_rate = m["dropout_rate"].get<double>();
        if (m.contains("seed")) cfg.model.seed = m["seed"].get<std::uint64_t>();
        if (m.contains("pooling")) {
            const std::string p = m["pooling"].get<std::string>();
            if (p == "mean") {
                cfg.model.pooling = Pooling::mean;
            } else if (p == "last") {
                cfg.model.pooling = Pooling::last;
            } else {
                throw ConfigError("pooling must be mean or last, got '" + p + "'");
            }
        }
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        if (t.contains("learning_rate")) cfg.train.learning_rate = t["learning_rate"].get<double>();
        if (t.contains("beta1")) cfg.train.beta1 = t["beta1"].get<double>();
        if (t.contains("beta2")) cfg.train.beta2 = t["beta2"].get<double>();
        if (t.contains("eps")) cfg.train.eps = t["eps"].get<double>();
        if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<std::size_t>();
        if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<std::size_t>();
        if (t.contains("patience")) cfg.train.patience = t["patience"].get<std::size_t>();
        if (t.contains("pos_weight")) cfg.train.pos_weight = t["pos_weight"].get<double>();
        if (t.contains("seed")) cfg.train.seed = t["seed"].get<std::uint64_t>();
    }
    if (j.contains("window")) {
        const auto& w = j["window"];
        if (w.contains("stride")) cfg.stride = w["stride"].get<std::size_t>();
        if (w.contains("label_rule")) {
            const std::string r = w["label_rule"].get<std::string>();
            if (r == "any") {
                cfg.label_rule = LabelRule::any_positive;
            } else if (r == "last") {
                cfg.label_rule = LabelRule::last_record;
            } else {
                throw ConfigError("label_rule must be any or last, got '" + r + "'");
            }
        }
    }
    return cfg;
}

FileFormat resolve_format(const std::string& flag, const std::string& path) {
    if (flag == "csv") return FileFormat::csv;
    if (flag == "jsonl") return FileFormat::jsonl;
    return format_from_path(path);
}

std::vector<TransactionRecord> load_records(const std::string& path, const std::string& fmt_flag,
                                            bool skip_bad) {
    IngestResult in = ingest(path, resolve_format(fmt_flag, path), skip_bad);
    for (const auto& w : in.warnings) std::cerr << "warning: " << w << "\n";
    if (!in.skipped.empty()) {
        std::cerr << "skipped " << in.skipped.size() << " malformed rows\n";
        for (const auto& issue : in.skipped) {
            std::cerr << "  " << issue.message << "\n";
        }
    }
    return in.records;
}

ReportFormat resolve_report_format(const std::string& flag, const std::string& path) {
    if (flag == "csv") return ReportFormat::csv;
    if (flag == "json") return ReportFormat::json;
    const auto dot = path.rfind('.');
    if (dot != std::string::npos && path.substr(dot + 1) == "csv") return ReportFormat::csv;
    return ReportFormat::json;
}

void print_metrics(const MetricsReport& r, const std::string& name) {
    std::printf("%-10s auc=%.6f f1=%.6f precision=%.6f recall=%.6f threshold=%.6f\n",
                name.c_str(), r.auc, r.f1, r.precision, r.recall, r.threshold);
    std::printf("           tp=%zu fp=%zu tn=%zu fn=%zu (pos=%zu neg=%zu)%s\n", r.tp, r.fp, r.tn,
                r.fn, r.n_pos, r.n_neg,
                r.no_predicted_positives ? " [no predicted positives]" : "");
}

int cmd_gen(const std::string& out_path, const std::string& fmt_flag, std::size_t accounts,
            std::size_t records, double rate, std::uint64_t seed,
            const std::string& patterns_csv) {
    GenConfig cfg;
    cfg.n_accounts = accounts;
    cfg.records_per_account = records;
    cfg.anomaly_rate = rate;
    cfg.seed = seed;
    if (!patterns_csv.empty()) {
        cfg.patterns.clear();
        std::stringstream ss(patterns_csv);
        std::string name;
        while (std::getline(ss, name, ',')) cfg.patterns.push_back(pattern_from_name(name));
    }
    const auto generated = generate_synthetic(cfg);
    write_records(generated, out_path, resolve_format(fmt_flag, out_path));

    std::size_t pos = 0;
    for (const auto& r : generated) pos += r.label.value_or(0);
    std::printf("wrote %zu records (%zu anomalous) to %s\n", generated.size(), pos,
                out_path.c_str());
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& fmt_flag,
              const std::string& config_path, const std::string& model_path, bool skip_bad) {
    RunConfig run = load_run_config(config_path);
    const auto records = load_records(data_path, fmt_flag, skip_bad);
    PreparedData data = prepare_splits(records, run.model.T, run.stride, run.label_rule);
    run.model.d = data.encoder.dim();

    std::printf("windows: train=%zu val=%zu test=%zu (d=%zu)\n", data.windows.train.size(),
                data.windows.val.size(), data.windows.test.size(), run.model.d);

    TrainResult result = train(data.windows.train, data.windows.val, run.model, run.train);
    for (std::size_t e = 0; e < result.report.train_loss.size(); ++e) {
        std::printf("epoch %2zu  loss=%.6f  val_auc=%.6f%s\n", e + 1,
                    result.report.train_loss[e], result.report.val_auc[e],
                    (e + 1 == result.report.best_epoch) ? "  *" : "");
    }
    std::printf("best epoch %zu, %.1fs\n", result.report.best_epoch,
                result.report.wall_seconds);

    const double threshold =
        best_f1_threshold(score_windows(data.windows.val, result.params, run.model));

    const auto test_scores = score_windows(data.windows.test, result.params, run.model);
    bool pos = false, neg = false;
    for (const auto& s : test_scores) (s.label ? pos : neg) = true;
    if (pos && neg) {
        MetricsReport report = prf_at(test_scores, threshold);
        report.auc = auc(test_scores);
        print_metrics(report, "test");
    } else {
        std::printf("test split is single-class; metrics skipped\n");
    }

    save_model({result.params, run.model, data.encoder, threshold}, model_path);
    std::printf("saved model to %s (threshold %.6f)\n", model_path.c_str(), threshold);
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& fmt_flag, const std::string& report_path,
             const std::string& report_fmt, double threshold_override, bool skip_bad) {
    TrainedModel model = load_model(model_path);
    const auto records = load_records(data_path, fmt_flag, skip_bad);
    const auto windows = windowize(encode_accounts(records, model.encoder), model.cfg.T, 1);
    if (windows.empty()) throw DataError("no windows could be formed from " + data_path);

    std::vector<ScoredSample> scores = score_windows(windows, model.params, model.cfg);
    const double threshold = threshold_override >= 0.0 ? threshold_override : model.threshold;
    MetricsReport report = prf_at(scores, threshold);
    report.auc = auc(scores);

    const std::string name = model_path;
    print_metrics(report, "eval");
    if (!report_path.empty()) {
        emit_report(report, name, resolve_report_format(report_fmt, report_path), report_path);
        std::printf("report written to %s\n", report_path.c_str());
    }
    return 0;
}

int cmd_sweep(const std::string& data_path, const std::string& fmt_flag,
              const std::string& config_path, const std::string& heads_csv,
              const std::string& report_path, const std::string& report_fmt, bool skip_bad) {
    RunConfig run = load_run_config(config_path);
    const auto records = load_records(data_path, fmt_flag, skip_bad);
    PreparedData data = prepare_splits(records, run.model.T, run.stride, run.label_rule);
    run.model.d = data.encoder.dim();

    std::vector<std::size_t> heads;
    std::stringstream ss(heads_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t pos = 0;
            heads.push_back(std::stoul(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ParameterError("--heads wants a comma list of integers, got '" + tok + "'");
        }
    }
    std::sort(heads.begin(), heads.end());
    heads.erase(std::unique(heads.begin(), heads.end()), heads.end());

    const SweepResult sweep = head_sweep(data.windows, run.model, run.train, heads);
    for (const auto& e : sweep.entries) {
        print_metrics(e.metrics, "h=" + std::to_string(e.heads));
    }
    std::printf("best head count by auc: %zu\n", sweep.best_heads);
    if (!report_path.empty()) {
        emit_report(sweep, resolve_report_format(report_fmt, report_path), report_path);
        std::printf("report written to %s\n", report_path.c_str());
    }
    return 0;
}

int cmd_score(const std::string& model_path, const std::string& listen_addr,
              double threshold_override) {
    TrainedModel model = load_model(model_path);
    const double threshold = threshold_override >= 0.0 ? threshold_override : model.threshold;
    StreamScorer scorer(std::move(model), threshold);

    if (listen_addr.empty()) {
        run_score_loop(scorer, std::cin, std::cout, std::cerr);
        return 0;
    }

    StreamServer server(scorer);
    server.start(listen_addr);
    std::cerr << "listening on port " << server.port() << " (threshold " << threshold
              << "); ctrl-c to stop\n";
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_shutdown) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    std::cerr << "shutting down\n";
    server.stop();
    return 0;
}

int cmd_gradcheck() {
    ModelConfig cfg{.d = 6, .d_h = 16, .h = 4, .T = 8, .n_blocks = 1, .dropout_rate = 0.0};
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        cfg.seed = seed;
        const double err = gradient_check_max_error(cfg, 1000 + seed, seed % 2 == 0 ? 0 : 1);
        std::printf("seed %llu: max relative error %.3e\n",
                    static_cast<unsigned long long>(seed), err);
        worst = std::max(worst, err);
    }
    std::printf("overall max relative error %.3e (tolerance 1e-4)\n", worst);
    return worst <= 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transaction-sequence anomaly scoring"};
    app.require_subcommand(1);

    // gen
    std::string gen_out, gen_fmt, gen_patterns;
    std::size_t gen_accounts = 10, gen_records = 200;
    double gen_rate = 0.02;
    std::uint64_t gen_seed = 1;
    auto* gen = app.add_subcommand("gen", "generate a labeled synthetic ledger");
    gen->add_option("--out", gen_out, "output path")->required();
    gen->add_option("--accounts", gen_accounts, "number of accounts");
    gen->add_option("--records", gen_records, "records per account");
    gen->add_option("--anomaly-rate", gen_rate, "target anomalous-record fraction");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--format", gen_fmt, "csv or jsonl (default: by extension)");
    gen->add_option("--patterns", gen_patterns,
                    "comma list of spike,burst,off_hours,structuring (default: all)");

    // train
    std::string train_data, train_fmt, train_cfg, train_out;
    bool train_skip_bad = false;
    auto* tr = app.add_subcommand("train", "train a model on a labeled ledger");
    tr->add_option("--data", train_data, "input records")->required();
    tr->add_option("--out", train_out, "model output path")->required();
    tr->add_option("--config", train_cfg, "JSON config (model/train/window sections)");
    tr->add_option("--data-format", train_fmt, "csv or jsonl (default: by extension)");
    tr->add_flag("--skip-bad", train_skip_bad, "collect malformed rows instead of failing");

    // eval
    std::string eval_model, eval_data, eval_fmt, eval_report, eval_report_fmt;
    double eval_threshold = -1.0;
    bool eval_skip_bad = false;
    auto* ev = app.add_subcommand("eval", "evaluate a model on a labeled ledger");
    ev->add_option("--model", eval_model, "model file")->required();
    ev->add_option("--data", eval_data, "input records")->required();
    ev->add_option("--report", eval_report, "report output path");
    ev->add_option("--format", eval_report_fmt, "report format json or csv");
    ev->add_option("--threshold", eval_threshold, "override the stored alert threshold");
    ev->add_option("--data-format", eval_fmt, "csv or jsonl (default: by extension)");
    ev->add_flag("--skip-bad", eval_skip_bad, "collect malformed rows instead of failing");

    // sweep
    std::string sweep_data, sweep_fmt, sweep_cfg, sweep_heads = "1,2,4,8";
    std::string sweep_report, sweep_report_fmt;
    bool sweep_skip_bad = false;
    auto* sw = app.add_subcommand("sweep", "train and evaluate across head counts");
    sw->add_option("--data", sweep_data, "input records")->required();
    sw->add_option("--heads", sweep_heads, "comma list of head counts");
    sw->add_option("--report", sweep_report, "report output path");
    sw->add_option("--format", sweep_report_fmt, "report format json or csv");
    sw->add_option("--config", sweep_cfg, "JSON config (model/train/window sections)");
    sw->add_option("--data-format", sweep_fmt, "csv or jsonl (default: by extension)");
    sw->add_flag("--skip-bad", sweep_skip_bad, "collect malformed rows instead of failing");

    // score
    std::string score_model, score_listen;
    double score_threshold = -1.0;
    auto* sc = app.add_subcommand("score", "score a live stream of records");
    sc->add_option("--model", score_model, "model file")->required();
    sc->add_option("--listen", score_listen,
                   "host:port for a TCP listener (default: stdin/stdout)");
    sc->add_option("--threshold", score_threshold, "override the stored alert threshold");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck",
                                  "verify analytic gradients against finite differences");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return cmd_gen(gen_out, gen_fmt, gen_accounts, gen_records, gen_rate, gen_seed,
                           gen_patterns);
        }
        if (tr->parsed()) {
            return cmd_train(train_data, train_fmt, train_cfg, train_out, train_skip_bad);
        }
        if (ev->parsed()) {
            return cmd_eval(eval_model, eval_data, eval_fmt, eval_report, eval_report_fmt,
                            eval_threshold, eval_skip_bad);
        }
        if (sw->parsed()) {
            return cmd_sweep(sweep_data, sweep_fmt, sweep_cfg, sweep_heads, sweep_report,
                             sweep_report_fmt, sweep_skip_bad);
        }
        if (sc->parsed()) return cmd_score(score_model, score_listen, score_threshold);
        if (gc->parsed()) return cmd_gradcheck();
    } catch (const lsnt::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
