// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run via ctest or directly from the build directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lsnt/metrics.hpp"
#include "lsnt/serving.hpp"
#include "lsnt/train.hpp"

using namespace lsnt;

namespace {

int g_failures = 0;

void criterion(const std::string& name, const std::function<void()>& body) {
    const auto start = std::chrono::steady_clock::now();
    std::string failure;
    try {
        body();
    } catch (const std::exception& e) {
        failure = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (failure.empty()) {
        std::printf("PASS  [%6.1fs]  %s\n", secs, name.c_str());
    } else {
        ++g_failures;
        std::printf("FAIL  [%6.1fs]  %s\n      %s\n", secs, name.c_str(), failure.c_str());
    }
    std::fflush(stdout);
}

void expect(bool ok, const std::string& message) {
    if (!ok) throw std::runtime_error(message);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

Matrix random_window(std::size_t rows, std::size_t cols, SeededRng& rng) {
    Matrix x(rows, cols);
    for (double& v : x.data()) v = rng.next_gaussian();
    return x;
}

// ---------------------------------------------------------------- criteria

void gradient_fidelity() {
    const auto start = std::chrono::steady_clock::now();
    ModelConfig cfg{.d = 6, .d_h = 16, .h = 4, .T = 8, .n_blocks = 1, .dropout_rate = 0.0};
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        cfg.seed = seed;
        const int label = (seed % 2 == 0) ? 0 : 1;
        worst = std::max(worst, gradient_check_max_error(cfg, 1000 + seed, label, 1.0, 1e-5));
    }
    expect(worst <= 1e-4, "max relative error " + fmt(worst) + " exceeds 1e-4");
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    expect(secs < 60.0, "gradient check took " + fmt(secs) + "s, budget is 60s");
}

void attention_normalization() {
    ModelConfig cfg{.d = 7, .d_h = 24, .h = 4, .T = 9, .n_blocks = 2, .seed = 2};
    ModelParams params = init_params(cfg);
    SeededRng rng(555);
    for (int pass = 0; pass < 100; ++pass) {
        const ForwardTrace trace =
            forward(random_window(cfg.T, cfg.d, rng), params, cfg, false, nullptr);
        for (const auto& block : trace.blocks) {
            for (const auto& head : block.heads) {
                for (std::size_t i = 0; i < head.attn.rows(); ++i) {
                    double sum = 0.0;
                    for (std::size_t j = 0; j < head.attn.cols(); ++j) {
                        expect(head.attn(i, j) >= 0.0, "negative attention weight");
                        sum += head.attn(i, j);
                    }
                    expect(std::abs(sum - 1.0) <= 1e-12,
                           "attention row sums to " + fmt(sum));
                }
            }
        }
    }
}

void shape_laws() {
    for (std::size_t h : {1, 2, 4, 8, 16}) {
        ModelConfig cfg{.d = 5, .d_h = 16, .h = h, .T = 6, .n_blocks = 1, .seed = h};
        ModelParams params = init_params(cfg);
        SeededRng rng(h + 100);
        Matrix hidden = random_window(cfg.T, cfg.d_h, rng);
        const BlockTrace t = multi_head_traced(hidden, params.blocks[0], 0.0, false, nullptr);
        expect(t.concat.cols() == cfg.d_h,
               "concat has " + std::to_string(t.concat.cols()) + " columns for h=" +
                   std::to_string(h));
        expect(t.output.rows() == hidden.rows() && t.output.cols() == hidden.cols(),
               "multi_head changed the shape for h=" + std::to_string(h));
    }
}

void embedding_law() {
    ModelConfig cfg{.d = 6, .d_h = 12, .h = 3, .T = 7, .n_blocks = 1, .seed = 4};
    ModelParams params = init_params(cfg);
    SeededRng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix x = random_window(cfg.T, cfg.d, rng);
        const Matrix lhs = sub(embed(x, params), embed(Matrix(cfg.T, cfg.d), params));
        expect(max_abs_diff(lhs, matmul(x, params.w_e)) <= 1e-12, "embedding is not affine");

        Matrix permuted = x;
        for (std::size_t j = 0; j < x.cols(); ++j) std::swap(permuted(0, j), permuted(1, j));
        expect(max_abs_diff(embed(x, params), embed(permuted, params)) > 0.0,
               "row permutation left the embedding unchanged");
    }
}

double brute_force_auc(const std::vector<ScoredSample>& samples) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (const auto& p : samples) {
        if (p.label != 1) continue;
        for (const auto& n : samples) {
            if (n.label != 0) continue;
            ++pairs;
            wins += (p.score > n.score) ? 1.0 : (p.score == n.score ? 0.5 : 0.0);
        }
    }
    return wins / static_cast<double>(pairs);
}

void auc_oracle() {
    SeededRng rng(777);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.next_below(199);
        std::vector<ScoredSample> samples;
        samples.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            samples.push_back({static_cast<double>(rng.next_below(25)) / 25.0,
                               static_cast<int>(rng.next_below(2))});
        }
        samples[0].label = 1;
        samples[n - 1].label = 0;

        const double ranked = auc(samples);
        expect(std::abs(ranked - brute_force_auc(samples)) <= 1e-12,
               "rank AUC deviates from the pairwise count");

        auto cubed = samples;
        for (auto& s : cubed) s.score = s.score * s.score * s.score;
        expect(std::abs(auc(cubed) - ranked) <= 1e-12, "AUC not invariant under x^3");

        auto squashed = samples;
        for (auto& s : squashed) s.score = 1.0 / (1.0 + std::exp(-(5.0 * s.score - 2.0)));
        expect(std::abs(auc(squashed) - ranked) <= 1e-12,
               "AUC not invariant under sigmoid(5x-2)");
    }
}

// Anchors frozen from the first validated build of this suite; the held-out
// metrics of the overfit surrogate are fully deterministic given the seeds.
constexpr double kAnchorAuc = 0.953149257041;
constexpr double kAnchorF1 = 0.803324099723;

void overfit_surrogate() {
    const auto start = std::chrono::steady_clock::now();

    GenConfig gen;
    gen.n_accounts = 20;
    gen.records_per_account = 500;
    gen.anomaly_rate = 0.05;
    gen.seed = 7;
    gen.patterns = {AnomalyPattern::amount_spike, AnomalyPattern::burst};
    PreparedData data = prepare_splits(generate_synthetic(gen), ModelConfig{}.T);

    ModelConfig mcfg;  // defaults
    mcfg.d = data.encoder.dim();
    TrainConfig tcfg;  // defaults: 50 epochs, patience 5

    TrainResult result = train(data.windows.train, data.windows.val, mcfg, tcfg);
    const double threshold =
        best_f1_threshold(score_windows(data.windows.val, result.params, mcfg));
    const auto test_scores = score_windows(data.windows.test, result.params, mcfg);
    MetricsReport report = prf_at(test_scores, threshold);
    report.auc = auc(test_scores);

    std::printf("      held-out auc=%.12f f1=%.12f (threshold %.6f, best epoch %zu)\n",
                report.auc, report.f1, threshold, result.report.best_epoch);

    expect(report.auc >= 0.95, "held-out AUC " + fmt(report.auc) + " below 0.95");
    expect(report.f1 >= 0.80, "held-out F1 " + fmt(report.f1) + " below 0.80");
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    expect(secs < 300.0, "overfit run took " + fmt(secs) + "s, budget is 300s");

    if (kAnchorAuc > 0.0) {
        expect(std::abs(report.auc - kAnchorAuc) <= 1e-6,
               "AUC drifted from the frozen anchor " + fmt(kAnchorAuc));
        expect(std::abs(report.f1 - kAnchorF1) <= 1e-6,
               "F1 drifted from the frozen anchor " + fmt(kAnchorF1));
    }
}

void head_sweep_protocol() {
    GenConfig gen;
    gen.n_accounts = 8;
    gen.records_per_account = 200;
    gen.anomaly_rate = 0.08;
    gen.seed = 21;
    gen.patterns = {AnomalyPattern::amount_spike, AnomalyPattern::burst};
    PreparedData data = prepare_splits(generate_synthetic(gen), /*T=*/8);

    ModelConfig base;
    base.d = data.encoder.dim();
    base.d_h = 16;
    base.T = 8;
    base.n_blocks = 1;
    base.seed = 3;

    TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.patience = 2;
    tcfg.seed = 3;

    const std::vector<std::size_t> heads = {1, 2, 4, 8};
    const SweepResult sweep = head_sweep(data.windows, base, tcfg, heads);
    expect(sweep.entries.size() == 4, "expected 4 sweep entries");
    for (std::size_t i = 0; i < heads.size(); ++i) {
        expect(sweep.entries[i].heads == heads[i], "sweep entries out of order");
    }
    expect(std::count(heads.begin(), heads.end(), sweep.best_heads) == 1,
           "argmax head count missing from the sweep");
    for (const auto& e : sweep.entries) {
        if (e.heads == sweep.best_heads) {
            for (const auto& o : sweep.entries) {
                expect(e.metrics.auc >= o.metrics.auc, "argmax is not the AUC maximum");
            }
        }
    }

    std::istringstream csv(sweep_to_csv(sweep));
    std::string line;
    std::size_t csv_lines = 0;
    while (std::getline(csv, line)) csv_lines += !line.empty();
    expect(csv_lines == 5, "sweep CSV should have a header plus 4 rows");

    const SweepResult again = head_sweep(data.windows, base, tcfg, heads);
    expect(again == sweep, "identical-seed sweeps differ");
}

void stream_batch_equivalence() {
    GenConfig gen;
    gen.n_accounts = 10;
    gen.records_per_account = 100;  // 1000-record stream
    gen.anomaly_rate = 0.1;
    gen.seed = 45;
    auto records = generate_synthetic(gen);

    TrainedModel model;
    model.encoder = fit_encoder(records);
    model.cfg.d = model.encoder.dim();
    model.cfg.d_h = 16;
    model.cfg.h = 4;
    model.cfg.T = 8;
    model.cfg.n_blocks = 2;
    model.cfg.seed = 77;
    model.params = init_params(model.cfg);
    model.threshold = 0.5;

    const auto windows = windowize(encode_accounts(records, model.encoder), model.cfg.T, 1);
    std::map<std::pair<std::string, double>, double> batch;
    for (const auto& w : windows) {
        batch[{w.account_id, w.end_timestamp}] =
            forward(w.features, model.params, model.cfg, false, nullptr).y_hat;
    }

    std::stable_sort(records.begin(), records.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    StreamScorer scorer(model, 0.5);
    std::size_t scored = 0;
    for (const auto& r : records) {
        const ScoreEvent e = scorer.score_record(r);
        if (e.status != ScoreEvent::Status::scored) continue;
        ++scored;
        const auto it = batch.find({e.account_id, e.end_timestamp});
        expect(it != batch.end(), "stream produced a window the batch pipeline lacks");
        expect(e.probability == it->second,
               "stream and batch probabilities differ at " + e.account_id + "/" +
                   fmt(e.end_timestamp));
    }
    expect(scored == windows.size(),
           "stream scored " + std::to_string(scored) + " windows, batch has " +
               std::to_string(windows.size()));
}

void serialization_round_trip() {
    GenConfig gen;
    gen.n_accounts = 4;
    gen.records_per_account = 60;
    gen.anomaly_rate = 0.1;
    gen.seed = 5;
    const auto records = generate_synthetic(gen);

    TrainedModel model;
    model.encoder = fit_encoder(records);
    model.cfg.d = model.encoder.dim();
    model.cfg.d_h = 16;
    model.cfg.h = 4;
    model.cfg.T = 8;
    model.cfg.n_blocks = 2;
    model.cfg.seed = 13;
    model.params = init_params(model.cfg);
    model.threshold = 0.375;

    const std::string path = "tmp_acceptance_model.lsnt";
    save_model(model, path);
    const TrainedModel back = load_model(path);

    SeededRng rng(31);
    for (int i = 0; i < 100; ++i) {
        const Matrix x = random_window(model.cfg.T, model.cfg.d, rng);
        const double ya = forward(x, model.params, model.cfg, false, nullptr).y_hat;
        const double yb = forward(x, back.params, back.cfg, false, nullptr).y_hat;
        expect(ya == yb, "round-tripped model scores differ at window " + std::to_string(i));
    }

    std::string blob;
    {
        std::ifstream in(path, std::ios::binary);
        blob.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    {
        std::string bad = blob;
        bad[2] = 'X';
        std::ofstream(path, std::ios::binary) << bad;
        bool threw = false;
        try {
            load_model(path);
        } catch (const FormatError&) {
            threw = true;
        }
        expect(threw, "corrupted magic did not raise a format error");
    }
    {
        std::ofstream(path, std::ios::binary) << blob.substr(0, blob.size() / 2);
        bool threw = false;
        try {
            load_model(path);
        } catch (const FormatError&) {
            threw = true;
        }
        expect(threw, "truncated file did not raise a format error");
    }
    std::remove(path.c_str());
}

void full_determinism() {
    GenConfig gen;
    gen.n_accounts = 8;
    gen.records_per_account = 150;
    gen.anomaly_rate = 0.07;
    gen.seed = 5;
    gen.patterns = {AnomalyPattern::amount_spike};
    PreparedData data = prepare_splits(generate_synthetic(gen), /*T=*/8);

    ModelConfig mcfg;
    mcfg.d = data.encoder.dim();
    mcfg.d_h = 16;
    mcfg.h = 4;
    mcfg.T = 8;
    mcfg.n_blocks = 1;
    mcfg.seed = 7;
    TrainConfig tcfg;
    tcfg.epochs = 6;
    tcfg.patience = 3;
    tcfg.seed = 7;

    std::string files[2];
    TrainReport reports[2];
    for (int run = 0; run < 2; ++run) {
        const TrainResult result = train(data.windows.train, data.windows.val, mcfg, tcfg);
        reports[run] = result.report;
        const double threshold =
            best_f1_threshold(score_windows(data.windows.val, result.params, mcfg));
        const std::string path = "tmp_acceptance_det" + std::to_string(run) + ".lsnt";
        save_model({result.params, mcfg, data.encoder, threshold}, path);
        std::ifstream in(path, std::ios::binary);
        files[run].assign((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        in.close();
        std::remove(path.c_str());
    }
    expect(reports[0].train_loss == reports[1].train_loss, "per-epoch losses differ");
    expect(reports[0].val_auc == reports[1].val_auc, "per-epoch validation AUCs differ");
    expect(reports[0].best_epoch == reports[1].best_epoch, "best epochs differ");
    expect(!files[0].empty() && files[0] == files[1], "model files are not byte-identical");
}

}  // namespace

int main() {
    criterion("1. gradient fidelity vs finite differences (5 seeds, <=1e-4, <1min)",
              gradient_fidelity);
    criterion("2. attention rows are stochastic within 1e-12 over 100 forward passes",
              attention_normalization);
    criterion("3. shape laws: concat width d_h, multi-head preserves shape (h in 1..16)",
              shape_laws);
    criterion("4. embedding affine law and positional sensitivity", embedding_law);
    criterion("5. rank AUC equals brute force on 1000 tied sets; monotone-invariant",
              auc_oracle);
    criterion("6. overfit surrogate: held-out AUC >= 0.95 and F1 >= 0.80 (<5min)",
              overfit_surrogate);
    criterion("7. head sweep 1,2,4,8: four reports, argmax, deterministic",
              head_sweep_protocol);
    criterion("8. stream scores bit-match the batch pipeline (1000 records, 10 accounts)",
              stream_batch_equivalence);
    criterion("9. model serialization round-trips bit-exactly; corruption raises errors",
              serialization_round_trip);
    criterion("10. identical seeds: identical reports and byte-identical model files",
              full_determinism);

    if (g_failures) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
