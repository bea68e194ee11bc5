// Per-line scoring latency harness. Target: 5 ms median; the run only fails
// above twice the target.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <vector>

#include "lsnt/serving.hpp"

using namespace lsnt;

int main() {
    GenConfig gen;
    gen.n_accounts = 4;
    gen.records_per_account = 600;
    gen.anomaly_rate = 0.05;
    gen.seed = 9;
    auto records = generate_synthetic(gen);

    TrainedModel model;
    model.encoder = fit_encoder(records);
    model.cfg.d = model.encoder.dim();
    model.cfg.d_h = 32;
    model.cfg.h = 4;
    model.cfg.T = 32;
    model.cfg.n_blocks = 2;
    model.cfg.seed = 1;
    model.params = init_params(model.cfg);
    model.threshold = 0.5;

    std::stable_sort(records.begin(), records.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });

    StreamScorer scorer(model, 0.5);
    std::vector<double> scored_ms;
    scored_ms.reserve(records.size());
    for (const auto& r : records) {
        const auto t0 = std::chrono::steady_clock::now();
        const ScoreEvent e = scorer.score_record(r);
        const auto t1 = std::chrono::steady_clock::now();
        if (e.status == ScoreEvent::Status::scored) {
            scored_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
    }

    std::sort(scored_ms.begin(), scored_ms.end());
    const double p50 = scored_ms[scored_ms.size() / 2];
    const double p95 = scored_ms[scored_ms.size() * 95 / 100];
    const double p99 = scored_ms[scored_ms.size() * 99 / 100];
    std::printf("%zu scored lines (d_h=32 h=4 T=32 n_blocks=2, d=%zu)\n", scored_ms.size(),
                model.cfg.d);
    std::printf("latency ms: p50=%.3f p95=%.3f p99=%.3f (target 5 ms median, hard limit 10)\n",
                p50, p95, p99);

    if (p50 > 10.0) {
        std::printf("FAIL: median exceeds twice the target\n");
        return 1;
    }
    std::printf("%s\n", p50 <= 5.0 ? "within target" : "above target but within the hard limit");
    return 0;
}
