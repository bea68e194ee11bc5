#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "json.hpp"
#include "lsnt/data.hpp"
#include "lsnt/metrics.hpp"

using namespace lsnt;

namespace {

std::string binary() {
    const char* bin = std::getenv("LSNT_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "LSNT_BIN must point at the cli binary");
    return bin;
}

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run(const std::string& args) {
    const std::string cmd = binary() + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult res;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) res.output.append(buf, n);
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

struct Cleanup {
    std::vector<std::string> paths;
    ~Cleanup() {
        for (const auto& p : paths) std::remove(p.c_str());
    }
    const char* track(const std::string& p) {
        paths.push_back(p);
        return paths.back().c_str();
    }
};

}  // namespace

TEST_CASE("gen, train, eval, score, and sweep run end to end") {
    Cleanup files;
    const std::string data = files.track("tmp_cli_data.csv");
    const std::string cfg = files.track("tmp_cli_config.json");
    const std::string model = files.track("tmp_cli_model.lsnt");
    const std::string report = files.track("tmp_cli_report.json");
    const std::string stream = files.track("tmp_cli_stream.jsonl");
    const std::string sweep_report = files.track("tmp_cli_sweep.csv");

    // gen
    RunResult gen = run("gen --out " + data +
                        " --accounts 8 --records 200 --anomaly-rate 0.1 --seed 3"
                        " --patterns spike,burst");
    CHECK_MESSAGE(gen.exit_code == 0, gen.output);
    CHECK(gen.output.find("wrote 1600 records") != std::string::npos);

    // train with a small config
    {
        std::ofstream out(cfg);
        out << R"({"model":{"d_h":16,"h":4,"T":8,"n_blocks":1,"dropout_rate":0.1,"seed":7},
                   "train":{"epochs":6,"patience":3,"batch_size":32,"seed":7}})";
    }
    RunResult train = run("train --data " + data + " --config " + cfg + " --out " + model);
    CHECK_MESSAGE(train.exit_code == 0, train.output);
    CHECK(train.output.find("saved model") != std::string::npos);

    // eval writes a parseable report
    RunResult eval = run("eval --model " + model + " --data " + data + " --report " + report +
                         " --format json");
    CHECK_MESSAGE(eval.exit_code == 0, eval.output);
    {
        std::ifstream in(report);
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        MetricsReport parsed = parse_metrics_json(text);
        CHECK(parsed.auc >= 0.0);
        CHECK(parsed.auc <= 1.0);
        CHECK(parsed.n_pos + parsed.n_neg > 0);
    }

    // score a replayed stream over stdin
    {
        GenConfig g;
        g.n_accounts = 2;
        g.records_per_account = 12;
        g.seed = 9;
        write_records(generate_synthetic(g), stream, FileFormat::jsonl);
    }
    RunResult score = run("score --model " + model + " < " + stream);
    CHECK_MESSAGE(score.exit_code == 0, score.output);
    std::size_t scored = 0, warmup = 0;
    std::istringstream lines(score.output);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.rfind("{", 0) != 0) continue;  // skip the stderr summary
        const auto j = nlohmann::json::parse(line);
        const std::string status = j.at("status").get<std::string>();
        if (status == "scored") {
            ++scored;
            CHECK(j.contains("probability"));
        } else {
            CHECK(status == "warmup");
            ++warmup;
        }
    }
    CHECK(warmup == 14);  // 2 accounts x (T-1)
    CHECK(scored == 10);

    // sweep across two head counts
    RunResult sweep = run("sweep --data " + data + " --config " + cfg +
                          " --heads 1,2 --report " + sweep_report);
    CHECK_MESSAGE(sweep.exit_code == 0, sweep.output);
    CHECK(sweep.output.find("best head count") != std::string::npos);
    {
        std::ifstream in(sweep_report);
        std::string header;
        std::getline(in, header);
        CHECK(header == "model,auc,f1,precision,recall,threshold");
        std::string row;
        std::size_t rows = 0;
        while (std::getline(in, row)) rows += !row.empty();
        CHECK(rows == 2);
    }
}

TEST_CASE("gradcheck subcommand passes its tolerance") {
    RunResult res = run("gradcheck");
    CHECK_MESSAGE(res.exit_code == 0, res.output);
    CHECK(res.output.find("overall max relative error") != std::string::npos);
}

TEST_CASE("missing files and malformed input fail cleanly") {
    RunResult res = run("eval --model no_such_model.lsnt --data also_missing.csv");
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("error:") != std::string::npos);

    RunResult badopt = run("train --nope");
    CHECK(badopt.exit_code != 0);
}
