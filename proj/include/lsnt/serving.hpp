#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "lsnt/data.hpp"
#include "lsnt/train.hpp"

namespace lsnt {

struct ScoreEvent {
    enum class Status { warmup, scored };
    std::string account_id;
    double end_timestamp = 0.0;
    Status status = Status::warmup;
    double probability = 0.0;  // meaningful only when scored
    bool alert = false;
};

/// JSONL rendering with six-decimal probabilities; the probability field is
/// present only for scored events.
std::string score_event_to_json(const ScoreEvent& event);

/// Per-account sliding-window scorer over a frozen model. Keeps the last T
/// encoded feature rows per account (O(accounts * T * d) memory) and scores a
/// window on every arrival once the buffer is full. Safe for concurrent use:
/// distinct accounts proceed in parallel, updates within one account are
/// serialized.
class StreamScorer {
public:
    explicit StreamScorer(TrainedModel model, double threshold);

    /// Encode, append, and score. Throws OrderingError when the timestamp is
    /// not strictly greater than the account's last seen timestamp (the event
    /// is dropped and counted).
    ScoreEvent score_record(const TransactionRecord& record);

    double threshold() const { return threshold_; }
    const TrainedModel& model() const { return model_; }
    std::size_t dropped_out_of_order() const { return dropped_.load(); }

private:
    struct AccountState {
        std::mutex mu;
        std::deque<std::vector<double>> rows;
        double last_timestamp = 0.0;
        bool has_last = false;
    };

    AccountState& account(const std::string& id);

    TrainedModel model_;
    double threshold_;
    std::mutex registry_mu_;
    std::unordered_map<std::string, std::unique_ptr<AccountState>> accounts_;
    std::atomic<std::size_t> dropped_{0};
};

struct LoopSummary {
    std::size_t lines = 0;
    std::size_t scored = 0;
    std::size_t warmup = 0;
    std::size_t dropped_out_of_order = 0;
    std::size_t malformed = 0;
};

/// Read JSONL records from `in`, write one JSONL score event per line to
/// `out` (flushed per line). Malformed lines and ordering violations are
/// reported on `err` and processing continues; a summary goes to `err` at
/// EOF.
LoopSummary run_score_loop(StreamScorer& scorer, std::istream& in, std::ostream& out,
                           std::ostream& err);

/// Line-delimited TCP scoring server. Every connection speaks the stdin-loop
/// protocol; account state is shared across connections through one scorer.
class StreamServer {
public:
    explicit StreamServer(StreamScorer& scorer) : scorer_(scorer) {}
    ~StreamServer();

    StreamServer(const StreamServer&) = delete;
    StreamServer& operator=(const StreamServer&) = delete;

    /// Bind "host:port" (port 0 picks one) and start accepting. Throws
    /// IoError when the address cannot be bound.
    void start(const std::string& bind_address);

    int port() const { return port_; }

    /// Graceful: stops accepting, lets in-flight lines finish, joins threads.
    void stop();

private:
    void accept_loop();
    void serve_connection(int fd);

    StreamScorer& scorer_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread accept_thread_;
    std::mutex clients_mu_;
    std::vector<int> client_fds_;
    std::vector<std::thread> client_threads_;
};

}  // namespace lsnt
