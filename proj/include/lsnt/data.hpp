#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lsnt/matrix.hpp"

namespace lsnt {

enum class Direction { debit, credit };
enum class FileFormat { csv, jsonl };
enum class LabelRule { any_positive, last_record };

/// One ledger entry. amount > 0, timestamp >= 0 (seconds since epoch).
struct TransactionRecord {
    double timestamp = 0.0;
    std::string account_id;
    double amount = 0.0;
    Direction direction = Direction::debit;
    std::string channel;
    std::string counterparty;
    std::optional<int> label;  // 0 normal, 1 anomalous

    bool operator==(const TransactionRecord&) const = default;
};

struct RowIssue {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct IngestResult {
    std::vector<TransactionRecord> records;  // sorted by (account_id, timestamp)
    std::vector<RowIssue> skipped;           // populated only with skip_bad
    std::vector<std::string> warnings;
};

/// Pick csv or jsonl from the file extension; defaults to csv.
FileFormat format_from_path(const std::string& path);

/// Parse and sort a record file. In strict mode the first malformed row
/// throws RowError; with skip_bad the row is recorded and parsing continues.
/// A missing CSV column throws SchemaError either way.
IngestResult ingest(const std::string& path, FileFormat format, bool skip_bad = false);

/// Write records with 17-significant-digit floats so ingest round-trips
/// field-exactly.
void write_records(const std::vector<TransactionRecord>& records, const std::string& path,
                   FileFormat format);

TransactionRecord record_from_json_line(const std::string& line, std::size_t line_no = 0);
std::string record_to_json_line(const TransactionRecord& rec);

/// Standardization statistics plus the categorical vocabulary, fitted once
/// and frozen. encode_one is pure; d = numeric.size() + channels.size() + 1
/// (one-hot channel plus an out-of-vocabulary bucket).
struct FeatureEncoder {
    struct NumericStat {
        std::string name;
        double mean = 0.0;
        double stddev = 1.0;
        bool operator==(const NumericStat&) const = default;
    };
    std::vector<NumericStat> numeric;   // surviving features, fixed order
    std::vector<std::string> dropped;   // zero-variance features removed at fit
    std::vector<std::string> channels;  // sorted vocabulary

    bool operator==(const FeatureEncoder&) const = default;

    std::size_t dim() const { return numeric.size() + channels.size() + 1; }

    std::vector<double> encode_one(const TransactionRecord& rec,
                                   std::optional<double> prev_timestamp) const;
};

/// Fit means/stds (population) and the channel vocabulary on a sorted record
/// list. Zero-variance features are dropped and listed in encoder.dropped.
FeatureEncoder fit_encoder(const std::vector<TransactionRecord>& records);

/// Per-account encoded rows, aligned with the sorted record order.
struct EncodedAccount {
    std::string account_id;
    std::vector<double> timestamps;
    std::vector<int> labels;  // missing labels read as 0
    std::vector<std::vector<double>> rows;
};

std::vector<EncodedAccount> encode_accounts(const std::vector<TransactionRecord>& records,
                                            const FeatureEncoder& enc);

struct SequenceWindow {
    Matrix features;  // T x d
    int label = 0;
    std::string account_id;
    double end_timestamp = 0.0;
};

struct WindowizeReport {
    std::size_t accounts_too_short = 0;
    std::size_t windows = 0;
};

/// Per-account sliding windows over consecutive records; windows never span
/// accounts. Accounts shorter than T contribute nothing and are counted.
std::vector<SequenceWindow> windowize(const std::vector<EncodedAccount>& accounts, std::size_t T,
                                      std::size_t stride,
                                      LabelRule rule = LabelRule::any_positive,
                                      WindowizeReport* report = nullptr);

/// Chronological per-account split; no shuffling across time.
struct RecordSplits {
    std::vector<TransactionRecord> train, val, test;
};
RecordSplits split_records(const std::vector<TransactionRecord>& records, double train_frac = 0.7,
                           double val_frac = 0.15);

enum class AnomalyPattern { amount_spike, burst, off_hours, structuring };

AnomalyPattern pattern_from_name(const std::string& name);
std::string pattern_name(AnomalyPattern p);

struct GenConfig {
    std::size_t n_accounts = 10;
    std::size_t records_per_account = 200;
    double anomaly_rate = 0.02;  // must be in [0, 0.5]
    std::uint64_t seed = 1;
    std::vector<AnomalyPattern> patterns = {AnomalyPattern::amount_spike, AnomalyPattern::burst,
                                            AnomalyPattern::off_hours,
                                            AnomalyPattern::structuring};
};

/// Labeled synthetic ledger: log-normal amounts around a per-account level,
/// hourly-profiled arrivals, and contiguous anomaly episodes of the requested
/// patterns. A pure function of the seed.
std::vector<TransactionRecord> generate_synthetic(const GenConfig& cfg);

}  // namespace lsnt
