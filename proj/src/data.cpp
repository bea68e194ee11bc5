#include "lsnt/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lsnt/errors.hpp"
#include "lsnt/rng.hpp"

namespace lsnt {

namespace {

constexpr double kSecondsPerDay = 86400.0;
constexpr std::array<const char*, 5> kNumericNames = {"log_amount", "direction", "hour_sin",
                                                      "hour_cos", "gap"};

std::array<double, 5> raw_features(const TransactionRecord& rec,
                                   std::optional<double> prev_timestamp) {
    const double hour = std::fmod(rec.timestamp, kSecondsPerDay) / 3600.0;
    const double angle = 2.0 * M_PI * hour / 24.0;
    double gap = 0.0;
    if (prev_timestamp) gap = std::max(0.0, rec.timestamp - *prev_timestamp);
    return {std::log(rec.amount), rec.direction == Direction::credit ? 1.0 : 0.0,
            std::sin(angle), std::cos(angle), std::log1p(gap)};
}

std::size_t raw_index_of(const std::string& name) {
    for (std::size_t i = 0; i < kNumericNames.size(); ++i) {
        if (name == kNumericNames[i]) return i;
    }
    throw InternalError("unknown feature name: " + name);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> parse_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw RowError(line_no, "unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

double parse_double_field(const std::string& s, const char* what, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw RowError(line_no, std::string(what) + " is not a number: '" + s + "'");
    }
}

Direction parse_direction(const std::string& s, std::size_t line_no) {
    if (s == "debit") return Direction::debit;
    if (s == "credit") return Direction::credit;
    throw RowError(line_no, "direction must be debit or credit, got '" + s + "'");
}

void validate_record(const TransactionRecord& rec, std::size_t line_no) {
    if (rec.account_id.empty()) throw RowError(line_no, "account_id is empty");
    if (!(rec.amount > 0.0)) throw RowError(line_no, "amount must be positive");
    if (!(rec.timestamp >= 0.0)) throw RowError(line_no, "timestamp must be nonnegative");
    if (rec.label && *rec.label != 0 && *rec.label != 1) {
        throw RowError(line_no, "label must be 0 or 1");
    }
}

void sort_records(std::vector<TransactionRecord>& records) {
    std::stable_sort(records.begin(), records.end(),
                     [](const TransactionRecord& a, const TransactionRecord& b) {
                         if (a.account_id != b.account_id) return a.account_id < b.account_id;
                         return a.timestamp < b.timestamp;
                     });
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

bool only_blank(const std::vector<std::string>& lines) {
    for (const auto& l : lines) {
        if (l.find_first_not_of(" \t") != std::string::npos) return false;
    }
    return true;
}

}  // namespace

FileFormat format_from_path(const std::string& path) {
    const auto dot = path.rfind('.');
    if (dot != std::string::npos) {
        const std::string ext = path.substr(dot + 1);
        if (ext == "jsonl" || ext == "ndjson") return FileFormat::jsonl;
    }
    return FileFormat::csv;
}

TransactionRecord record_from_json_line(const std::string& line, std::size_t line_no) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw RowError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw RowError(line_no, "record must be a JSON object");

    auto need = [&](const char* key) -> const nlohmann::json& {
        auto it = j.find(key);
        if (it == j.end()) throw RowError(line_no, std::string("missing field ") + key);
        return *it;
    };
    TransactionRecord rec;
    const auto& ts = need("timestamp");
    if (!ts.is_number()) throw RowError(line_no, "timestamp must be a number");
    rec.timestamp = ts.get<double>();
    const auto& acct = need("account_id");
    if (!acct.is_string()) throw RowError(line_no, "account_id must be a string");
    rec.account_id = acct.get<std::string>();
    const auto& amt = need("amount");
    if (!amt.is_number()) throw RowError(line_no, "amount must be a number");
    rec.amount = amt.get<double>();
    const auto& dir = need("direction");
    if (!dir.is_string()) throw RowError(line_no, "direction must be a string");
    rec.direction = parse_direction(dir.get<std::string>(), line_no);
    const auto& chan = need("channel");
    if (!chan.is_string()) throw RowError(line_no, "channel must be a string");
    rec.channel = chan.get<std::string>();
    const auto& cpty = need("counterparty");
    if (!cpty.is_string()) throw RowError(line_no, "counterparty must be a string");
    rec.counterparty = cpty.get<std::string>();
    if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer()) throw RowError(line_no, "label must be an integer");
        rec.label = it->get<int>();
    }
    validate_record(rec, line_no);
    return rec;
}

std::string record_to_json_line(const TransactionRecord& rec) {
    std::string out = "{\"timestamp\":" + fmt_double(rec.timestamp);
    out += ",\"account_id\":" + nlohmann::json(rec.account_id).dump();
    out += ",\"amount\":" + fmt_double(rec.amount);
    out += ",\"direction\":\"";
    out += (rec.direction == Direction::credit) ? "credit" : "debit";
    out += "\",\"channel\":" + nlohmann::json(rec.channel).dump();
    out += ",\"counterparty\":" + nlohmann::json(rec.counterparty).dump();
    if (rec.label) out += ",\"label\":" + std::to_string(*rec.label);
    out += "}";
    return out;
}

IngestResult ingest(const std::string& path, FileFormat format, bool skip_bad) {
    const std::vector<std::string> lines = read_lines(path);
    IngestResult result;

    if (lines.empty() || only_blank(lines)) {
        result.warnings.push_back("no records in " + path);
        return result;
    }

    auto handle_bad = [&](const RowError& e) {
        if (!skip_bad) throw e;
        result.skipped.push_back({e.line, e.what()});
    };

    if (format == FileFormat::csv) {
        const std::vector<std::string> header = parse_csv_line(lines[0], 1);
        std::map<std::string, std::size_t> col;
        for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
        for (const char* name :
             {"timestamp", "account_id", "amount", "direction", "channel", "counterparty"}) {
            if (!col.count(name)) {
                throw SchemaError("missing column '" + std::string(name) + "' in " + path);
            }
        }
        const bool has_label = col.count("label") > 0;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const std::size_t line_no = i + 1;
            try {
                const auto fields = parse_csv_line(lines[i], line_no);
                if (fields.size() != header.size()) {
                    throw RowError(line_no, "expected " + std::to_string(header.size()) +
                                                " fields, got " + std::to_string(fields.size()));
                }
                TransactionRecord rec;
                rec.timestamp = parse_double_field(fields[col["timestamp"]], "timestamp", line_no);
                rec.account_id = fields[col["account_id"]];
                rec.amount = parse_double_field(fields[col["amount"]], "amount", line_no);
                rec.direction = parse_direction(fields[col["direction"]], line_no);
                rec.channel = fields[col["channel"]];
                rec.counterparty = fields[col["counterparty"]];
                if (has_label && !fields[col["label"]].empty()) {
                    const std::string& lv = fields[col["label"]];
                    if (lv != "0" && lv != "1") throw RowError(line_no, "label must be 0 or 1");
                    rec.label = (lv == "1") ? 1 : 0;
                }
                validate_record(rec, line_no);
                result.records.push_back(std::move(rec));
            } catch (const RowError& e) {
                handle_bad(e);
            }
        }
    } else {
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
            try {
                result.records.push_back(record_from_json_line(lines[i], i + 1));
            } catch (const RowError& e) {
                handle_bad(e);
            }
        }
    }

    sort_records(result.records);
    if (result.records.empty()) result.warnings.push_back("no records in " + path);
    return result;
}

void write_records(const std::vector<TransactionRecord>& records, const std::string& path,
                   FileFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    if (format == FileFormat::csv) {
        out << "timestamp,account_id,amount,direction,channel,counterparty,label\n";
        for (const auto& r : records) {
            out << fmt_double(r.timestamp) << ',' << csv_escape(r.account_id) << ','
                << fmt_double(r.amount) << ','
                << (r.direction == Direction::credit ? "credit" : "debit") << ','
                << csv_escape(r.channel) << ',' << csv_escape(r.counterparty) << ',';
            if (r.label) out << *r.label;
            out << '\n';
        }
    } else {
        for (const auto& r : records) out << record_to_json_line(r) << '\n';
    }
    if (!out) throw IoError("write failed for " + path);
}

FeatureEncoder fit_encoder(const std::vector<TransactionRecord>& records) {
    if (records.empty()) throw DataError("cannot fit encoder on an empty record set");

    const std::size_t n_feat = kNumericNames.size();
    std::vector<double> sum(n_feat, 0.0), sumsq(n_feat, 0.0);
    std::set<std::string> vocab;

    std::string cur_account;
    double prev_ts = 0.0;
    bool have_prev = false;
    for (const auto& rec : records) {
        if (rec.account_id != cur_account) {
            cur_account = rec.account_id;
            have_prev = false;
        }
        const auto raw =
            raw_features(rec, have_prev ? std::optional<double>(prev_ts) : std::nullopt);
        for (std::size_t i = 0; i < n_feat; ++i) {
            sum[i] += raw[i];
            sumsq[i] += raw[i] * raw[i];
        }
        vocab.insert(rec.channel);
        prev_ts = rec.timestamp;
        have_prev = true;
    }

    const double n = static_cast<double>(records.size());
    FeatureEncoder enc;
    for (std::size_t i = 0; i < n_feat; ++i) {
        const double mean = sum[i] / n;
        const double var = std::max(0.0, sumsq[i] / n - mean * mean);
        const double stddev = std::sqrt(var);
        if (stddev < 1e-12) {
            enc.dropped.push_back(kNumericNames[i]);
        } else {
            enc.numeric.push_back({kNumericNames[i], mean, stddev});
        }
    }
    enc.channels.assign(vocab.begin(), vocab.end());
    return enc;
}

std::vector<double> FeatureEncoder::encode_one(const TransactionRecord& rec,
                                               std::optional<double> prev_timestamp) const {
    const auto raw = raw_features(rec, prev_timestamp);
    std::vector<double> out;
    out.reserve(dim());
    for (const auto& stat : numeric) {
        out.push_back((raw[raw_index_of(stat.name)] - stat.mean) / stat.stddev);
    }
    const std::size_t base = out.size();
    out.resize(dim(), 0.0);
    const auto it = std::lower_bound(channels.begin(), channels.end(), rec.channel);
    if (it != channels.end() && *it == rec.channel) {
        out[base + static_cast<std::size_t>(it - channels.begin())] = 1.0;
    } else {
        out[base + channels.size()] = 1.0;  // out-of-vocabulary bucket
    }
    return out;
}

std::vector<EncodedAccount> encode_accounts(const std::vector<TransactionRecord>& records,
                                            const FeatureEncoder& enc) {
    std::vector<EncodedAccount> accounts;
    for (const auto& rec : records) {
        if (accounts.empty() || accounts.back().account_id != rec.account_id) {
            accounts.push_back(EncodedAccount{rec.account_id, {}, {}, {}});
        }
        EncodedAccount& acct = accounts.back();
        std::optional<double> prev;
        if (!acct.timestamps.empty()) prev = acct.timestamps.back();
        acct.rows.push_back(enc.encode_one(rec, prev));
        acct.timestamps.push_back(rec.timestamp);
        acct.labels.push_back(rec.label.value_or(0));
    }
    return accounts;
}

std::vector<SequenceWindow> windowize(const std::vector<EncodedAccount>& accounts, std::size_t T,
                                      std::size_t stride, LabelRule rule,
                                      WindowizeReport* report) {
    if (T < 1) throw ParameterError("windowize: T must be >= 1");
    if (stride < 1) throw ParameterError("windowize: stride must be >= 1");

    std::vector<SequenceWindow> windows;
    for (const auto& acct : accounts) {
        const std::size_t n = acct.rows.size();
        if (n < T) {
            if (report) ++report->accounts_too_short;
            continue;
        }
        const std::size_t d = acct.rows[0].size();
        for (std::size_t start = 0; start + T <= n; start += stride) {
            SequenceWindow w;
            w.features = Matrix(T, d);
            int any = 0;
            for (std::size_t i = 0; i < T; ++i) {
                const auto& row = acct.rows[start + i];
                std::copy(row.begin(), row.end(), w.features.row_ptr(i));
                any |= acct.labels[start + i];
            }
            w.label = (rule == LabelRule::any_positive) ? any : acct.labels[start + T - 1];
            w.account_id = acct.account_id;
            w.end_timestamp = acct.timestamps[start + T - 1];
            windows.push_back(std::move(w));
        }
    }
    if (report) report->windows += windows.size();
    return windows;
}

RecordSplits split_records(const std::vector<TransactionRecord>& records, double train_frac,
                           double val_frac) {
    if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0) {
        throw ParameterError("split fractions must be nonnegative and sum to at most 1");
    }
    RecordSplits splits;
    std::size_t i = 0;
    while (i < records.size()) {
        std::size_t j = i;
        while (j < records.size() && records[j].account_id == records[i].account_id) ++j;
        const std::size_t n = j - i;
        const auto n_train = static_cast<std::size_t>(std::floor(n * train_frac));
        const auto n_val = static_cast<std::size_t>(std::floor(n * val_frac));
        for (std::size_t k = i; k < j; ++k) {
            const std::size_t off = k - i;
            if (off < n_train) {
                splits.train.push_back(records[k]);
            } else if (off < n_train + n_val) {
                splits.val.push_back(records[k]);
            } else {
                splits.test.push_back(records[k]);
            }
        }
        i = j;
    }
    return splits;
}

AnomalyPattern pattern_from_name(const std::string& name) {
    if (name == "amount_spike" || name == "spike") return AnomalyPattern::amount_spike;
    if (name == "burst") return AnomalyPattern::burst;
    if (name == "off_hours") return AnomalyPattern::off_hours;
    if (name == "structuring") return AnomalyPattern::structuring;
    throw ParameterError("unknown anomaly pattern: " + name);
}

std::string pattern_name(AnomalyPattern p) {
    switch (p) {
        case AnomalyPattern::amount_spike: return "amount_spike";
        case AnomalyPattern::burst: return "burst";
        case AnomalyPattern::off_hours: return "off_hours";
        case AnomalyPattern::structuring: return "structuring";
    }
    return "?";
}

namespace {

double hourly_weight(double t) {
    const double hour = std::fmod(t, kSecondsPerDay) / 3600.0;
    if (hour >= 8.0 && hour < 18.0) return 1.0;
    if (hour >= 6.0 && hour < 8.0) return 0.3;
    if (hour >= 18.0 && hour < 22.0) return 0.4;
    return 0.08;
}

double next_day_3am(double t) {
    const double day = std::floor(t / kSecondsPerDay);
    double candidate = day * kSecondsPerDay + 3.0 * 3600.0;
    if (candidate <= t) candidate += kSecondsPerDay;
    return candidate;
}

std::size_t episode_length(AnomalyPattern p, SeededRng& rng) {
    if (p == AnomalyPattern::burst) return 5 + rng.next_below(11);  // 5..15
    return 4 + rng.next_below(7);                                   // 4..10
}

double mean_episode_length(const std::vector<AnomalyPattern>& patterns) {
    double total = 0.0;
    for (auto p : patterns) total += (p == AnomalyPattern::burst) ? 10.0 : 7.0;
    return total / static_cast<double>(patterns.size());
}

}  // namespace

std::vector<TransactionRecord> generate_synthetic(const GenConfig& cfg) {
    if (cfg.anomaly_rate < 0.0 || cfg.anomaly_rate > 0.5) {
        throw ParameterError("anomaly_rate must be in [0, 0.5], got " +
                             std::to_string(cfg.anomaly_rate));
    }
    if (cfg.anomaly_rate > 0.0 && cfg.patterns.empty()) {
        throw ParameterError("anomaly_rate > 0 requires at least one pattern");
    }

    const double base_time = 1704067200.0;  // 2024-01-01T00:00:00Z
    const double p_start =
        cfg.anomaly_rate > 0.0
            ? cfg.anomaly_rate / (mean_episode_length(cfg.patterns) * (1.0 - cfg.anomaly_rate))
            : 0.0;
    static const std::array<const char*, 4> kChannels = {"ach", "card", "pos", "wire"};

    std::vector<TransactionRecord> records;
    records.reserve(cfg.n_accounts * cfg.records_per_account);

    SeededRng master(cfg.seed);
    for (std::size_t a = 0; a < cfg.n_accounts; ++a) {
        SeededRng rng(master.next_u64());
        char acct_name[24];
        std::snprintf(acct_name, sizeof(acct_name), "acct_%04zu", a);

        const double mu = std::log(60.0) + 0.8 * rng.next_gaussian();
        const double sigma = 0.7;
        double t = base_time + rng.next_double() * kSecondsPerDay;

        std::size_t episode_left = 0;
        AnomalyPattern episode_pattern = AnomalyPattern::amount_spike;
        double structuring_amount = 0.0;

        for (std::size_t i = 0; i < cfg.records_per_account; ++i) {
            if (episode_left == 0 && p_start > 0.0 && rng.next_double() < p_start) {
                episode_pattern = cfg.patterns[rng.next_below(cfg.patterns.size())];
                episode_left = episode_length(episode_pattern, rng);
                if (episode_pattern == AnomalyPattern::off_hours) {
                    t = next_day_3am(t) + rng.next_double() * 3600.0;
                } else if (episode_pattern == AnomalyPattern::structuring) {
                    structuring_amount = 9500.0 + 100.0 * static_cast<double>(rng.next_below(5));
                }
            }
            const bool anomalous = episode_left > 0;

            const double mean_gap = 2400.0 / hourly_weight(t);
            double gap = -std::log(1.0 - rng.next_double()) * mean_gap;
            double amount = std::exp(mu + sigma * rng.next_gaussian());

            if (anomalous) {
                switch (episode_pattern) {
                    case AnomalyPattern::amount_spike:
                        amount *= 10.0 + 40.0 * rng.next_double();
                        break;
                    case AnomalyPattern::burst:
                        gap /= 20.0;
                        break;
                    case AnomalyPattern::off_hours:
                        gap = 60.0 + 240.0 * rng.next_double();
                        break;
                    case AnomalyPattern::structuring:
                        amount = structuring_amount;
                        break;
                }
                --episode_left;
            }
            const double min_gap =
                (anomalous && episode_pattern == AnomalyPattern::burst) ? 0.05 : 1.0;
            t += std::max(gap, min_gap);

            TransactionRecord rec;
            rec.timestamp = t;
            rec.account_id = acct_name;
            rec.amount = amount;
            rec.direction = rng.next_double() < 0.65 ? Direction::debit : Direction::credit;
            const std::uint64_t cpick = rng.next_below(100);
            rec.channel = kChannels[cpick < 40 ? 1 : cpick < 70 ? 0 : cpick < 90 ? 2 : 3];
            rec.counterparty = "cpty_" + std::to_string(rng.next_below(50));
            rec.label = anomalous ? 1 : 0;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

}  // namespace lsnt
