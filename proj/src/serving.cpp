#include "lsnt/serving.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "lsnt/errors.hpp"

namespace lsnt {

std::string score_event_to_json(const ScoreEvent& event) {
    std::string out = "{\"account_id\":" + nlohmann::json(event.account_id).dump();
    out += ",\"end_timestamp\":" + nlohmann::json(event.end_timestamp).dump();
    out += ",\"status\":\"";
    out += (event.status == ScoreEvent::Status::scored) ? "scored" : "warmup";
    out += "\"";
    if (event.status == ScoreEvent::Status::scored) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", event.probability);
        out += ",\"probability\":";
        out += buf;
    }
    out += ",\"alert\":";
    out += event.alert ? "true" : "false";
    out += "}";
    return out;
}

StreamScorer::StreamScorer(TrainedModel model, double threshold)
    : model_(std::move(model)), threshold_(threshold) {
    model_.cfg.validate();
    if (model_.cfg.d != model_.encoder.dim()) {
        throw ConfigError("model d does not match the encoder dimension");
    }
}

StreamScorer::AccountState& StreamScorer::account(const std::string& id) {
    std::lock_guard<std::mutex> lock(registry_mu_);
    auto& slot = accounts_[id];
    if (!slot) slot = std::make_unique<AccountState>();
    return *slot;
}

ScoreEvent StreamScorer::score_record(const TransactionRecord& record) {
    AccountState& acct = account(record.account_id);
    std::lock_guard<std::mutex> lock(acct.mu);

    if (acct.has_last && record.timestamp <= acct.last_timestamp) {
        dropped_.fetch_add(1);
        throw OrderingError("out-of-order timestamp for account " + record.account_id);
    }

    std::optional<double> prev;
    if (acct.has_last) prev = acct.last_timestamp;
    acct.rows.push_back(model_.encoder.encode_one(record, prev));
    acct.last_timestamp = record.timestamp;
    acct.has_last = true;
    const std::size_t T = model_.cfg.T;
    if (acct.rows.size() > T) acct.rows.pop_front();

    ScoreEvent event;
    event.account_id = record.account_id;
    event.end_timestamp = record.timestamp;
    if (acct.rows.size() < T) {
        event.status = ScoreEvent::Status::warmup;
        return event;
    }

    Matrix window(T, model_.cfg.d);
    for (std::size_t i = 0; i < T; ++i) {
        std::copy(acct.rows[i].begin(), acct.rows[i].end(), window.row_ptr(i));
    }
    event.status = ScoreEvent::Status::scored;
    event.probability = forward(window, model_.params, model_.cfg, false, nullptr).y_hat;
    event.alert = event.probability >= threshold_;
    return event;
}

LoopSummary run_score_loop(StreamScorer& scorer, std::istream& in, std::ostream& out,
                           std::ostream& err) {
    LoopSummary summary;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        ++summary.lines;
        try {
            const TransactionRecord record = record_from_json_line(line, line_no);
            const ScoreEvent event = scorer.score_record(record);
            out << score_event_to_json(event) << '\n' << std::flush;
            if (event.status == ScoreEvent::Status::scored) {
                ++summary.scored;
            } else {
                ++summary.warmup;
            }
        } catch (const OrderingError& e) {
            ++summary.dropped_out_of_order;
            err << "line " << line_no << ": " << e.what() << '\n';
        } catch (const RowError& e) {
            ++summary.malformed;
            err << e.what() << '\n';
        }
    }
    err << "processed " << summary.lines << " lines: " << summary.scored << " scored, "
        << summary.warmup << " warmup, " << summary.dropped_out_of_order
        << " out-of-order dropped, " << summary.malformed << " malformed\n";
    return summary;
}

namespace {

void write_all(int fd, const std::string& text) {
    std::size_t off = 0;
    while (off < text.size()) {
        const ssize_t n = ::write(fd, text.data() + off, text.size() - off);
        if (n <= 0) return;  // peer went away; nothing sensible left to do
        off += static_cast<std::size_t>(n);
    }
}

}  // namespace

StreamServer::~StreamServer() { stop(); }

void StreamServer::start(const std::string& bind_address) {
    const auto colon = bind_address.rfind(':');
    if (colon == std::string::npos) {
        throw ParameterError("bind address must be host:port, got '" + bind_address + "'");
    }
    std::string host = bind_address.substr(0, colon);
    if (host.empty()) host = "0.0.0.0";
    const int port = std::stoi(bind_address.substr(colon + 1));

    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw IoError("socket: " + std::string(std::strerror(errno)));
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw IoError("invalid bind host '" + host + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw IoError("cannot bind " + bind_address + ": " + why);
    }
    if (::listen(listen_fd_, 16) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw IoError("listen failed: " + why);
    }

    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);

    stopping_ = false;
    accept_thread_ = std::thread(&StreamServer::accept_loop, this);
}

void StreamServer::stop() {
    stopping_ = true;
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    {
        std::lock_guard<std::mutex> lock(clients_mu_);
        for (int fd : client_fds_) ::shutdown(fd, SHUT_RD);  // in-flight lines still answered
    }
    std::vector<std::thread> threads;
    {
        std::lock_guard<std::mutex> lock(clients_mu_);
        threads.swap(client_threads_);
    }
    for (auto& t : threads) {
        if (t.joinable()) t.join();
    }
}

void StreamServer::accept_loop() {
    while (!stopping_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) break;  // listener closed
        std::lock_guard<std::mutex> lock(clients_mu_);
        client_fds_.push_back(fd);
        client_threads_.emplace_back(&StreamServer::serve_connection, this, fd);
    }
}

void StreamServer::serve_connection(int fd) {
    std::string buffer;
    char chunk[4096];
    std::size_t line_no = 0;
    while (true) {
        const ssize_t n = ::read(fd, chunk, sizeof(chunk));
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));

        std::size_t start = 0;
        for (std::size_t nl = buffer.find('\n', start); nl != std::string::npos;
             nl = buffer.find('\n', start)) {
            std::string line = buffer.substr(start, nl - start);
            start = nl + 1;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.find_first_not_of(" \t") == std::string::npos) continue;
            ++line_no;
            std::string response;
            try {
                const ScoreEvent event = scorer_.score_record(record_from_json_line(line, line_no));
                response = score_event_to_json(event);
            } catch (const Error& e) {
                response = "{\"status\":\"error\",\"message\":" +
                           nlohmann::json(std::string(e.what())).dump() + "}";
            }
            response += '\n';
            write_all(fd, response);
        }
        buffer.erase(0, start);
        if (stopping_) break;
    }
    {
        // deregister before closing so stop() never touches a recycled fd
        std::lock_guard<std::mutex> lock(clients_mu_);
        std::erase(client_fds_, fd);
    }
    ::close(fd);
}

}  // namespace lsnt
