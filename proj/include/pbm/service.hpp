#pragma once

// TCP PDP server and PEP client.
//
// The server keeps an immutable snapshot of the newest repository version and
// swaps it when a new version appears; each connection decides against the
// snapshot it holds when a request arrives. Per connection, the server sends
// SYNC on connect and again whenever the snapshot changes, answers REQ with
// DEC and RPT with ACK, and replies ERR (then closes) to anything malformed.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "pbm/dsl.hpp"
#include "pbm/pdp.hpp"
#include "pbm/pep_sim.hpp"
#include "pbm/wire.hpp"

namespace pbm {

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

/// "host:port"; host may be a name or an IPv4 address. Throws ValidationError.
Endpoint parse_endpoint(std::string_view text);

/// Blocking frame I/O over a connected socket. Owns the descriptor.
class Connection {
public:
    explicit Connection(int fd) noexcept : fd_(fd) {}
    Connection(Connection&& other) noexcept;
    Connection& operator=(Connection&& other) noexcept;
    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;
    ~Connection();

    int fd() const noexcept { return fd_; }
    void send(const Message& msg);
    /// nullopt on a clean close at a frame boundary. Throws ProtocolError for
    /// malformed or truncated frames and IoError for socket failures.
    std::optional<Message> receive();
    /// True if data (or EOF) is ready within `timeout`.
    bool wait_readable(std::chrono::milliseconds timeout);
    void close() noexcept;

private:
    void read_exact(char* buf, std::size_t n, bool frame_started);
    int fd_ = -1;
};

class PdpServer {
public:
    struct Options {
        std::string listen = "127.0.0.1:0";
        std::filesystem::path repo;
        std::chrono::milliseconds watch_interval{250};
    };

    explicit PdpServer(Options options);
    ~PdpServer();
    PdpServer(const PdpServer&) = delete;
    PdpServer& operator=(const PdpServer&) = delete;

    /// Loads the newest version and starts listening. Throws RepoError when
    /// the repository is empty and IoError when the address cannot be bound.
    void start();
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();

    std::uint16_t port() const noexcept { return port_; }
    int version() const;
    /// Checks the repository for a newer version now; true if swapped.
    bool refresh();

private:
    struct Snapshot {
        int version = 0;
        std::string text;
        Document doc;
    };

    std::shared_ptr<const Snapshot> snapshot() const;
    void accept_loop();
    void watch_loop();
    void serve(Connection conn);
    void reap_workers(bool all);

    Options options_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    mutable std::mutex snapshot_mutex_;
    std::shared_ptr<const Snapshot> snapshot_;
    struct Worker;
    std::mutex workers_mutex_;
    std::list<std::unique_ptr<Worker>> workers_;
    std::thread acceptor_;
    std::thread watcher_;
};

/// PEP side of a session. Waits for the initial SYNC on connect and
/// acknowledges every SYNC it sees, including ones pushed between a request
/// and its decision.
class PepClient {
public:
    static PepClient connect(std::string_view address);

    /// Raw DEC payload for a flow.
    std::string request_payload(const FlowDescriptor& flow);
    Decision request(const FlowDescriptor& flow);
    void report(const AllocationReport& report);

    const Document& document() const { return doc_; }
    int syncs() const noexcept { return syncs_; }
    void close() noexcept { conn_.close(); }

private:
    explicit PepClient(Connection conn) : conn_(std::move(conn)) {}
    Message await(MessageKind expected);
    void on_sync(const Message& msg);

    Connection conn_;
    Document doc_;
    int syncs_ = 0;
};

}  // namespace pbm
