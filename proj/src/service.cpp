#include "pbm/service.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <iostream>

#include "pbm/error.hpp"
#include "pbm/repo.hpp"

namespace pbm {
namespace {

constexpr auto kPollSlice = std::chrono::milliseconds(100);
constexpr int kIoTimeoutSeconds = 10;

std::string errno_text() { return std::strerror(errno); }

void set_io_timeout(int fd) {
    timeval tv{kIoTimeoutSeconds, 0};
    setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

struct AddrInfo {
    addrinfo* list = nullptr;
    ~AddrInfo() {
        if (list) freeaddrinfo(list);
    }
};

AddrInfo resolve(const Endpoint& ep, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    AddrInfo info;
    std::string port = std::to_string(ep.port);
    int rc = getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), port.c_str(), &hints, &info.list);
    if (rc != 0) throw IoError("cannot resolve " + ep.host + ": " + gai_strerror(rc));
    return info;
}

}  // namespace

Endpoint parse_endpoint(std::string_view text) {
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos) throw ValidationError("address must be host:port, got '" + std::string(text) + "'");
    Endpoint ep;
    ep.host = std::string(text.substr(0, colon));
    auto port = text.substr(colon + 1);
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (port.empty() || ec != std::errc{} || ptr != port.data() + port.size() || value > 65535) {
        throw ValidationError("bad port in address '" + std::string(text) + "'");
    }
    ep.port = static_cast<std::uint16_t>(value);
    return ep;
}

// ---------------------------------------------------------------------------
// Connection

Connection::Connection(Connection&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Connection& Connection::operator=(Connection&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

Connection::~Connection() { close(); }

void Connection::close() noexcept {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

void Connection::send(const Message& msg) {
    std::string frame = encode(msg);
    std::size_t off = 0;
    while (off < frame.size()) {
        ssize_t n = ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw IoError("send failed: " + errno_text());
        }
        off += static_cast<std::size_t>(n);
    }
}

void Connection::read_exact(char* buf, std::size_t n, bool frame_started) {
    std::size_t off = 0;
    while (off < n) {
        ssize_t got = ::recv(fd_, buf + off, n - off, 0);
        if (got > 0) {
            off += static_cast<std::size_t>(got);
            frame_started = true;
            continue;
        }
        if (got == 0) {
            if (!frame_started) throw IoError("connection closed");
            throw ProtocolError(ProtocolError::Kind::Truncated, "connection dropped mid-frame");
        }
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) {
            if (frame_started) throw ProtocolError(ProtocolError::Kind::Truncated, "timed out mid-frame");
            throw IoError("timed out waiting for a frame");
        }
        throw IoError("recv failed: " + errno_text());
    }
}

std::optional<Message> Connection::receive() {
    char header[kHeaderSize];
    // A close before the first byte is a normal end of session.
    char first = 0;
    for (;;) {
        ssize_t got = ::recv(fd_, &first, 1, 0);
        if (got == 1) break;
        if (got == 0) return std::nullopt;
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) throw IoError("timed out waiting for a frame");
        throw IoError("recv failed: " + errno_text());
    }
    header[0] = first;
    // Fail fast on junk instead of waiting for a full header that may never come.
    if (static_cast<std::uint8_t>(first) != kMagic0) throw ProtocolError(ProtocolError::Kind::BadMagic, "bad magic");
    read_exact(header + 1, kHeaderSize - 1, true);
    std::size_t n = check_header(std::string_view(header, kHeaderSize));
    std::string frame(header, kHeaderSize);
    frame.resize(kHeaderSize + n);
    if (n > 0) read_exact(frame.data() + kHeaderSize, n, true);
    return decode(frame);
}

bool Connection::wait_readable(std::chrono::milliseconds timeout) {
    pollfd p{fd_, POLLIN, 0};
    int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc < 0) {
        if (errno == EINTR) return false;
        throw IoError("poll failed: " + errno_text());
    }
    return rc > 0;
}

// ---------------------------------------------------------------------------
// PdpServer

struct PdpServer::Worker {
    std::thread thread;
    std::atomic<bool> done{false};
};

PdpServer::PdpServer(Options options) : options_(std::move(options)) {}

PdpServer::~PdpServer() { stop(); }

std::shared_ptr<const PdpServer::Snapshot> PdpServer::snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

int PdpServer::version() const {
    auto snap = snapshot();
    return snap ? snap->version : 0;
}

bool PdpServer::refresh() {
    Repository repo(options_.repo);
    auto latest = repo.latest();
    if (!latest) return false;
    if (latest->version <= version()) return false;
    auto snap = std::make_shared<Snapshot>();
    snap->version = latest->version;
    snap->text = repo.load_text(latest->version);
    snap->doc = parse(snap->text);
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(snap);
    return true;
}

void PdpServer::start() {
    if (running_) return;
    if (!refresh() && !snapshot()) throw RepoError("repository " + options_.repo.string() + " has no versions");

    Endpoint ep = parse_endpoint(options_.listen);
    AddrInfo info = resolve(ep, true);
    int fd = ::socket(info.list->ai_family, info.list->ai_socktype, info.list->ai_protocol);
    if (fd < 0) throw IoError("socket failed: " + errno_text());
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, info.list->ai_addr, info.list->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
        std::string why = errno_text();
        ::close(fd);
        throw IoError("cannot listen on " + options_.listen + ": " + why);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    listen_fd_ = fd;
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
    watcher_ = std::thread([this] { watch_loop(); });
}

void PdpServer::stop() {
    if (!running_.exchange(false)) return;
    if (acceptor_.joinable()) acceptor_.join();
    if (watcher_.joinable()) watcher_.join();
    reap_workers(true);
    ::close(listen_fd_);
    listen_fd_ = -1;
}

void PdpServer::wait() {
    while (running_) std::this_thread::sleep_for(kPollSlice);
}

void PdpServer::reap_workers(bool all) {
    std::lock_guard lock(workers_mutex_);
    for (auto it = workers_.begin(); it != workers_.end();) {
        if (all || (*it)->done) {
            if ((*it)->thread.joinable()) (*it)->thread.join();
            it = workers_.erase(it);
        } else {
            ++it;
        }
    }
}

void PdpServer::accept_loop() {
    while (running_) {
        pollfd p{listen_fd_, POLLIN, 0};
        int rc = ::poll(&p, 1, static_cast<int>(kPollSlice.count()));
        reap_workers(false);
        if (rc <= 0) continue;
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        set_io_timeout(fd);
        auto worker = std::make_unique<Worker>();
        Worker* w = worker.get();
        {
            std::lock_guard lock(workers_mutex_);
            workers_.push_back(std::move(worker));
        }
        w->thread = std::thread([this, w, fd] {
            serve(Connection(fd));
            w->done = true;
        });
    }
}

void PdpServer::watch_loop() {
    auto next = std::chrono::steady_clock::now() + options_.watch_interval;
    while (running_) {
        std::this_thread::sleep_for(std::min(kPollSlice, options_.watch_interval));
        if (std::chrono::steady_clock::now() < next) continue;
        next = std::chrono::steady_clock::now() + options_.watch_interval;
        try {
            refresh();
        } catch (const std::exception& e) {
            // Keep serving the current snapshot; a broken commit must not
            // take the decision point down.
            std::cerr << "pdp: ignoring repository update: " << e.what() << "\n";
        }
    }
}

void PdpServer::serve(Connection conn) {
    try {
        auto sent = snapshot();
        conn.send(Message{MessageKind::Sync, sent->text});
        auto sync_if_stale = [&] {
            auto cur = snapshot();
            if (cur->version != sent->version) {
                sent = cur;
                conn.send(Message{MessageKind::Sync, sent->text});
            }
        };
        while (running_) {
            sync_if_stale();
            if (!conn.wait_readable(kPollSlice)) continue;
            std::optional<Message> msg;
            try {
                msg = conn.receive();
            } catch (const ProtocolError& e) {
                if (e.kind() != ProtocolError::Kind::Truncated) conn.send(make_error(e.what()));
                return;
            }
            if (!msg) return;
            switch (msg->kind) {
                case MessageKind::Req: {
                    FlowDescriptor flow;
                    try {
                        flow = parse_flow(parse_fields(msg->payload));
                    } catch (const ProtocolError& e) {
                        conn.send(make_error(e.what()));
                        return;
                    }
                    // Decide against the document this peer has been sent.
                    sync_if_stale();
                    auto d = decide(sent->doc.rules, flow, sent->doc.catalogs);
                    conn.send(Message{MessageKind::Dec, format_fields(decision_fields(d))});
                    break;
                }
                case MessageKind::Ack:
                    break;
                case MessageKind::Rpt:
                    try {
                        parse_fields(msg->payload);
                    } catch (const ProtocolError& e) {
                        conn.send(make_error(e.what()));
                        return;
                    }
                    conn.send(Message{MessageKind::Ack, ""});
                    break;
                default:
                    conn.send(make_error("unexpected " + std::string(to_string(msg->kind)) + " from PEP"));
                    return;
            }
        }
    } catch (const std::exception&) {
        // The peer went away or the socket failed; only this session ends.
    }
}

// ---------------------------------------------------------------------------
// PepClient

PepClient PepClient::connect(std::string_view address) {
    Endpoint ep = parse_endpoint(address);
    AddrInfo info = resolve(ep, false);
    int fd = ::socket(info.list->ai_family, info.list->ai_socktype, info.list->ai_protocol);
    if (fd < 0) throw IoError("socket failed: " + errno_text());
    if (::connect(fd, info.list->ai_addr, info.list->ai_addrlen) != 0) {
        std::string why = errno_text();
        ::close(fd);
        throw IoError("cannot connect to " + std::string(address) + ": " + why);
    }
    set_io_timeout(fd);
    PepClient client{Connection(fd)};
    auto first = client.conn_.receive();
    if (!first) throw IoError("server closed the connection before SYNC");
    if (first->kind != MessageKind::Sync) {
        throw ProtocolError(ProtocolError::Kind::MalformedPayload,
                            "expected SYNC, got " + std::string(to_string(first->kind)));
    }
    client.on_sync(*first);
    return client;
}

void PepClient::on_sync(const Message& msg) {
    doc_ = parse(msg.payload);
    ++syncs_;
    conn_.send(Message{MessageKind::Ack, format_fields({{"checksum", fnv1a64_hex(msg.payload)},
                                                        {"rules", std::to_string(doc_.rules.size())}})});
}

Message PepClient::await(MessageKind expected) {
    for (;;) {
        auto msg = conn_.receive();
        if (!msg) throw IoError("server closed the connection");
        if (msg->kind == MessageKind::Sync) {
            on_sync(*msg);
            continue;
        }
        if (msg->kind == expected) return *msg;
        if (msg->kind == MessageKind::Err) {
            auto fields = parse_fields(msg->payload);
            throw ProtocolError(ProtocolError::Kind::MalformedPayload, "server error: " + fields["reason"]);
        }
        throw ProtocolError(ProtocolError::Kind::MalformedPayload,
                            "expected " + std::string(to_string(expected)) + ", got " + std::string(to_string(msg->kind)));
    }
}

std::string PepClient::request_payload(const FlowDescriptor& flow) {
    conn_.send(Message{MessageKind::Req, format_fields(flow_fields(flow))});
    return await(MessageKind::Dec).payload;
}

Decision PepClient::request(const FlowDescriptor& flow) { return parse_decision(parse_fields(request_payload(flow))); }

void PepClient::report(const AllocationReport& r) {
    conn_.send(Message{MessageKind::Rpt, format_fields(report_fields(r))});
    await(MessageKind::Ack);
}

}  // namespace pbm
