#include "pbm/wire.hpp"

#include <charconv>

#include "pbm/error.hpp"

namespace pbm {

std::string_view to_string(MessageKind kind) {
    switch (kind) {
        case MessageKind::Req: return "REQ";
        case MessageKind::Dec: return "DEC";
        case MessageKind::Rpt: return "RPT";
        case MessageKind::Sync: return "SYNC";
        case MessageKind::Ack: return "ACK";
        case MessageKind::Err: return "ERR";
    }
    return "?";
}

std::optional<MessageKind> message_kind(std::uint8_t byte) {
    switch (byte) {
        case 0x01: return MessageKind::Req;
        case 0x02: return MessageKind::Dec;
        case 0x03: return MessageKind::Rpt;
        case 0x04: return MessageKind::Sync;
        case 0x05: return MessageKind::Ack;
        case 0x7F: return MessageKind::Err;
        default: return std::nullopt;
    }
}

std::string encode(const Message& msg) {
    if (msg.payload.size() > kMaxPayload) {
        throw ProtocolError(ProtocolError::Kind::LengthOverflow,
                            "payload of " + std::to_string(msg.payload.size()) + " bytes exceeds the frame limit");
    }
    auto n = static_cast<std::uint32_t>(msg.payload.size());
    std::string out;
    out.reserve(kHeaderSize + n);
    out.push_back(static_cast<char>(kMagic0));
    out.push_back(static_cast<char>(kMagic1));
    out.push_back(static_cast<char>(kWireVersion));
    out.push_back(static_cast<char>(msg.kind));
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((n >> shift) & 0xFF));
    out += msg.payload;
    return out;
}

std::size_t check_header(std::string_view h) {
    using K = ProtocolError::Kind;
    auto byte = [&](std::size_t i) { return static_cast<std::uint8_t>(h[i]); };
    if ((h.size() > 0 && byte(0) != kMagic0) || (h.size() > 1 && byte(1) != kMagic1)) {
        throw ProtocolError(K::BadMagic, "bad magic");
    }
    if (h.size() < kHeaderSize) throw ProtocolError(K::Truncated, "truncated frame header");
    if (byte(2) != kWireVersion) throw ProtocolError(K::UnsupportedVersion, "unsupported version " + std::to_string(byte(2)));
    if (!message_kind(byte(3))) throw ProtocolError(K::UnknownKind, "unknown message kind " + std::to_string(byte(3)));
    std::uint32_t n = 0;
    for (std::size_t i = 4; i < 8; ++i) n = (n << 8) | byte(i);
    if (n > kMaxPayload) throw ProtocolError(K::LengthOverflow, "announced payload of " + std::to_string(n) + " bytes exceeds the frame limit");
    return n;
}

Message decode(std::string_view bytes, std::size_t* consumed) {
    std::size_t n = check_header(bytes);
    if (bytes.size() - kHeaderSize < n) throw ProtocolError(ProtocolError::Kind::Truncated, "truncated frame payload");
    Message m{*message_kind(static_cast<std::uint8_t>(bytes[3])), std::string(bytes.substr(kHeaderSize, n))};
    if (consumed) *consumed = kHeaderSize + n;
    return m;
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void malformed(const std::string& what) {
    throw ProtocolError(ProtocolError::Kind::MalformedPayload, what);
}

template <typename T>
T number(const Fields& f, const std::string& key) {
    auto it = f.find(key);
    if (it == f.end()) malformed("missing field " + key);
    const std::string& s = it->second;
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) malformed("bad value for " + key + ": '" + s + "'");
    return v;
}

const std::string& field(const Fields& f, const std::string& key) {
    auto it = f.find(key);
    if (it == f.end()) malformed("missing field " + key);
    return it->second;
}

void only_keys(const Fields& f, std::initializer_list<std::string_view> allowed) {
    for (const auto& [k, v] : f) {
        bool ok = false;
        for (auto a : allowed) ok = ok || k == a;
        if (!ok) malformed("unexpected field " + k);
    }
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    for (;;) {
        auto comma = s.find(',', start);
        out.push_back(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) return out;
        start = comma + 1;
    }
}

std::string bound(const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : "-"; }

std::optional<std::int64_t> parse_bound(const Fields& f, const std::string& key) {
    if (field(f, key) == "-") return std::nullopt;
    return number<std::int64_t>(f, key);
}

}  // namespace

std::string format_fields(const Fields& fields) {
    std::string out;
    for (const auto& [k, v] : fields) {
        if (k.empty() || k.find_first_of("=\n") != std::string::npos) malformed("bad key '" + k + "'");
        if (v.find('\n') != std::string::npos) malformed("value of " + k + " contains a newline");
        out += k + "=" + v + "\n";
    }
    return out;
}

Fields parse_fields(std::string_view payload) {
    Fields out;
    std::string last;
    while (!payload.empty()) {
        auto nl = payload.find('\n');
        if (nl == std::string_view::npos) malformed("unterminated payload line");
        std::string_view line = payload.substr(0, nl);
        payload.remove_prefix(nl + 1);
        auto eq = line.find('=');
        if (eq == std::string_view::npos) malformed("payload line without '='");
        std::string key(line.substr(0, eq));
        if (key.empty()) malformed("empty key");
        if (!out.empty() && key <= last) malformed(key == last ? "duplicate key " + key : "keys out of order at " + key);
        out.emplace(key, std::string(line.substr(eq + 1)));
        last = key;
    }
    return out;
}

Fields flow_fields(const FlowDescriptor& flow) {
    return {{"demand_kbps", std::to_string(flow.demand_kbps)},
            {"dst", to_string(flow.dst)},
            {"port", std::to_string(flow.port)},
            {"proto", std::string(to_string(flow.protocol))},
            {"src", to_string(flow.src)},
            {"ts", std::to_string(flow.timestamp)}};
}

FlowDescriptor parse_flow(const Fields& f) {
    only_keys(f, {"demand_kbps", "dst", "port", "proto", "src", "ts"});
    FlowDescriptor flow;
    auto src = parse_ipv4(field(f, "src"));
    if (!src) malformed("bad value for src: '" + field(f, "src") + "'");
    auto dst = parse_ipv4(field(f, "dst"));
    if (!dst) malformed("bad value for dst: '" + field(f, "dst") + "'");
    const auto& proto = field(f, "proto");
    if (proto == "tcp") flow.protocol = Protocol::Tcp;
    else if (proto == "udp") flow.protocol = Protocol::Udp;
    else malformed("bad value for proto: '" + proto + "'");
    auto port = number<std::uint32_t>(f, "port");
    if (port > 65535) malformed("bad value for port: '" + field(f, "port") + "'");
    flow.src = *src;
    flow.dst = *dst;
    flow.port = static_cast<std::uint16_t>(port);
    flow.timestamp = number<std::int64_t>(f, "ts");
    if (f.count("demand_kbps")) {
        flow.demand_kbps = number<std::int64_t>(f, "demand_kbps");
        if (flow.demand_kbps < 1) malformed("demand_kbps must be positive");
    }
    return flow;
}

Fields decision_fields(const Decision& d) {
    std::vector<std::string> flags;
    for (auto flag : d.flags) flags.emplace_back(to_string(flag));
    return {{"admission", d.admission == Admission::Deny ? "deny" : "allow"},
            {"flags", join(flags)},
            {"matched", join(d.matched)},
            {"max", bound(d.effective_max_kbps)},
            {"min", bound(d.effective_min_kbps)},
            {"priority", std::to_string(d.priority)}};
}

Decision parse_decision(const Fields& f) {
    only_keys(f, {"admission", "flags", "matched", "max", "min", "priority"});
    Decision d;
    const auto& adm = field(f, "admission");
    if (adm == "allow") d.admission = Admission::Allow;
    else if (adm == "deny") d.admission = Admission::Deny;
    else malformed("bad value for admission: '" + adm + "'");
    for (const auto& name : split_list(field(f, "flags"))) {
        if (name == to_string(DecisionFlag::MinExceedsMax)) d.flags.insert(DecisionFlag::MinExceedsMax);
        else if (name == to_string(DecisionFlag::AdmissionContradiction)) d.flags.insert(DecisionFlag::AdmissionContradiction);
        else malformed("unknown flag " + name);
    }
    d.matched = split_list(field(f, "matched"));
    d.effective_max_kbps = parse_bound(f, "max");
    d.effective_min_kbps = parse_bound(f, "min");
    d.priority = number<int>(f, "priority");
    return d;
}

Fields report_fields(const AllocationReport& r) {
    return {{"capacity_kbps", std::to_string(r.capacity_kbps)},
            {"flows", std::to_string(r.flows.size())},
            {"ts", std::to_string(r.timestep)},
            {"used_kbps", std::to_string(r.used_kbps)}};
}

Message make_error(std::string_view reason) {
    std::string clean(reason);
    for (char& c : clean) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return Message{MessageKind::Err, format_fields({{"reason", clean}})};
}

}  // namespace pbm
