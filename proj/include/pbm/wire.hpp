#pragma once

// PDP <-> PEP framing. Every frame is
//   0x50 0x42 | version 0x01 | kind | payload length (u32, big endian) | payload
// Payloads are `key=value` lines sorted by key, except SYNC which carries a
// canonical policy document verbatim.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "pbm/model.hpp"
#include "pbm/pdp.hpp"
#include "pbm/pep_sim.hpp"

namespace pbm {

enum class MessageKind : std::uint8_t { Req = 0x01, Dec = 0x02, Rpt = 0x03, Sync = 0x04, Ack = 0x05, Err = 0x7F };

std::string_view to_string(MessageKind kind);
std::optional<MessageKind> message_kind(std::uint8_t byte);

struct Message {
    MessageKind kind = MessageKind::Ack;
    std::string payload;

    bool operator==(const Message&) const = default;
};

inline constexpr std::uint8_t kMagic0 = 0x50;
inline constexpr std::uint8_t kMagic1 = 0x42;
inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 8;
inline constexpr std::size_t kMaxPayload = std::size_t{1} << 24;

/// Throws ProtocolError(LengthOverflow) for payloads above kMaxPayload.
std::string encode(const Message& msg);

/// Validates an 8-byte header and returns the payload length it announces.
std::size_t check_header(std::string_view header);

/// Decodes the frame at the start of `bytes`; trailing bytes are ignored and
/// the frame size is stored in `consumed` when given. Throws ProtocolError.
Message decode(std::string_view bytes, std::size_t* consumed = nullptr);

// ---------------------------------------------------------------------------
// key=value payloads

using Fields = std::map<std::string, std::string>;

/// Keys must be non-empty and free of '=' and newlines; values free of
/// newlines. Throws ProtocolError(MalformedPayload) otherwise.
std::string format_fields(const Fields& fields);
/// Rejects lines without '=', empty or duplicate keys and unsorted keys.
Fields parse_fields(std::string_view payload);

/// REQ: demand_kbps, dst, port, proto, src, ts.
Fields flow_fields(const FlowDescriptor& flow);
/// demand_kbps is optional (default 1); every other key is required.
FlowDescriptor parse_flow(const Fields& fields);

/// DEC: admission, flags, matched, max, min, priority. Lists are
/// comma-separated; an absent bound is "-".
Fields decision_fields(const Decision& decision);
Decision parse_decision(const Fields& fields);

/// RPT: capacity_kbps, flows, ts, used_kbps.
Fields report_fields(const AllocationReport& report);

Message make_error(std::string_view reason);

}  // namespace pbm
