#pragma once

// Domain types shared by every stage of the policy pipeline: the goal
// refinement graph, the catalogs that give names to address groups,
// services and time windows, and the mid-level policy rule itself.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pbm/ids.hpp"

namespace pbm {

/// Reserved reference that matches everything in any condition dimension.
inline constexpr std::string_view kAny = "any";

// ---------------------------------------------------------------------------
// Goals

struct Goal {
    std::string id;
    int level = 1;  // 1 = high-level, 2 = functional, 3 = operational
    std::string description;

    bool operator==(const Goal&) const = default;
};

enum class RefineMode { And, Or };

struct Refinement {
    std::string parent;
    RefineMode mode = RefineMode::And;
    std::vector<std::string> children;

    bool operator==(const Refinement&) const = default;
};

struct GoalGraph {
    std::map<std::string, Goal, IdLess> goals;
    std::map<std::string, Refinement, IdLess> refinements;  // keyed by parent

    bool contains(std::string_view id) const { return goals.find(id) != goals.end(); }
    bool is_leaf(std::string_view id) const { return refinements.find(id) == refinements.end(); }
    /// Unrefined goals, in natural id order.
    std::vector<std::string> leaves() const;

    bool operator==(const GoalGraph&) const = default;
};

/// Returns one human-readable line per broken invariant; empty means the
/// graph is well formed. Cycles are found by attempting a topological sort
/// and each strongly connected remainder is reported once, naming its goals.
std::vector<std::string> validate_graph(const GoalGraph& graph);

/// Goal sets that form refinement cycles (self-refinements excluded), each
/// sorted in natural id order.
std::vector<std::vector<std::string>> find_cycles(const GoalGraph& graph);

/// Goal ids of `graph` in a topological order (parents before children).
/// Throws ValidationError if the graph is cyclic.
std::vector<std::string> topological_order(const GoalGraph& graph);

// ---------------------------------------------------------------------------
// Addresses

struct Ipv4 {
    std::uint32_t value = 0;

    auto operator<=>(const Ipv4&) const = default;
};

std::optional<Ipv4> parse_ipv4(std::string_view text);
std::string to_string(Ipv4 addr);

/// An IPv4 block. The base is always masked to the prefix.
class Cidr {
public:
    Cidr() = default;
    Cidr(Ipv4 base, int prefix);

    static std::optional<Cidr> parse(std::string_view text);

    Ipv4 first() const { return Ipv4{base_}; }
    Ipv4 last() const { return Ipv4{base_ | ~mask()}; }
    int prefix() const { return prefix_; }
    bool contains(Ipv4 addr) const { return (addr.value & mask()) == base_; }
    /// CIDR blocks either nest or are disjoint.
    bool overlaps(const Cidr& other) const { return contains(other.first()) || other.contains(first()); }

    /// "a.b.c.d" for host blocks, "a.b.c.d/n" otherwise.
    std::string str() const;
    /// Always "a.b.c.d/n".
    std::string cidr_str() const;

    auto operator<=>(const Cidr&) const = default;

private:
    std::uint32_t mask() const { return prefix_ == 0 ? 0u : ~std::uint32_t{0} << (32 - prefix_); }

    std::uint32_t base_ = 0;
    int prefix_ = 32;
};

// ---------------------------------------------------------------------------
// Catalogs

struct EntityGroup {
    std::string name;
    bool any = false;
    std::set<Cidr> members;

    bool contains(Ipv4 addr) const;
    bool operator==(const EntityGroup&) const = default;
};

enum class Protocol { Tcp, Udp, Any };

std::string_view to_string(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view text);

struct PortMatcher {
    Protocol protocol = Protocol::Any;
    std::uint16_t low = 0;
    std::uint16_t high = 65535;

    bool matches(Protocol proto, std::uint16_t port) const {
        return (protocol == Protocol::Any || protocol == proto) && port >= low && port <= high;
    }
    auto operator<=>(const PortMatcher&) const = default;
};

struct ServiceClass {
    std::string name;
    bool any = false;
    std::set<PortMatcher> matchers;

    bool matches(Protocol proto, std::uint16_t port) const;
    bool operator==(const ServiceClass&) const = default;
};

/// Bit 0 is Monday, bit 6 Sunday.
using DaySet = std::uint8_t;
inline constexpr DaySet kAllDays = 0x7f;
inline constexpr int kMinutesPerDay = 1440;

struct TimeWindow {
    DaySet days = kAllDays;
    int start_minute = 0;  // inclusive
    int end_minute = kMinutesPerDay;  // exclusive

    bool contains(int day, int minute) const {
        return (days >> day & 1) != 0 && minute >= start_minute && minute < end_minute;
    }
    auto operator<=>(const TimeWindow&) const = default;
};

struct TimeClass {
    std::string name;
    bool any = false;
    std::set<TimeWindow> windows;

    bool contains(int day, int minute) const;
    bool operator==(const TimeClass&) const = default;
};

struct Catalogs {
    std::map<std::string, EntityGroup, IdLess> entities;
    std::map<std::string, ServiceClass, IdLess> services;
    std::map<std::string, TimeClass, IdLess> times;
    /// Offset applied to flow timestamps before time windows are evaluated.
    int utc_offset_minutes = 0;

    /// Lookups resolve kAny to a built-in wildcard; unknown names throw
    /// ValidationError.
    const EntityGroup& entity(std::string_view name) const;
    const ServiceClass& service(std::string_view name) const;
    const TimeClass& time(std::string_view name) const;

    bool operator==(const Catalogs&) const = default;
};

/// Checks the per-entry catalog invariants (non-empty groups, port ranges,
/// window bounds, reserved names). Returns one message per violation.
std::vector<std::string> validate_catalogs(const Catalogs& catalogs);

std::string format_utc_offset(int minutes);
std::optional<int> parse_utc_offset(std::string_view text);

// ---------------------------------------------------------------------------
// Rules

struct Condition {
    std::string source{kAny};
    std::string destination{kAny};
    std::string service{kAny};
    std::string time{kAny};

    bool operator==(const Condition&) const = default;
};

/// Throws ValidationError naming the first reference that does not resolve.
void check_condition(const Condition& condition, const Catalogs& catalogs);

enum class Admission { Allow, Deny };
enum class Scope { PerConnection, Aggregate };

struct Bandwidth {
    std::optional<std::int64_t> min_kbps;
    std::optional<std::int64_t> max_kbps;
    Scope scope = Scope::Aggregate;

    bool operator==(const Bandwidth&) const = default;
};

struct ActionSet {
    std::optional<Admission> admission;
    std::optional<Bandwidth> bandwidth;
    std::optional<int> priority;

    bool operator==(const ActionSet&) const = default;
};

std::vector<std::string> validate_actions(const ActionSet& actions);

struct PolicyRule {
    std::string id;
    std::optional<std::string> based_on;
    std::string subject;
    std::string target;
    Condition condition;
    ActionSet actions;
    int order = 0;

    bool operator==(const PolicyRule&) const = default;
};

/// Rule ids and orders unique, action invariants hold, references resolve.
std::vector<std::string> validate_rules(const std::vector<PolicyRule>& rules, const Catalogs& catalogs);

enum class PriorityBand { Low, Middle, High };

/// 1-4 Low, 5-7 Middle, 8-9 High. Throws std::out_of_range outside 1..9.
PriorityBand priority_band(int priority);
std::string_view to_string(PriorityBand band);

// ---------------------------------------------------------------------------
// Flows

struct FlowDescriptor {
    Ipv4 src;
    Ipv4 dst;
    Protocol protocol = Protocol::Tcp;  // Tcp or Udp
    std::uint16_t port = 0;             // destination port
    std::int64_t timestamp = 0;         // epoch seconds
    std::int64_t demand_kbps = 1;

    bool operator==(const FlowDescriptor&) const = default;
};

struct WeekTime {
    int day = 0;  // 0 = Monday
    int minute = 0;
};

WeekTime week_time(std::int64_t epoch_seconds, int utc_offset_minutes);

/// Epoch seconds of (day, minute) local time in the reference week that
/// starts Monday 1970-01-05.
std::int64_t reference_timestamp(int day, int minute, int utc_offset_minutes);

bool condition_matches(const Condition& condition, const FlowDescriptor& flow, const Catalogs& catalogs);

}  // namespace pbm
