#pragma once

// Policy decision point: per-flow decisions over a compiled rule set,
// pairwise conflict detection, and translation of rules to device lines.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pbm/model.hpp"

namespace pbm {

enum class DecisionFlag { MinExceedsMax, AdmissionContradiction };

std::string_view to_string(DecisionFlag flag);

struct Decision {
    std::vector<std::string> matched;  // rule ids in document order
    Admission admission = Admission::Allow;
    std::optional<std::int64_t> effective_min_kbps;
    std::optional<std::int64_t> effective_max_kbps;
    int priority = 1;
    std::set<DecisionFlag> flags;

    bool operator==(const Decision&) const = default;
};

inline constexpr int kDefaultPriority = 1;

/// Combines every matching rule: any deny wins, mins fold by max, maxes by
/// min (a min above the max is clamped and flagged), priority comes from the
/// first matching rule that sets one. Unmatched flows are allowed at
/// priority 1. Throws ValidationError on an unresolved catalog reference.
Decision decide(const std::vector<PolicyRule>& rules, const FlowDescriptor& flow, const Catalogs& catalogs);

enum class ConflictKind { AdmissionConflict, BandwidthConflict, PriorityDivergence };

std::string_view to_string(ConflictKind kind);
/// PriorityDivergence is a warning; the other kinds are errors.
bool is_warning(ConflictKind kind);

struct Conflict {
    std::string rule_a;  // earlier in document order
    std::string rule_b;
    ConflictKind kind = ConflictKind::AdmissionConflict;
    FlowDescriptor witness;  // matches both rules

    bool operator==(const Conflict&) const = default;
};

/// Pairwise scan. Two rules overlap when their source groups, destination
/// groups, services and time classes all intersect. Witnesses use the lowest
/// address of each intersection, the lowest (port, protocol) of the service
/// intersection with tcp before udp, and the earliest minute of the week of
/// the time intersection, placed in the reference week.
std::vector<Conflict> detect_conflicts(const std::vector<PolicyRule>& rules, const Catalogs& catalogs);

// ---------------------------------------------------------------------------
// Device translation

enum class ActionKind { Admission, MinBandwidth, MaxBandwidth, Priority, PerConnection };

std::string_view to_string(ActionKind kind);

struct DeviceProfile {
    std::string name;
    std::string dialect = "shaperconf-v1";
    std::int64_t capacity_kbps = 1;
    std::set<ActionKind> supported;
};

/// Profiles known to the translator: "shaper" supports every action kind,
/// "policer" admission and max bandwidth, "firewall" admission only.
std::vector<DeviceProfile> builtin_profiles();
/// Throws ValidationError for an unknown name.
DeviceProfile find_profile(std::string_view name);

/// The action kinds a rule uses. An explicit allow counts as Admission.
std::set<ActionKind> action_kinds(const PolicyRule& rule);

/// shaperconf v1 lines for one rule:
///   rule <id> match src=<cidrs> dst=<cidrs> proto=<tcp|udp|any> ports=<list|any>
///   time=<spec|any> action admit=<allow|deny> min=<n|-> max=<n|-> prio=<n|-> scope=<conn|agg>
/// A service whose tcp and udp port sets differ yields one line per protocol.
/// Throws ValidationError naming the first action kind the profile lacks.
std::vector<std::string> translate_to_device(const PolicyRule& rule, const Catalogs& catalogs,
                                             const DeviceProfile& profile);

}  // namespace pbm
