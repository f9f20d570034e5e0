#include "pbm/pdp.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "pbm/dsl.hpp"
#include "pbm/error.hpp"

namespace pbm {

std::string_view to_string(DecisionFlag flag) {
    switch (flag) {
        case DecisionFlag::MinExceedsMax: return "MinExceedsMax";
        case DecisionFlag::AdmissionContradiction: return "AdmissionContradiction";
    }
    return "?";
}

Decision decide(const std::vector<PolicyRule>& rules, const FlowDescriptor& flow, const Catalogs& catalogs) {
    Decision d;
    bool saw_allow = false;
    bool saw_deny = false;
    std::optional<int> priority;
    for (const auto& rule : rules) {
        if (!condition_matches(rule.condition, flow, catalogs)) continue;
        d.matched.push_back(rule.id);
        const auto& a = rule.actions;
        if (a.admission == Admission::Allow) saw_allow = true;
        if (a.admission == Admission::Deny) saw_deny = true;
        if (a.bandwidth) {
            if (auto m = a.bandwidth->min_kbps) {
                d.effective_min_kbps = std::max(d.effective_min_kbps.value_or(*m), *m);
            }
            if (auto m = a.bandwidth->max_kbps) {
                d.effective_max_kbps = std::min(d.effective_max_kbps.value_or(*m), *m);
            }
        }
        if (!priority && a.priority) priority = a.priority;
    }
    d.priority = priority.value_or(kDefaultPriority);
    if (saw_allow && saw_deny) d.flags.insert(DecisionFlag::AdmissionContradiction);
    if (saw_deny) {
        d.admission = Admission::Deny;
        d.effective_min_kbps.reset();
        d.effective_max_kbps.reset();
    } else if (d.effective_min_kbps && d.effective_max_kbps && *d.effective_min_kbps > *d.effective_max_kbps) {
        d.effective_min_kbps = d.effective_max_kbps;
        d.flags.insert(DecisionFlag::MinExceedsMax);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Conflicts

std::string_view to_string(ConflictKind kind) {
    switch (kind) {
        case ConflictKind::AdmissionConflict: return "AdmissionConflict";
        case ConflictKind::BandwidthConflict: return "BandwidthConflict";
        case ConflictKind::PriorityDivergence: return "PriorityDivergence";
    }
    return "?";
}

bool is_warning(ConflictKind kind) { return kind == ConflictKind::PriorityDivergence; }

namespace {

std::optional<Ipv4> lowest_common_address(const EntityGroup& a, const EntityGroup& b) {
    if (a.any && b.any) return Ipv4{0};
    if (a.any) return b.members.begin()->first();
    if (b.any) return a.members.begin()->first();
    std::optional<Ipv4> best;
    for (const auto& x : a.members) {
        for (const auto& y : b.members) {
            if (!x.overlaps(y)) continue;
            Ipv4 lo = std::max(x.first(), y.first());
            if (!best || lo < *best) best = lo;
        }
    }
    return best;
}

std::vector<PortMatcher> matchers_of(const ServiceClass& s) {
    if (s.any) return {PortMatcher{Protocol::Any, 0, 65535}};
    return {s.matchers.begin(), s.matchers.end()};
}

// Lowest (port, protocol) both services accept; tcp sorts before udp.
std::optional<std::pair<std::uint16_t, Protocol>> lowest_common_service(const ServiceClass& a, const ServiceClass& b) {
    std::optional<std::pair<std::uint16_t, Protocol>> best;
    for (const auto& x : matchers_of(a)) {
        for (const auto& y : matchers_of(b)) {
            if (x.protocol != Protocol::Any && y.protocol != Protocol::Any && x.protocol != y.protocol) continue;
            std::uint16_t lo = std::max(x.low, y.low);
            if (lo > std::min(x.high, y.high)) continue;
            Protocol p = x.protocol != Protocol::Any ? x.protocol : (y.protocol != Protocol::Any ? y.protocol : Protocol::Tcp);
            std::pair<std::uint16_t, Protocol> cand{lo, p};
            if (!best || cand < *best) best = cand;
        }
    }
    return best;
}

std::vector<TimeWindow> windows_of(const TimeClass& t) {
    if (t.any) return {TimeWindow{}};
    return {t.windows.begin(), t.windows.end()};
}

std::optional<WeekTime> earliest_common_time(const TimeClass& a, const TimeClass& b) {
    std::optional<std::pair<int, int>> best;
    for (const auto& x : windows_of(a)) {
        for (const auto& y : windows_of(b)) {
            DaySet days = x.days & y.days;
            int start = std::max(x.start_minute, y.start_minute);
            if (days == 0 || start >= std::min(x.end_minute, y.end_minute)) continue;
            int day = 0;
            while (!(days >> day & 1)) ++day;
            std::pair<int, int> cand{day, start};
            if (!best || cand < *best) best = cand;
        }
    }
    if (!best) return std::nullopt;
    return WeekTime{best->first, best->second};
}

std::optional<FlowDescriptor> overlap_witness(const Condition& a, const Condition& b, const Catalogs& cat) {
    auto src = lowest_common_address(cat.entity(a.source), cat.entity(b.source));
    if (!src) return std::nullopt;
    auto dst = lowest_common_address(cat.entity(a.destination), cat.entity(b.destination));
    if (!dst) return std::nullopt;
    auto svc = lowest_common_service(cat.service(a.service), cat.service(b.service));
    if (!svc) return std::nullopt;
    auto when = earliest_common_time(cat.time(a.time), cat.time(b.time));
    if (!when) return std::nullopt;
    FlowDescriptor f;
    f.src = *src;
    f.dst = *dst;
    f.port = svc->first;
    f.protocol = svc->second;
    f.timestamp = reference_timestamp(when->day, when->minute, cat.utc_offset_minutes);
    f.demand_kbps = 1;
    return f;
}

bool min_exceeds_max(const Bandwidth& lo, const Bandwidth& hi) {
    return lo.min_kbps && hi.max_kbps && *lo.min_kbps > *hi.max_kbps;
}

}  // namespace

std::vector<Conflict> detect_conflicts(const std::vector<PolicyRule>& rules, const Catalogs& catalogs) {
    std::vector<Conflict> out;
    for (std::size_t i = 0; i < rules.size(); ++i) {
        for (std::size_t j = i + 1; j < rules.size(); ++j) {
            const auto& a = rules[i];
            const auto& b = rules[j];
            auto witness = overlap_witness(a.condition, b.condition, catalogs);
            if (!witness) continue;
            auto emit = [&](ConflictKind kind) { out.push_back(Conflict{a.id, b.id, kind, *witness}); };
            const auto& x = a.actions;
            const auto& y = b.actions;
            if ((x.admission == Admission::Allow && y.admission == Admission::Deny) ||
                (x.admission == Admission::Deny && y.admission == Admission::Allow)) {
                emit(ConflictKind::AdmissionConflict);
            }
            if (x.bandwidth && y.bandwidth && x.bandwidth->scope == y.bandwidth->scope &&
                (min_exceeds_max(*x.bandwidth, *y.bandwidth) || min_exceeds_max(*y.bandwidth, *x.bandwidth))) {
                emit(ConflictKind::BandwidthConflict);
            }
            if (x.priority && y.priority && *x.priority != *y.priority) emit(ConflictKind::PriorityDivergence);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Device translation

std::string_view to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::Admission: return "Admission";
        case ActionKind::MinBandwidth: return "MinBandwidth";
        case ActionKind::MaxBandwidth: return "MaxBandwidth";
        case ActionKind::Priority: return "Priority";
        case ActionKind::PerConnection: return "PerConnection";
    }
    return "?";
}

std::vector<DeviceProfile> builtin_profiles() {
    using K = ActionKind;
    return {
        {"firewall", "shaperconf-v1", 1'000'000, {K::Admission}},
        {"policer", "shaperconf-v1", 100'000, {K::Admission, K::MaxBandwidth}},
        {"shaper", "shaperconf-v1", 100'000, {K::Admission, K::MinBandwidth, K::MaxBandwidth, K::Priority, K::PerConnection}},
    };
}

DeviceProfile find_profile(std::string_view name) {
    for (auto& p : builtin_profiles()) {
        if (p.name == name) return p;
    }
    throw ValidationError("unknown device profile " + std::string(name));
}

std::set<ActionKind> action_kinds(const PolicyRule& rule) {
    std::set<ActionKind> kinds;
    const auto& a = rule.actions;
    if (a.admission) kinds.insert(ActionKind::Admission);
    if (a.bandwidth) {
        if (a.bandwidth->min_kbps) kinds.insert(ActionKind::MinBandwidth);
        if (a.bandwidth->max_kbps) kinds.insert(ActionKind::MaxBandwidth);
        if (a.bandwidth->scope == Scope::PerConnection) kinds.insert(ActionKind::PerConnection);
    }
    if (a.priority) kinds.insert(ActionKind::Priority);
    return kinds;
}

namespace {

using PortRanges = std::vector<std::pair<int, int>>;

PortRanges merge_ranges(PortRanges r) {
    std::sort(r.begin(), r.end());
    PortRanges out;
    for (const auto& [lo, hi] : r) {
        if (!out.empty() && lo <= out.back().second + 1) out.back().second = std::max(out.back().second, hi);
        else out.emplace_back(lo, hi);
    }
    return out;
}

std::string ports_text(const PortRanges& r) {
    if (r.size() == 1 && r[0].first == 0 && r[0].second == 65535) return "any";
    std::string out;
    for (const auto& [lo, hi] : r) {
        if (!out.empty()) out += ',';
        out += std::to_string(lo);
        if (hi != lo) out += "-" + std::to_string(hi);
    }
    return out;
}

std::string addresses_text(const EntityGroup& g) {
    if (g.any) return "0.0.0.0/0";
    std::string out;
    for (const auto& m : g.members) {
        if (!out.empty()) out += ',';
        out += m.cidr_str();
    }
    return out;
}

std::string time_text(const TimeClass& t) {
    if (t.any) return "any";
    std::string out;
    for (const auto& w : t.windows) {
        if (!out.empty()) out += ';';
        out += format_days(w.days) + ":" + format_minute(w.start_minute) + "-" + format_minute(w.end_minute);
    }
    return out;
}

std::string opt_text(const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : "-"; }

}  // namespace

std::vector<std::string> translate_to_device(const PolicyRule& rule, const Catalogs& catalogs,
                                             const DeviceProfile& profile) {
    if (profile.dialect != "shaperconf-v1") throw ValidationError("unsupported dialect " + profile.dialect);
    for (ActionKind k : action_kinds(rule)) {
        if (!profile.supported.contains(k)) {
            throw ValidationError("profile " + profile.name + " does not support action kind " + std::string(to_string(k)) +
                                  " used by rule " + rule.id);
        }
    }
    const auto& c = rule.condition;
    PortRanges tcp, udp;
    for (const auto& m : matchers_of(catalogs.service(c.service))) {
        if (m.protocol != Protocol::Udp) tcp.emplace_back(m.low, m.high);
        if (m.protocol != Protocol::Tcp) udp.emplace_back(m.low, m.high);
    }
    tcp = merge_ranges(std::move(tcp));
    udp = merge_ranges(std::move(udp));

    std::vector<std::pair<std::string, std::string>> proto_ports;
    if (tcp == udp) {
        proto_ports.emplace_back("any", ports_text(tcp));
    } else {
        if (!tcp.empty()) proto_ports.emplace_back("tcp", ports_text(tcp));
        if (!udp.empty()) proto_ports.emplace_back("udp", ports_text(udp));
    }

    const auto& a = rule.actions;
    std::string admit = a.admission == Admission::Deny ? "deny" : "allow";
    std::optional<std::int64_t> min, max;
    std::string scope = "agg";
    if (a.bandwidth) {
        min = a.bandwidth->min_kbps;
        max = a.bandwidth->max_kbps;
        if (a.bandwidth->scope == Scope::PerConnection) scope = "conn";
    }
    std::string prio = a.priority ? std::to_string(*a.priority) : "-";
    std::string src = addresses_text(catalogs.entity(c.source));
    std::string dst = addresses_text(catalogs.entity(c.destination));
    std::string when = time_text(catalogs.time(c.time));

    std::vector<std::string> lines;
    for (const auto& [proto, ports] : proto_ports) {
        lines.push_back("rule " + rule.id + " match src=" + src + " dst=" + dst + " proto=" + proto + " ports=" + ports +
                        " time=" + when + " action admit=" + admit + " min=" + opt_text(min) + " max=" + opt_text(max) +
                        " prio=" + prio + " scope=" + scope);
    }
    return lines;
}

}  // namespace pbm
