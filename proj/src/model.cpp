#include "pbm/model.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <stdexcept>

#include "pbm/error.hpp"

namespace pbm {

// ---------------------------------------------------------------------------
// Goal graph

std::vector<std::string> GoalGraph::leaves() const {
    std::vector<std::string> out;
    for (const auto& [id, goal] : goals) {
        if (is_leaf(id)) out.push_back(id);
    }
    return out;
}

namespace {

struct TopoResult {
    std::vector<std::string> order;
    std::set<std::string, IdLess> remaining;
};

// Kahn's algorithm over resolvable, non-self edges.
TopoResult kahn(const GoalGraph& graph) {
    std::map<std::string, int, IdLess> indegree;
    for (const auto& [id, goal] : graph.goals) indegree[id] = 0;
    for (const auto& [parent, ref] : graph.refinements) {
        if (!graph.contains(parent)) continue;
        std::set<std::string, IdLess> seen;
        for (const auto& child : ref.children) {
            if (child == parent || !graph.contains(child) || !seen.insert(child).second) continue;
            ++indegree[child];
        }
    }
    std::set<std::string, IdLess> ready;
    for (const auto& [id, deg] : indegree) {
        if (deg == 0) ready.insert(id);
    }
    TopoResult result;
    while (!ready.empty()) {
        std::string id = *ready.begin();
        ready.erase(ready.begin());
        result.order.push_back(id);
        auto it = graph.refinements.find(id);
        if (it == graph.refinements.end()) continue;
        std::set<std::string, IdLess> seen;
        for (const auto& child : it->second.children) {
            if (child == id || !graph.contains(child) || !seen.insert(child).second) continue;
            if (--indegree[child] == 0) ready.insert(child);
        }
    }
    for (const auto& [id, deg] : indegree) {
        if (deg > 0) result.remaining.insert(id);
    }
    return result;
}

// Tarjan's SCC restricted to `nodes`; returns components with > 1 member.
std::vector<std::vector<std::string>> cycles_among(const GoalGraph& graph,
                                                   const std::set<std::string, IdLess>& nodes) {
    std::map<std::string, int, IdLess> index;
    std::map<std::string, int, IdLess> low;
    std::set<std::string, IdLess> on_stack;
    std::vector<std::string> stack;
    std::vector<std::vector<std::string>> out;
    int counter = 0;

    std::function<void(const std::string&)> visit = [&](const std::string& v) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack.insert(v);
        if (auto it = graph.refinements.find(v); it != graph.refinements.end()) {
            for (const auto& w : it->second.children) {
                if (w == v || !nodes.contains(w)) continue;
                if (!index.contains(w)) {
                    visit(w);
                    low[v] = std::min(low[v], low[w]);
                } else if (on_stack.contains(w)) {
                    low[v] = std::min(low[v], index[w]);
                }
            }
        }
        if (low[v] == index[v]) {
            std::vector<std::string> comp;
            std::string w;
            do {
                w = stack.back();
                stack.pop_back();
                on_stack.erase(w);
                comp.push_back(w);
            } while (w != v);
            if (comp.size() > 1) {
                std::sort(comp.begin(), comp.end(), IdLess{});
                out.push_back(std::move(comp));
            }
        }
    };
    for (const auto& n : nodes) {
        if (!index.contains(n)) visit(n);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), IdLess{});
    });
    return out;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

}  // namespace

std::vector<std::string> validate_graph(const GoalGraph& graph) {
    std::vector<std::string> violations;
    for (const auto& [id, goal] : graph.goals) {
        if (id.empty() || goal.id.empty()) violations.push_back("goal with empty id");
        else if (goal.id != id) violations.push_back("goal " + id + " stored under mismatched id " + goal.id);
        if (goal.level < 1) violations.push_back("goal " + id + " has level " + std::to_string(goal.level) + " (must be >= 1)");
    }
    for (const auto& [parent, ref] : graph.refinements) {
        if (ref.parent != parent) violations.push_back("refinement of " + parent + " stored under mismatched parent " + ref.parent);
        if (!graph.contains(parent)) violations.push_back("refinement of unknown goal " + parent);
        if (ref.children.empty()) violations.push_back("refinement of " + parent + " has no children");
        std::set<std::string, IdLess> seen;
        for (const auto& child : ref.children) {
            if (child == parent) violations.push_back("goal " + parent + " refines itself");
            else if (!graph.contains(child)) violations.push_back("refinement of " + parent + " references unknown goal " + child);
            if (!seen.insert(child).second) violations.push_back("refinement of " + parent + " lists " + child + " twice");
        }
    }
    for (const auto& cycle : find_cycles(graph)) {
        violations.push_back("cycle among goals: " + join(cycle, ", "));
    }
    return violations;
}

std::vector<std::vector<std::string>> find_cycles(const GoalGraph& graph) {
    return cycles_among(graph, kahn(graph).remaining);
}

std::vector<std::string> topological_order(const GoalGraph& graph) {
    auto topo = kahn(graph);
    if (!topo.remaining.empty()) throw ValidationError("goal graph is cyclic");
    return topo.order;
}

// ---------------------------------------------------------------------------
// Addresses

namespace {

template <typename T>
std::optional<T> parse_uint(std::string_view s) {
    if (s.empty() || s.size() > 10) return std::nullopt;
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

}  // namespace

std::optional<Ipv4> parse_ipv4(std::string_view text) {
    std::uint32_t value = 0;
    for (int octet = 0; octet < 4; ++octet) {
        std::size_t dot = octet < 3 ? text.find('.') : text.size();
        if (dot == std::string_view::npos) return std::nullopt;
        auto part = text.substr(0, dot);
        if (part.size() > 3) return std::nullopt;
        auto n = parse_uint<unsigned>(part);
        if (!n || *n > 255) return std::nullopt;
        value = value << 8 | *n;
        text.remove_prefix(octet < 3 ? dot + 1 : dot);
    }
    if (!text.empty()) return std::nullopt;
    return Ipv4{value};
}

std::string to_string(Ipv4 addr) {
    std::uint32_t v = addr.value;
    return std::to_string(v >> 24) + "." + std::to_string(v >> 16 & 0xff) + "." + std::to_string(v >> 8 & 0xff) +
           "." + std::to_string(v & 0xff);
}

Cidr::Cidr(Ipv4 base, int prefix) : prefix_(prefix) {
    if (prefix < 0 || prefix > 32) throw std::invalid_argument("CIDR prefix length must be in [0, 32]");
    base_ = base.value & mask();
}

std::optional<Cidr> Cidr::parse(std::string_view text) {
    auto slash = text.find('/');
    auto addr = parse_ipv4(text.substr(0, slash));
    if (!addr) return std::nullopt;
    if (slash == std::string_view::npos) return Cidr(*addr, 32);
    auto len = parse_uint<unsigned>(text.substr(slash + 1));
    if (!len || *len > 32) return std::nullopt;
    return Cidr(*addr, static_cast<int>(*len));
}

std::string Cidr::str() const { return prefix_ == 32 ? to_string(first()) : cidr_str(); }

std::string Cidr::cidr_str() const { return to_string(first()) + "/" + std::to_string(prefix_); }

// ---------------------------------------------------------------------------
// Catalogs

bool EntityGroup::contains(Ipv4 addr) const {
    if (any) return true;
    return std::any_of(members.begin(), members.end(), [&](const Cidr& c) { return c.contains(addr); });
}

std::string_view to_string(Protocol p) {
    switch (p) {
        case Protocol::Tcp: return "tcp";
        case Protocol::Udp: return "udp";
        case Protocol::Any: return "any";
    }
    return "any";
}

std::optional<Protocol> parse_protocol(std::string_view text) {
    if (text == "tcp") return Protocol::Tcp;
    if (text == "udp") return Protocol::Udp;
    if (text == "any") return Protocol::Any;
    return std::nullopt;
}

bool ServiceClass::matches(Protocol proto, std::uint16_t port) const {
    if (any) return true;
    return std::any_of(matchers.begin(), matchers.end(), [&](const PortMatcher& m) { return m.matches(proto, port); });
}

bool TimeClass::contains(int day, int minute) const {
    if (any) return true;
    return std::any_of(windows.begin(), windows.end(), [&](const TimeWindow& w) { return w.contains(day, minute); });
}

namespace {

const EntityGroup kAnyEntity{std::string(kAny), true, {}};
const ServiceClass kAnyService{std::string(kAny), true, {}};
const TimeClass kAnyTime{std::string(kAny), true, {}};

template <typename Map>
const typename Map::mapped_type& lookup(const Map& map, std::string_view name, const typename Map::mapped_type& wildcard,
                                        std::string_view what) {
    if (name == kAny) return wildcard;
    auto it = map.find(name);
    if (it == map.end()) throw ValidationError("unknown " + std::string(what) + " " + std::string(name));
    return it->second;
}

}  // namespace

const EntityGroup& Catalogs::entity(std::string_view name) const { return lookup(entities, name, kAnyEntity, "entity"); }
const ServiceClass& Catalogs::service(std::string_view name) const {
    return lookup(services, name, kAnyService, "service");
}
const TimeClass& Catalogs::time(std::string_view name) const { return lookup(times, name, kAnyTime, "time class"); }

std::vector<std::string> validate_catalogs(const Catalogs& catalogs) {
    std::vector<std::string> out;
    auto check_name = [&](std::string_view kind, const std::string& key, const std::string& name) {
        if (name.empty()) out.push_back(std::string(kind) + " with empty name");
        if (name == kAny) out.push_back(std::string(kind) + " name 'any' is reserved");
        if (key != name) out.push_back(std::string(kind) + " " + key + " stored under mismatched name " + name);
    };
    for (const auto& [key, group] : catalogs.entities) {
        check_name("entity", key, group.name);
        if (!group.any && group.members.empty()) out.push_back("entity " + key + " has no members");
        if (group.any && !group.members.empty()) out.push_back("entity " + key + " is a wildcard with members");
    }
    for (const auto& [key, svc] : catalogs.services) {
        check_name("service", key, svc.name);
        if (!svc.any && svc.matchers.empty()) out.push_back("service " + key + " has no matchers");
        if (svc.any && !svc.matchers.empty()) out.push_back("service " + key + " is a wildcard with matchers");
        for (const auto& m : svc.matchers) {
            if (m.low > m.high) out.push_back("service " + key + " has an empty port range");
        }
    }
    for (const auto& [key, tc] : catalogs.times) {
        check_name("time class", key, tc.name);
        if (!tc.any && tc.windows.empty()) out.push_back("time class " + key + " has no windows");
        if (tc.any && !tc.windows.empty()) out.push_back("time class " + key + " is a wildcard with windows");
        for (const auto& w : tc.windows) {
            if ((w.days & kAllDays) == 0 || (w.days & ~kAllDays) != 0) out.push_back("time class " + key + " has an invalid day set");
            if (w.start_minute < 0 || w.end_minute > kMinutesPerDay || w.start_minute >= w.end_minute) {
                out.push_back("time class " + key + " has a window that does not satisfy 0 <= start < end <= 24:00");
            }
        }
    }
    if (catalogs.utc_offset_minutes <= -24 * 60 || catalogs.utc_offset_minutes >= 24 * 60) {
        out.push_back("utc offset out of range");
    }
    return out;
}

std::string format_utc_offset(int minutes) {
    char sign = minutes < 0 ? '-' : '+';
    int m = minutes < 0 ? -minutes : minutes;
    std::string hh = std::to_string(m / 60);
    std::string mm = std::to_string(m % 60);
    if (hh.size() < 2) hh.insert(0, "0");
    if (mm.size() < 2) mm.insert(0, "0");
    return std::string(1, sign) + hh + ":" + mm;
}

std::optional<int> parse_utc_offset(std::string_view text) {
    if (text.size() != 6 || (text[0] != '+' && text[0] != '-') || text[3] != ':') return std::nullopt;
    auto hh = parse_uint<int>(text.substr(1, 2));
    auto mm = parse_uint<int>(text.substr(4, 2));
    if (!hh || !mm || *hh > 23 || *mm > 59) return std::nullopt;
    int total = *hh * 60 + *mm;
    return text[0] == '-' ? -total : total;
}

// ---------------------------------------------------------------------------
// Rules

void check_condition(const Condition& condition, const Catalogs& catalogs) {
    catalogs.entity(condition.source);
    catalogs.entity(condition.destination);
    catalogs.service(condition.service);
    catalogs.time(condition.time);
}

std::vector<std::string> validate_actions(const ActionSet& actions) {
    std::vector<std::string> out;
    if (!actions.admission && !actions.bandwidth && !actions.priority) out.push_back("action set is empty");
    if (actions.bandwidth) {
        const auto& bw = *actions.bandwidth;
        if (!bw.min_kbps && !bw.max_kbps) out.push_back("bandwidth action sets neither min nor max");
        if (bw.min_kbps && *bw.min_kbps <= 0) out.push_back("min bandwidth must be positive");
        if (bw.max_kbps && *bw.max_kbps <= 0) out.push_back("max bandwidth must be positive");
        if (bw.min_kbps && bw.max_kbps && *bw.min_kbps > *bw.max_kbps) out.push_back("min bandwidth exceeds max bandwidth");
    }
    if (actions.priority && (*actions.priority < 1 || *actions.priority > 9)) out.push_back("priority must be in [1, 9]");
    if (actions.admission == Admission::Deny && (actions.bandwidth || actions.priority)) {
        out.push_back("deny cannot be combined with bandwidth or priority");
    }
    return out;
}

std::vector<std::string> validate_rules(const std::vector<PolicyRule>& rules, const Catalogs& catalogs) {
    std::vector<std::string> out;
    std::set<std::string, IdLess> ids;
    std::set<int> orders;
    for (const auto& rule : rules) {
        if (rule.id.empty()) out.push_back("rule with empty id");
        if (!ids.insert(rule.id).second) out.push_back("duplicate rule id " + rule.id);
        if (rule.order < 0) out.push_back("rule " + rule.id + " has a negative order");
        if (!orders.insert(rule.order).second) out.push_back("rule " + rule.id + " reuses order " + std::to_string(rule.order));
        for (const auto& v : validate_actions(rule.actions)) out.push_back("rule " + rule.id + ": " + v);
        try {
            check_condition(rule.condition, catalogs);
        } catch (const ValidationError& e) {
            out.push_back("rule " + rule.id + ": " + e.what());
        }
    }
    return out;
}

PriorityBand priority_band(int priority) {
    if (priority < 1 || priority > 9) throw std::out_of_range("priority must be in [1, 9], got " + std::to_string(priority));
    if (priority <= 4) return PriorityBand::Low;
    if (priority <= 7) return PriorityBand::Middle;
    return PriorityBand::High;
}

std::string_view to_string(PriorityBand band) {
    switch (band) {
        case PriorityBand::Low: return "low";
        case PriorityBand::Middle: return "middle";
        case PriorityBand::High: return "high";
    }
    return "low";
}

// ---------------------------------------------------------------------------
// Flows

namespace {

// 1970-01-01 was a Thursday; 1970-01-05 is the first Monday.
constexpr std::int64_t kFirstMonday = 4 * 86400;

std::int64_t floor_mod(std::int64_t a, std::int64_t m) {
    std::int64_t r = a % m;
    return r < 0 ? r + m : r;
}

}  // namespace

WeekTime week_time(std::int64_t epoch_seconds, int utc_offset_minutes) {
    std::int64_t local = epoch_seconds + std::int64_t{utc_offset_minutes} * 60;
    std::int64_t in_week = floor_mod(local - kFirstMonday, 7 * 86400);
    return WeekTime{static_cast<int>(in_week / 86400), static_cast<int>(in_week % 86400 / 60)};
}

std::int64_t reference_timestamp(int day, int minute, int utc_offset_minutes) {
    return kFirstMonday + std::int64_t{day} * 86400 + std::int64_t{minute} * 60 - std::int64_t{utc_offset_minutes} * 60;
}

bool condition_matches(const Condition& condition, const FlowDescriptor& flow, const Catalogs& catalogs) {
    const auto& src = catalogs.entity(condition.source);
    const auto& dst = catalogs.entity(condition.destination);
    const auto& svc = catalogs.service(condition.service);
    const auto& tc = catalogs.time(condition.time);
    if (!src.contains(flow.src) || !dst.contains(flow.dst)) return false;
    if (!svc.matches(flow.protocol, flow.port)) return false;
    if (tc.any) return true;
    auto wt = week_time(flow.timestamp, catalogs.utc_offset_minutes);
    return tc.contains(wt.day, wt.minute);
}

}  // namespace pbm
