#include "pbm/pep_sim.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>
#include <queue>

#include "pbm/error.hpp"

namespace pbm {
namespace {

constexpr std::int64_t kUnbounded = std::numeric_limits<std::int64_t>::max() / 4;

struct Unit {
    std::vector<std::size_t> flows;  // one flow, or the members of a pipe
    std::optional<std::size_t> pipe;
    std::int64_t guarantee = 0;
};

// Splits `amount` among `weights` with the D'Hondt rule; requires
// amount < sum(weights). Starts from the lower quotas, which every D'Hondt
// result dominates, then hands out the rest by highest average.
std::vector<std::int64_t> dhondt(const std::vector<std::int64_t>& weights, std::int64_t amount) {
    __extension__ typedef __int128 Wide;
    Wide total = 0;
    for (auto w : weights) total += w;
    std::vector<std::int64_t> seats(weights.size());
    std::int64_t given = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        seats[i] = static_cast<std::int64_t>(Wide{amount} * weights[i] / total);
        given += seats[i];
    }
    // Max-heap on weight / (seats + 1); ties go to the lower position.
    auto worse = [&](std::size_t a, std::size_t b) {
        Wide lhs = Wide{weights[a]} * (seats[b] + 1);
        Wide rhs = Wide{weights[b]} * (seats[a] + 1);
        if (lhs != rhs) return lhs < rhs;
        return a > b;
    };
    std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(worse)> heap(worse);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (seats[i] < weights[i]) heap.push(i);
    }
    while (given < amount && !heap.empty()) {
        std::size_t i = heap.top();
        heap.pop();
        ++seats[i];
        ++given;
        if (seats[i] < weights[i]) heap.push(i);
    }
    return seats;
}

// Progressive filling over `order`: equal increments to every active flow,
// then single kbps in order once an increment no longer fits. A flow is
// active while below its cap and while its group (pipe) has room. Returns
// the amount left over.
std::int64_t progressive_fill(std::vector<std::int64_t>& grant, const std::vector<std::int64_t>& cap,
                              const std::vector<std::size_t>& order, const std::vector<std::optional<std::size_t>>& group,
                              std::vector<std::int64_t>& room, std::int64_t amount) {
    auto active = [&](std::size_t f) { return grant[f] < cap[f] && (!group[f] || room[*group[f]] > 0); };
    while (amount > 0) {
        std::vector<std::size_t> live;
        std::map<std::size_t, std::int64_t> per_group;
        for (std::size_t f : order) {
            if (!active(f)) continue;
            live.push_back(f);
            if (group[f]) ++per_group[*group[f]];
        }
        if (live.empty()) break;
        std::int64_t step = amount / static_cast<std::int64_t>(live.size());
        for (std::size_t f : live) step = std::min(step, cap[f] - grant[f]);
        for (const auto& [g, n] : per_group) step = std::min(step, room[g] / n);
        if (step >= 1) {
            for (std::size_t f : live) {
                grant[f] += step;
                if (group[f]) room[*group[f]] -= step;
            }
            amount -= step * static_cast<std::int64_t>(live.size());
            continue;
        }
        for (std::size_t f : live) {
            if (amount == 0) break;
            if (!active(f)) continue;
            ++grant[f];
            --amount;
            if (group[f]) --room[*group[f]];
        }
    }
    return amount;
}

}  // namespace

std::vector<std::int64_t> allocate(std::span<const FlowRequest> flows, std::span<const Pipe> pipes,
                                   std::int64_t capacity_kbps) {
    const std::size_t n = flows.size();
    std::vector<std::int64_t> grant(n, 0);
    std::vector<std::int64_t> cap(n, 0);
    std::vector<std::optional<std::size_t>> group(n);
    std::vector<int> tier(n, kDefaultPriority);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return flows[a].rank < flows[b].rank; });

    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = flows[i];
        if (f.decision.admission == Admission::Deny) continue;
        cap[i] = std::max<std::int64_t>(0, std::min(f.demand_kbps, f.decision.effective_max_kbps.value_or(kUnbounded)));
        if (f.pipe) {
            if (*f.pipe >= pipes.size()) throw ValidationError("flow refers to an unknown pipe");
            group[i] = f.pipe;
            tier[i] = pipes[*f.pipe].priority;
        } else {
            tier[i] = f.decision.priority;
        }
    }

    // Units in rank order: standalone flows, and each pipe at the position
    // of its highest-ranked member.
    std::vector<Unit> units;
    std::map<std::size_t, std::size_t> unit_of_pipe;
    for (std::size_t i : order) {
        if (flows[i].decision.admission == Admission::Deny) continue;
        if (!group[i]) {
            auto g = std::min(flows[i].decision.effective_min_kbps.value_or(0), cap[i]);
            units.push_back(Unit{{i}, std::nullopt, std::max<std::int64_t>(0, g)});
            continue;
        }
        auto [it, fresh] = unit_of_pipe.emplace(*group[i], units.size());
        if (fresh) units.push_back(Unit{{}, group[i], 0});
        units[it->second].flows.push_back(i);
    }
    for (auto& u : units) {
        if (!u.pipe) continue;
        const Pipe& p = pipes[*u.pipe];
        std::int64_t member_caps = 0;
        for (std::size_t f : u.flows) member_caps += cap[f];
        u.guarantee = std::min({p.min_kbps.value_or(0), member_caps, p.max_kbps.value_or(kUnbounded)});
    }
    auto unit_tier = [&](const Unit& u) { return u.pipe ? pipes[*u.pipe].priority : tier[u.flows.front()]; };

    std::vector<std::int64_t> room(pipes.size());
    for (std::size_t p = 0; p < pipes.size(); ++p) room[p] = pipes[p].max_kbps.value_or(kUnbounded);

    std::int64_t left = std::max<std::int64_t>(0, capacity_kbps);

    // Phase A: guarantees.
    for (int t = 9; t >= 1; --t) {
        std::vector<Unit*> in_tier;
        std::int64_t wanted = 0;
        for (auto& u : units) {
            if (unit_tier(u) == t && u.guarantee > 0) {
                in_tier.push_back(&u);
                wanted += u.guarantee;
            }
        }
        if (in_tier.empty()) continue;
        std::vector<std::int64_t> share(in_tier.size());
        if (wanted <= left) {
            for (std::size_t k = 0; k < in_tier.size(); ++k) share[k] = in_tier[k]->guarantee;
        } else {
            std::vector<std::int64_t> weights;
            for (auto* u : in_tier) weights.push_back(u->guarantee);
            share = dhondt(weights, left);
        }
        for (std::size_t k = 0; k < in_tier.size(); ++k) {
            Unit& u = *in_tier[k];
            left -= share[k];
            if (!u.pipe) {
                grant[u.flows.front()] += share[k];
                continue;
            }
            std::vector<std::optional<std::size_t>> no_group(n);
            std::vector<std::int64_t> no_room;
            progressive_fill(grant, cap, u.flows, no_group, no_room, share[k]);
            room[*u.pipe] -= share[k];
        }
    }

    // Phase B: excess.
    for (int t = 9; t >= 1 && left > 0; --t) {
        std::vector<std::size_t> members;
        for (std::size_t i : order) {
            if (flows[i].decision.admission != Admission::Deny && tier[i] == t) members.push_back(i);
        }
        if (!members.empty()) left = progressive_fill(grant, cap, members, group, room, left);
    }
    return grant;
}

AllocationInput build_allocation_input(const std::vector<PolicyRule>& rules, std::span<const Decision> decisions,
                                       std::span<const std::int64_t> demands) {
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < rules.size(); ++i) position.emplace(rules[i].id, i);
    AllocationInput in;
    std::map<std::size_t, std::size_t> pipe_of_rule;
    for (std::size_t k = 0; k < decisions.size(); ++k) {
        FlowRequest req;
        req.decision = decisions[k];
        req.demand_kbps = demands[k];
        for (const auto& id : decisions[k].matched) {
            auto it = position.find(id);
            if (it == position.end()) throw ValidationError("decision names unknown rule " + id);
            req.rank = std::min(req.rank, it->second);
        }
        if (req.decision.admission != Admission::Deny) {
            for (const auto& id : decisions[k].matched) {
                std::size_t r = position.at(id);
                const auto& bw = rules[r].actions.bandwidth;
                if (!bw || bw->scope != Scope::Aggregate) continue;
                auto [it, fresh] = pipe_of_rule.emplace(r, in.pipes.size());
                if (fresh) {
                    in.pipes.push_back(Pipe{rules[r].id, bw->min_kbps, bw->max_kbps,
                                            rules[r].actions.priority.value_or(kDefaultPriority), r});
                }
                req.pipe = it->second;
                break;
            }
        }
        in.requests.push_back(std::move(req));
    }
    return in;
}

std::vector<AllocationReport> replay(const std::vector<PolicyRule>& rules, std::span<const FlowDescriptor> trace,
                                     std::int64_t capacity_kbps, std::int64_t step_seconds, const Decider& decider) {
    if (step_seconds < 1) throw ValidationError("step must be at least 1 second");
    std::vector<AllocationReport> reports;
    auto bucket_of = [&](std::int64_t ts) {
        std::int64_t r = ts % step_seconds;
        return ts - (r < 0 ? r + step_seconds : r);
    };
    std::size_t i = 0;
    while (i < trace.size()) {
        std::int64_t bucket = bucket_of(trace[i].timestamp);
        std::size_t j = i;
        std::vector<Decision> decisions;
        std::vector<std::int64_t> demands;
        while (j < trace.size() && bucket_of(trace[j].timestamp) == bucket) {
            if (j > i && trace[j].timestamp < trace[j - 1].timestamp) throw ValidationError("trace is not sorted by timestamp");
            decisions.push_back(decider(trace[j]));
            demands.push_back(trace[j].demand_kbps);
            ++j;
        }
        if (j < trace.size() && trace[j].timestamp < trace[j - 1].timestamp) {
            throw ValidationError("trace is not sorted by timestamp");
        }
        auto input = build_allocation_input(rules, decisions, demands);
        auto granted = allocate(input.requests, input.pipes, capacity_kbps);
        AllocationReport report;
        report.timestep = bucket;
        report.capacity_kbps = capacity_kbps;
        for (std::size_t k = 0; k < decisions.size(); ++k) {
            FlowRecord rec;
            rec.flow = i + k + 1;
            rec.rules = decisions[k].matched;
            rec.granted_kbps = granted[k];
            rec.demand_kbps = demands[k];
            rec.denied = decisions[k].admission == Admission::Deny;
            report.used_kbps += granted[k];
            report.flows.push_back(std::move(rec));
        }
        reports.push_back(std::move(report));
        i = j;
    }
    return reports;
}

std::vector<AllocationReport> replay(const std::vector<PolicyRule>& rules, const Catalogs& catalogs,
                                     std::span<const FlowDescriptor> trace, std::int64_t capacity_kbps,
                                     std::int64_t step_seconds) {
    return replay(rules, trace, capacity_kbps, step_seconds,
                  [&](const FlowDescriptor& f) { return decide(rules, f, catalogs); });
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr std::string_view kTraceHeader = "ts,src,dst,proto,port,demand_kbps";

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto at = s.find(sep, start);
        out.push_back(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
        if (at == std::string_view::npos) return out;
        start = at + 1;
    }
}

template <typename T>
std::optional<T> number(std::string_view s) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace

std::vector<FlowDescriptor> parse_trace(std::string_view csv) {
    std::vector<FlowDescriptor> out;
    std::size_t line_no = 0;
    bool header = false;
    for (auto line : split(csv, '\n')) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        auto fail = [&](const std::string& msg) { throw ParseError(line_no, 1, msg, std::string(line)); };
        if (!header) {
            if (line != kTraceHeader) fail("expected trace header '" + std::string(kTraceHeader) + "'");
            header = true;
            continue;
        }
        auto f = split(line, ',');
        if (f.size() != 6) fail("expected 6 fields, found " + std::to_string(f.size()));
        FlowDescriptor flow;
        auto ts = number<std::int64_t>(f[0]);
        auto src = parse_ipv4(f[1]);
        auto dst = parse_ipv4(f[2]);
        auto port = number<std::uint32_t>(f[4]);
        auto demand = number<std::int64_t>(f[5]);
        if (!ts) fail("bad timestamp '" + std::string(f[0]) + "'");
        if (!src) fail("bad source address '" + std::string(f[1]) + "'");
        if (!dst) fail("bad destination address '" + std::string(f[2]) + "'");
        if (f[3] == "tcp") flow.protocol = Protocol::Tcp;
        else if (f[3] == "udp") flow.protocol = Protocol::Udp;
        else fail("bad protocol '" + std::string(f[3]) + "'");
        if (!port || *port > 65535) fail("bad port '" + std::string(f[4]) + "'");
        if (!demand || *demand < 1) fail("bad demand '" + std::string(f[5]) + "'");
        flow.timestamp = *ts;
        flow.src = *src;
        flow.dst = *dst;
        flow.port = static_cast<std::uint16_t>(*port);
        flow.demand_kbps = *demand;
        if (!out.empty() && flow.timestamp < out.back().timestamp) fail("trace is not sorted by timestamp");
        out.push_back(flow);
    }
    if (!header && !csv.empty() && csv.find_first_not_of("\r\n") != std::string_view::npos) {
        throw ParseError(1, 1, "missing trace header", "");
    }
    return out;
}

std::string format_trace(std::span<const FlowDescriptor> flows) {
    std::string out = std::string(kTraceHeader) + "\n";
    for (const auto& f : flows) {
        out += std::to_string(f.timestamp) + "," + to_string(f.src) + "," + to_string(f.dst) + "," +
               std::string(to_string(f.protocol)) + "," + std::to_string(f.port) + "," + std::to_string(f.demand_kbps) + "\n";
    }
    return out;
}

std::string format_report(const std::vector<AllocationReport>& reports) {
    std::string out = "ts,flow,rules,granted_kbps,demand_kbps,denied\n";
    for (const auto& r : reports) {
        for (const auto& f : r.flows) {
            std::string rules;
            for (const auto& id : f.rules) rules += (rules.empty() ? "" : ";") + id;
            out += std::to_string(r.timestep) + "," + std::to_string(f.flow) + "," + rules + "," +
                   std::to_string(f.granted_kbps) + "," + std::to_string(f.demand_kbps) + "," + (f.denied ? "1" : "0") +
                   "\n";
        }
    }
    return out;
}

}  // namespace pbm
