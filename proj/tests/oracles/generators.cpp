#include "oracles/generators.hpp"

#include <algorithm>
#include <set>

namespace pbm::gen {

int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

bool coin(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

namespace {

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
    return items[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(items.size()) - 1))];
}

std::string pick_ref(Rng& rng, const std::vector<std::string>& names) {
    if (names.empty() || coin(rng, 0.25)) return std::string(kAny);
    return pick(rng, names);
}

}  // namespace

GraphCase random_graph(Rng& rng, int max_leaves, int max_internal) {
    GraphCase c;
    int leaves = uniform(rng, 1, max_leaves);
    int internal = uniform(rng, 1, max_internal);
    std::vector<std::string> ids;
    for (int k = 0; k < internal; ++k) ids.push_back("N" + std::to_string(k + 1));
    for (int k = 0; k < leaves; ++k) ids.push_back("L" + std::to_string(k + 1));
    for (const auto& id : ids) c.graph.goals[id] = Goal{id, id[0] == 'N' ? 1 : 3, "goal " + id};
    // Node k refines into later nodes only, which keeps the graph acyclic.
    for (int k = 0; k < internal; ++k) {
        std::vector<std::string> later(ids.begin() + k + 1, ids.end());
        std::shuffle(later.begin(), later.end(), rng);
        int n = std::min<int>(static_cast<int>(later.size()), uniform(rng, 1, 4));
        later.resize(static_cast<std::size_t>(n));
        Refinement r{ids[static_cast<std::size_t>(k)], coin(rng) ? RefineMode::And : RefineMode::Or, later};
        c.graph.refinements[r.parent] = r;
    }
    c.root = ids.front();
    return c;
}

Catalogs random_catalogs(Rng& rng, int max_addresses, int max_services, int max_times) {
    Catalogs cat;
    int budget = uniform(rng, 1, max_addresses);
    int groups = uniform(rng, 1, std::min(4, budget));
    for (int g = 0; g < groups && budget > 0; ++g) {
        EntityGroup e;
        e.name = "E" + std::to_string(g + 1);
        int members = g == groups - 1 ? budget : uniform(rng, 1, std::max(1, budget - (groups - g - 1)));
        for (int m = 0; m < members; ++m) {
            int prefix = pick(rng, std::vector<int>{24, 28, 29, 30, 31, 32, 32, 32});
            auto base = static_cast<std::uint32_t>((10u << 24) | static_cast<std::uint32_t>(uniform(rng, 0, 40)));
            e.members.insert(Cidr(Ipv4{base}, prefix));
        }
        budget -= members;
        cat.entities[e.name] = e;
    }
    int services = uniform(rng, 1, max_services);
    for (int s = 0; s < services; ++s) {
        ServiceClass svc;
        svc.name = "S" + std::to_string(s + 1);
        if (coin(rng, 0.1)) {
            svc.any = true;
        } else {
            int n = uniform(rng, 1, 3);
            for (int k = 0; k < n; ++k) {
                auto lo = static_cast<std::uint16_t>(uniform(rng, 0, 30));
                auto hi = static_cast<std::uint16_t>(lo + uniform(rng, 0, 6));
                auto proto = pick(rng, std::vector<Protocol>{Protocol::Tcp, Protocol::Udp, Protocol::Any});
                svc.matchers.insert(PortMatcher{proto, lo, hi});
            }
        }
        cat.services[svc.name] = svc;
    }
    int times = uniform(rng, 1, max_times);
    for (int t = 0; t < times; ++t) {
        TimeClass tc;
        tc.name = "T" + std::to_string(t + 1);
        int n = uniform(rng, 1, 2);
        for (int k = 0; k < n; ++k) {
            TimeWindow w;
            w.days = static_cast<DaySet>(uniform(rng, 1, kAllDays));
            int a = uniform(rng, 0, 95) * 15;
            int b = uniform(rng, 0, 95) * 15;
            if (a == b) b = a + 15;
            w.start_minute = std::min(a, b);
            w.end_minute = std::max(a, b);
            tc.windows.insert(w);
        }
        cat.times[tc.name] = tc;
    }
    cat.utc_offset_minutes = uniform(rng, -12, 14) * 60;
    return cat;
}

std::vector<PolicyRule> random_rules(Rng& rng, const Catalogs& cat, int max_rules) {
    std::vector<std::string> ents, svcs, tims;
    for (const auto& [n, _] : cat.entities) ents.push_back(n);
    for (const auto& [n, _] : cat.services) svcs.push_back(n);
    for (const auto& [n, _] : cat.times) tims.push_back(n);
    std::vector<PolicyRule> rules;
    int n = uniform(rng, 0, max_rules);
    for (int i = 0; i < n; ++i) {
        PolicyRule r;
        r.id = "R" + std::to_string(i + 1);
        r.order = i;
        r.subject = "shaper";
        r.target = "shaper";
        r.condition = Condition{pick_ref(rng, ents), pick_ref(rng, ents), pick_ref(rng, svcs), pick_ref(rng, tims)};
        auto& a = r.actions;
        int adm = uniform(rng, 0, 3);
        if (adm == 1) a.admission = Admission::Allow;
        if (adm == 2) a.admission = Admission::Deny;
        if (a.admission != Admission::Deny) {
            if (coin(rng, 0.6)) {
                Bandwidth bw;
                bw.scope = coin(rng) ? Scope::Aggregate : Scope::PerConnection;
                int shape = uniform(rng, 0, 2);
                if (shape != 1) bw.min_kbps = uniform(rng, 1, 1000);
                if (shape != 0) bw.max_kbps = std::max<std::int64_t>(bw.min_kbps.value_or(1), uniform(rng, 1, 1000));
                a.bandwidth = bw;
            }
            if (coin(rng, 0.6)) a.priority = uniform(rng, 1, 9);
        }
        if (!a.admission && !a.bandwidth && !a.priority) a.admission = Admission::Allow;
        rules.push_back(std::move(r));
    }
    return rules;
}

FlowDescriptor random_flow(Rng& rng, const Catalogs& cat) {
    auto address = [&] {
        if (!cat.entities.empty() && coin(rng, 0.8)) {
            auto it = std::next(cat.entities.begin(), uniform(rng, 0, static_cast<int>(cat.entities.size()) - 1));
            if (!it->second.members.empty()) {
                auto c = std::next(it->second.members.begin(), uniform(rng, 0, static_cast<int>(it->second.members.size()) - 1));
                std::uint32_t span = c->last().value - c->first().value;
                return Ipv4{c->first().value + static_cast<std::uint32_t>(uniform(rng, 0, static_cast<int>(std::min<std::uint32_t>(span, 1000))))};
            }
        }
        return Ipv4{static_cast<std::uint32_t>((10u << 24) | static_cast<std::uint32_t>(uniform(rng, 0, 60)))};
    };
    FlowDescriptor f;
    f.src = address();
    f.dst = address();
    f.protocol = coin(rng) ? Protocol::Tcp : Protocol::Udp;
    f.port = static_cast<std::uint16_t>(coin(rng, 0.9) ? uniform(rng, 0, 40) : uniform(rng, 0, 65535));
    f.timestamp = std::int64_t{1'700'000'000} + uniform(rng, 0, 14 * 86400);
    f.demand_kbps = uniform(rng, 1, 5000);
    return f;
}

namespace {

const std::vector<std::string> kNames = {
    "Mail Servers", "web", "Host-7", "proxy_pool", "Café réseau", "a \"quoted\" name", "back\\slash",
    "tab\there", "x.y/z", "Ünïcødé → ok", "200", "hours 9-5", "lab", "Core_2",
};

std::string unique_name(Rng& rng, std::set<std::string>& used, const std::string& prefix) {
    for (;;) {
        std::string n = pick(rng, kNames);
        if (coin(rng)) n += " " + prefix + std::to_string(uniform(rng, 0, 99));
        if (used.insert(n).second) return n;
    }
}

ActionSet random_actions(Rng& rng) {
    ActionSet a;
    int adm = uniform(rng, 0, 3);
    if (adm == 1) a.admission = Admission::Allow;
    if (adm == 2) a.admission = Admission::Deny;
    if (a.admission != Admission::Deny) {
        if (coin(rng, 0.6)) {
            Bandwidth bw;
            bw.scope = coin(rng) ? Scope::Aggregate : Scope::PerConnection;
            int shape = uniform(rng, 0, 2);
            if (shape != 1) bw.min_kbps = uniform(rng, 1, 100000);
            if (shape != 0) bw.max_kbps = std::max<std::int64_t>(bw.min_kbps.value_or(1), uniform(rng, 1, 100000));
            a.bandwidth = bw;
        }
        if (coin(rng, 0.6)) a.priority = uniform(rng, 1, 9);
    }
    if (!a.admission && !a.bandwidth && !a.priority) a.priority = uniform(rng, 1, 9);
    return a;
}

}  // namespace

Document random_document(Rng& rng) {
    Document d;
    Catalogs small = random_catalogs(rng, 8, 4, 3);
    // Rename the catalog entries so the serializer has to quote and escape.
    std::set<std::string> used;
    for (auto& [old, e] : small.entities) {
        e.name = unique_name(rng, used, "e");
        if (coin(rng, 0.1)) {
            e.any = true;
            e.members.clear();
        }
        d.catalogs.entities[e.name] = e;
    }
    for (auto& [old, s] : small.services) {
        s.name = unique_name(rng, used, "s");
        d.catalogs.services[s.name] = s;
    }
    for (auto& [old, t] : small.times) {
        t.name = unique_name(rng, used, "t");
        if (coin(rng, 0.1)) {
            t.any = true;
            t.windows.clear();
        }
        d.catalogs.times[t.name] = t;
    }
    d.catalogs.utc_offset_minutes = uniform(rng, -48, 56) * 15;

    int metas = uniform(rng, 0, 3);
    for (int i = 0; i < metas; ++i) d.meta["key_" + std::to_string(i)] = pick(rng, kNames);

    auto g = random_graph(rng, 8, 4);
    d.graph = g.graph;
    for (auto& [id, goal] : d.graph.goals) {
        goal.level = uniform(rng, 1, 4);
        goal.description = pick(rng, kNames);
    }

    std::vector<std::string> ents, svcs, tims;
    for (const auto& [n, _] : d.catalogs.entities) ents.push_back(n);
    for (const auto& [n, _] : d.catalogs.services) svcs.push_back(n);
    for (const auto& [n, _] : d.catalogs.times) tims.push_back(n);
    auto condition = [&] { return Condition{pick_ref(rng, ents), pick_ref(rng, ents), pick_ref(rng, svcs), pick_ref(rng, tims)}; };

    for (const auto& leaf : d.graph.leaves()) {
        if (!coin(rng, 0.7)) continue;
        d.bindings[leaf] = Binding{leaf, pick(rng, kNames), pick(rng, kNames), condition(), random_actions(rng)};
    }
    std::vector<std::string> goals;
    for (const auto& [id, _] : d.graph.goals) goals.push_back(id);
    int rules = uniform(rng, 0, 6);
    std::vector<int> orders(20);
    for (int i = 0; i < 20; ++i) orders[static_cast<std::size_t>(i)] = i * uniform(rng, 1, 3);
    std::sort(orders.begin(), orders.end());
    orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
    std::vector<int> chosen(orders.begin(), orders.begin() + std::min<std::ptrdiff_t>(rules, static_cast<std::ptrdiff_t>(orders.size())));
    std::vector<int> ids(chosen.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i) + 1;
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        PolicyRule r;
        r.id = "P" + std::to_string(ids[i]);
        r.order = chosen[i];
        if (coin(rng, 0.7)) r.based_on = pick(rng, goals);
        r.subject = pick(rng, kNames);
        r.target = pick(rng, kNames);
        r.condition = condition();
        r.actions = random_actions(rng);
        d.rules.push_back(std::move(r));
    }
    return d;
}

Message random_message(Rng& rng) {
    static const std::vector<MessageKind> kinds = {MessageKind::Req, MessageKind::Dec, MessageKind::Rpt,
                                                   MessageKind::Sync, MessageKind::Ack, MessageKind::Err};
    Message m;
    m.kind = pick(rng, kinds);
    int shape = uniform(rng, 0, 3);
    if (shape == 0) return m;
    if (shape == 1) {
        int n = uniform(rng, 1, 600);
        for (int i = 0; i < n; ++i) m.payload.push_back(static_cast<char>(uniform(rng, 0, 255)));
        return m;
    }
    Fields f;
    int n = uniform(rng, 1, 6);
    for (int i = 0; i < n; ++i) f["k" + std::to_string(uniform(rng, 0, 50))] = pick(rng, kNames);
    m.payload = format_fields(f);
    return m;
}

AllocationCase random_allocation(Rng& rng, int max_flows, std::int64_t max_capacity, bool with_pipes) {
    AllocationCase c;
    c.capacity = uniform(rng, 0, static_cast<int>(max_capacity));
    int pipes = with_pipes ? uniform(rng, 0, 2) : 0;
    for (int p = 0; p < pipes; ++p) {
        Pipe pipe;
        pipe.rule = "R" + std::to_string(p + 1);
        pipe.rank = static_cast<std::size_t>(uniform(rng, 0, 5));
        int shape = uniform(rng, 0, 2);
        if (shape != 1) pipe.min_kbps = uniform(rng, 1, 800);
        if (shape != 0) pipe.max_kbps = std::max<std::int64_t>(pipe.min_kbps.value_or(1), uniform(rng, 1, 1200));
        pipe.priority = uniform(rng, 1, 9);
        c.pipes.push_back(pipe);
    }
    int n = uniform(rng, 0, max_flows);
    for (int i = 0; i < n; ++i) {
        FlowRequest f;
        f.demand_kbps = uniform(rng, 1, 1200);
        f.rank = coin(rng, 0.2) ? kNoRank : static_cast<std::size_t>(uniform(rng, 0, 5));
        auto& d = f.decision;
        if (coin(rng, 0.1)) {
            d.admission = Admission::Deny;
        } else {
            int shape = uniform(rng, 0, 3);
            if (shape == 1 || shape == 3) d.effective_min_kbps = uniform(rng, 1, 700);
            if (shape == 2 || shape == 3) d.effective_max_kbps = uniform(rng, 1, 1000);
            if (d.effective_min_kbps && d.effective_max_kbps && *d.effective_min_kbps > *d.effective_max_kbps) {
                d.effective_min_kbps = d.effective_max_kbps;
            }
            d.priority = uniform(rng, 1, 9);
            if (!c.pipes.empty() && coin(rng, 0.4)) {
                f.pipe = static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(c.pipes.size()) - 1));
            }
        }
        c.flows.push_back(std::move(f));
    }
    return c;
}

}  // namespace pbm::gen
