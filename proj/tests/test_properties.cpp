// Randomized checks of the model, decision and allocation invariants. The
// acceptance binary runs the same families at full trial counts; these runs
// are smaller so the unit suite stays fast.

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles/generators.hpp"
#include "oracles/oracles.hpp"
#include "pbm/pdp.hpp"
#include "pbm/pep_sim.hpp"
#include "pbm/refiner.hpp"
#include "pbm/repo.hpp"
#include "support.hpp"

using namespace pbm;

namespace {

std::int64_t cap_of(const FlowRequest& f) {
    if (f.decision.admission == Admission::Deny) return 0;
    std::int64_t c = f.demand_kbps;
    if (f.decision.effective_max_kbps) c = std::min(c, *f.decision.effective_max_kbps);
    return std::max<std::int64_t>(c, 0);
}

std::int64_t own_guarantee(const FlowRequest& f) {
    if (!f.decision.effective_min_kbps) return 0;
    return std::min(*f.decision.effective_min_kbps, cap_of(f));
}

std::int64_t pipe_guarantee(const gen::AllocationCase& c, std::size_t p) {
    const Pipe& pipe = c.pipes[p];
    if (!pipe.min_kbps) return 0;
    std::int64_t caps = 0;
    for (const auto& f : c.flows) {
        if (f.pipe == p) caps += cap_of(f);
    }
    std::int64_t g = std::min(*pipe.min_kbps, caps);
    if (pipe.max_kbps) g = std::min(g, *pipe.max_kbps);
    return g;
}

}  // namespace

TEST(Properties, PriorityBandsPartitionOneToNine) {
    std::map<PriorityBand, int> counts;
    for (int p = 1; p <= 9; ++p) ++counts[priority_band(p)];
    EXPECT_EQ(counts[PriorityBand::Low], 4);
    EXPECT_EQ(counts[PriorityBand::Middle], 3);
    EXPECT_EQ(counts[PriorityBand::High], 2);
}

TEST(Properties, WildcardingNeverTurnsAMatchOff) {
    gen::Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        auto cat = gen::random_catalogs(rng);
        auto rules = gen::random_rules(rng, cat);
        for (int k = 0; k < 20; ++k) {
            auto f = gen::random_flow(rng, cat);
            EXPECT_TRUE(condition_matches(Condition{}, f, cat));
            for (const auto& r : rules) {
                if (!condition_matches(r.condition, f, cat)) continue;
                for (int field = 0; field < 4; ++field) {
                    Condition c = r.condition;
                    std::string* slots[] = {&c.source, &c.destination, &c.service, &c.time};
                    *slots[field] = std::string(kAny);
                    EXPECT_TRUE(condition_matches(c, f, cat));
                }
            }
        }
    }
}

TEST(Properties, ValidGraphsHaveTopologicalOrder) {
    gen::Rng rng(22);
    for (int trial = 0; trial < 300; ++trial) {
        auto c = gen::random_graph(rng);
        ASSERT_TRUE(validate_graph(c.graph).empty());
        auto order = topological_order(c.graph);
        std::map<std::string, std::size_t> pos;
        for (std::size_t k = 0; k < order.size(); ++k) pos[order[k]] = k;
        for (const auto& [parent, r] : c.graph.refinements) {
            for (const auto& child : r.children) EXPECT_LT(pos[parent], pos[child]);
        }
    }
}

TEST(Properties, StrategiesMatchBruteForce) {
    gen::Rng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        auto c = gen::random_graph(rng);
        std::vector<std::vector<std::string>> got;
        for (const auto& s : enumerate_strategies(c.graph, c.root)) got.push_back(s.leaves);
        EXPECT_EQ(got, oracle::strategies(c.graph, c.root));
    }
}

TEST(Properties, AllAndGraphsHaveOneStrategyOfReachableLeaves) {
    gen::Rng rng(24);
    for (int trial = 0; trial < 200; ++trial) {
        auto c = gen::random_graph(rng);
        for (auto& [id, r] : c.graph.refinements) r.mode = RefineMode::And;
        auto s = enumerate_strategies(c.graph, c.root);
        ASSERT_EQ(s.size(), 1u);
        std::set<std::string, IdLess> reach;
        std::vector<std::string> stack{c.root};
        while (!stack.empty()) {
            auto id = stack.back();
            stack.pop_back();
            auto it = c.graph.refinements.find(id);
            if (it == c.graph.refinements.end()) reach.insert(id);
            else stack.insert(stack.end(), it->second.children.begin(), it->second.children.end());
        }
        EXPECT_EQ(s[0].leaves, std::vector<std::string>(reach.begin(), reach.end()));
    }
}

TEST(Properties, DecideIgnoresRuleOrderForAdmissionAndBounds) {
    gen::Rng rng(25);
    for (int trial = 0; trial < 300; ++trial) {
        auto cat = gen::random_catalogs(rng);
        auto rules = gen::random_rules(rng, cat);
        auto shuffled = rules;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        for (int k = 0; k < 10; ++k) {
            auto f = gen::random_flow(rng, cat);
            auto a = decide(rules, f, cat);
            auto b = decide(shuffled, f, cat);
            EXPECT_EQ(a.admission, b.admission);
            EXPECT_EQ(a.effective_min_kbps, b.effective_min_kbps);
            EXPECT_EQ(a.effective_max_kbps, b.effective_max_kbps);
            EXPECT_EQ(a.flags, b.flags);
            EXPECT_EQ(decide(rules, f, cat), a);
        }
    }
}

TEST(Properties, AddingAMatchingDenyAlwaysDenies) {
    gen::Rng rng(26);
    for (int trial = 0; trial < 300; ++trial) {
        auto cat = gen::random_catalogs(rng);
        auto rules = gen::random_rules(rng, cat);
        auto f = gen::random_flow(rng, cat);
        PolicyRule deny;
        deny.id = "D";
        deny.subject = deny.target = "x";
        deny.actions.admission = Admission::Deny;
        deny.order = 1000;
        auto with = rules;
        with.insert(with.begin() + static_cast<long>(gen::uniform(rng, 0, static_cast<int>(rules.size()))), deny);
        EXPECT_EQ(decide(with, f, cat).admission, Admission::Deny);
    }
}

TEST(Properties, ConflictsAreSymmetricSoundAndComplete) {
    gen::Rng rng(27);
    for (int trial = 0; trial < 150; ++trial) {
        auto cat = gen::random_catalogs(rng);
        auto rules = gen::random_rules(rng, cat);
        auto found = detect_conflicts(rules, cat);
        std::set<oracle::ConflictKey> keys;
        std::map<std::string, const PolicyRule*> by_id;
        for (const auto& r : rules) by_id[r.id] = &r;
        for (const auto& c : found) {
            keys.insert({c.rule_a, c.rule_b, c.kind});
            EXPECT_TRUE(oracle::in_both(*by_id[c.rule_a], *by_id[c.rule_b], c.witness, cat));
        }
        EXPECT_EQ(keys, oracle::conflicts(rules, cat));

        auto reversed = rules;
        std::reverse(reversed.begin(), reversed.end());
        std::set<std::tuple<std::string, std::string, ConflictKind>> fwd, rev;
        for (const auto& c : found) fwd.insert({std::min(c.rule_a, c.rule_b), std::max(c.rule_a, c.rule_b), c.kind});
        for (const auto& c : detect_conflicts(reversed, cat)) {
            rev.insert({std::min(c.rule_a, c.rule_b), std::max(c.rule_a, c.rule_b), c.kind});
        }
        EXPECT_EQ(fwd, rev);
    }
}

TEST(Properties, AllocationInvariants) {
    gen::Rng rng(28);
    for (int trial = 0; trial < 1500; ++trial) {
        auto c = gen::random_allocation(rng, 10, 5000, trial % 2 == 0);
        auto got = allocate(c.flows, c.pipes, c.capacity);
        ASSERT_EQ(got.size(), c.flows.size());
        EXPECT_LE(std::accumulate(got.begin(), got.end(), std::int64_t{0}), c.capacity);

        std::int64_t needed = 0;
        for (std::size_t k = 0; k < c.flows.size(); ++k) {
            EXPECT_GE(got[k], 0);
            EXPECT_LE(got[k], cap_of(c.flows[k]));
            if (!c.flows[k].pipe) needed += own_guarantee(c.flows[k]);
        }
        for (std::size_t p = 0; p < c.pipes.size(); ++p) {
            std::int64_t sum = 0;
            for (std::size_t k = 0; k < c.flows.size(); ++k) {
                if (c.flows[k].pipe == p) sum += got[k];
            }
            if (c.pipes[p].max_kbps) EXPECT_LE(sum, *c.pipes[p].max_kbps);
            needed += pipe_guarantee(c, p);
        }
        if (needed <= c.capacity) {
            for (std::size_t k = 0; k < c.flows.size(); ++k) {
                if (!c.flows[k].pipe) EXPECT_GE(got[k], own_guarantee(c.flows[k]));
            }
            for (std::size_t p = 0; p < c.pipes.size(); ++p) {
                std::int64_t sum = 0;
                for (std::size_t k = 0; k < c.flows.size(); ++k) {
                    if (c.flows[k].pipe == p) sum += got[k];
                }
                EXPECT_GE(sum, pipe_guarantee(c, p));
            }
        }

        auto more = allocate(c.flows, c.pipes, c.capacity + gen::uniform(rng, 1, 500));
        for (std::size_t k = 0; k < got.size(); ++k) EXPECT_LE(got[k], more[k]) << "flow " << k;
    }
}

TEST(Properties, SmallAllocationsMatchOracle) {
    gen::Rng rng(29);
    for (int trial = 0; trial < 1000; ++trial) {
        auto c = gen::random_allocation(rng, 6, 2000, trial % 3 != 0);
        EXPECT_EQ(allocate(c.flows, c.pipes, c.capacity), oracle::allocate(c.flows, c.pipes, c.capacity));
    }
}

TEST(Properties, RepositoryIsAppendOnly) {
    gen::Rng rng(30);
    test::TempDir dir;
    Repository repo(dir.path());
    std::vector<std::string> snapshots;
    for (int k = 0; k < 10; ++k) {
        auto doc = gen::random_document(rng);
        auto v = repo.commit(doc);
        EXPECT_EQ(v.version, k + 1);
        snapshots.push_back(test::read_file((dir.path() / v.path).string()));
        EXPECT_EQ(repo.load(v.version), doc);
        for (int j = 0; j <= k; ++j) {
            auto log = repo.log();
            EXPECT_EQ(test::read_file((dir.path() / log[static_cast<std::size_t>(j)].path).string()),
                      snapshots[static_cast<std::size_t>(j)]);
        }
    }
}
