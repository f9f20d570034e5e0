#include "pbm/refiner.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "pbm/error.hpp"

namespace pbm {
namespace {

using LeafSet = std::vector<std::string>;  // sorted by IdLess, unique

struct LeafSetLess {
    bool operator()(const LeafSet& a, const LeafSet& b) const {
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), IdLess{});
    }
};

using StrategySet = std::set<LeafSet, LeafSetLess>;

LeafSet merge(const LeafSet& a, const LeafSet& b) {
    LeafSet out;
    out.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out), IdLess{});
    return out;
}

bool is_subset(const LeafSet& small, const LeafSet& big) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end(), IdLess{});
}

class Enumerator {
public:
    Enumerator(const GoalGraph& graph, std::size_t cap) : graph_(graph), cap_(cap) {}

    const StrategySet& of(const std::string& id) {
        if (auto it = memo_.find(id); it != memo_.end()) return it->second;
        StrategySet result;
        auto ref = graph_.refinements.find(id);
        if (ref == graph_.refinements.end()) {
            result.insert(LeafSet{id});
        } else if (ref->second.mode == RefineMode::Or) {
            for (const auto& child : ref->second.children) {
                for (const auto& s : of(child)) {
                    result.insert(s);
                    guard(result.size());
                }
            }
        } else {
            result.insert(LeafSet{});
            for (const auto& child : ref->second.children) {
                const auto& options = of(child);
                StrategySet product;
                for (const auto& partial : result) {
                    for (const auto& s : options) {
                        product.insert(merge(partial, s));
                        guard(product.size());
                    }
                }
                result = minimal(std::move(product));
            }
        }
        return memo_.emplace(id, minimal(std::move(result))).first->second;
    }

    static StrategySet minimal(StrategySet sets) {
        std::vector<const LeafSet*> by_size;
        for (const auto& s : sets) by_size.push_back(&s);
        std::stable_sort(by_size.begin(), by_size.end(), [](auto* a, auto* b) { return a->size() < b->size(); });
        StrategySet out;
        std::vector<const LeafSet*> kept;
        for (const auto* s : by_size) {
            bool dominated = std::any_of(kept.begin(), kept.end(),
                                         [&](const LeafSet* k) { return k->size() < s->size() && is_subset(*k, *s); });
            if (!dominated) {
                kept.push_back(s);
                out.insert(*s);
            }
        }
        return out;
    }

private:
    void guard(std::size_t n) const {
        if (n > cap_) {
            throw StrategyLimitError("strategy enumeration exceeded the cap of " + std::to_string(cap_) + " strategies");
        }
    }

    const GoalGraph& graph_;
    std::size_t cap_;
    std::map<std::string, StrategySet, IdLess> memo_;
};

}  // namespace

std::vector<Strategy> enumerate_strategies(const GoalGraph& graph, const std::string& root, std::size_t cap) {
    if (!graph.contains(root)) throw ValidationError("unknown root goal " + root);
    if (auto v = validate_graph(graph); !v.empty()) throw ValidationError("invalid goal graph: " + v.front());
    Enumerator e(graph, cap);
    std::vector<Strategy> out;
    for (const auto& leaves : e.of(root)) {
        out.push_back(Strategy{"S" + std::to_string(out.size() + 1), root, leaves});
    }
    return out;
}

std::vector<PolicyRule> compile_strategy(const Document& doc, const Strategy& strategy) {
    std::vector<PolicyRule> rules;
    rules.reserve(strategy.leaves.size());
    for (std::size_t i = 0; i < strategy.leaves.size(); ++i) {
        const auto& leaf = strategy.leaves[i];
        auto it = doc.bindings.find(leaf);
        if (it == doc.bindings.end()) throw ValidationError("goal " + leaf + " has no binding");
        const Binding& b = it->second;
        if (auto v = validate_actions(b.actions); !v.empty()) throw ValidationError("binding " + leaf + ": " + v.front());
        check_condition(b.condition, doc.catalogs);
        PolicyRule r;
        r.id = "P" + std::to_string(i + 1);
        r.based_on = leaf;
        r.subject = b.subject;
        r.target = b.target;
        r.condition = b.condition;
        r.actions = b.actions;
        r.order = static_cast<int>(i);
        rules.push_back(std::move(r));
    }
    return rules;
}

Document compile_document(const Document& doc, const Strategy& strategy) {
    Document out = doc;
    out.rules = compile_strategy(doc, strategy);
    return out;
}

}  // namespace pbm
