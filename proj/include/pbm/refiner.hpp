#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pbm/dsl.hpp"
#include "pbm/model.hpp"

namespace pbm {

/// A set of operational goals that jointly achieves `root`.
struct Strategy {
    std::string id;                   // "S1", "S2", ...
    std::string root;
    std::vector<std::string> leaves;  // natural id order

    bool operator==(const Strategy&) const = default;
};

inline constexpr std::size_t kDefaultStrategyCap = 10'000;

/// All strategies for `root` under AND/OR semantics: a leaf is its own
/// strategy, an AND node takes the union of one strategy per child, an OR
/// node takes any child's strategy. Shared sub-goals count once. Strategies
/// that strictly contain another one are dropped, so every result is
/// minimal. Results are ordered lexicographically by leaf list and numbered
/// S1, S2, ... in that order.
///
/// Throws ValidationError for an unknown root or an invalid graph, and
/// StrategyLimitError when more than `cap` strategies would be produced.
std::vector<Strategy> enumerate_strategies(const GoalGraph& graph, const std::string& root,
                                           std::size_t cap = kDefaultStrategyCap);

/// One rule per strategy leaf, in leaf order: id "P<n>", order n-1,
/// based_on the leaf, body copied from the leaf's binding. Throws
/// ValidationError for an unbound leaf or an invalid binding.
std::vector<PolicyRule> compile_strategy(const Document& doc, const Strategy& strategy);

/// `doc` with its rules replaced by compile_strategy(doc, strategy).
Document compile_document(const Document& doc, const Strategy& strategy);

}  // namespace pbm
