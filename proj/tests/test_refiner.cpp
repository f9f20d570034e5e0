#include <gtest/gtest.h>

#include "pbm/error.hpp"
#include "pbm/refiner.hpp"
#include "support.hpp"

using namespace pbm;

namespace {

void add(GoalGraph& g, const std::string& parent, RefineMode mode, std::vector<std::string> children) {
    g.goals.emplace(parent, Goal{parent, 1, ""});
    for (const auto& c : children) g.goals.emplace(c, Goal{c, 3, ""});
    g.refinements[parent] = Refinement{parent, mode, std::move(children)};
}

std::vector<std::vector<std::string>> leaf_sets(const std::vector<Strategy>& s) {
    std::vector<std::vector<std::string>> out;
    for (const auto& x : s) out.push_back(x.leaves);
    return out;
}

Binding wildcard_allow(const std::string& goal) {
    Binding b;
    b.goal = goal;
    b.subject = "s";
    b.target = "t";
    b.actions.admission = Admission::Allow;
    return b;
}

}  // namespace

TEST(Strategies, CaseStudyHasOneStrategyWithAllLeaves) {
    auto doc = test::case_study();
    auto s = enumerate_strategies(doc.graph, "G1-1");
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].id, "S1");
    EXPECT_EQ(s[0].root, "G1-1");
    ASSERT_EQ(s[0].leaves.size(), 16u);
    for (int k = 1; k <= 16; ++k) EXPECT_EQ(s[0].leaves[k - 1], "SG3-" + std::to_string(k));
}

TEST(Strategies, LeafRootIsItsOwnStrategy) {
    GoalGraph g;
    g.goals["g"] = Goal{"g", 3, ""};
    auto s = enumerate_strategies(g, "g");
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].leaves, std::vector<std::string>{"g"});
}

TEST(Strategies, OrOverAndExample) {
    GoalGraph g;
    add(g, "root", RefineMode::Or, {"a", "b"});
    add(g, "a", RefineMode::And, {"x", "y"});
    auto s = enumerate_strategies(g, "root");
    EXPECT_EQ(leaf_sets(s), (std::vector<std::vector<std::string>>{{"b"}, {"x", "y"}}));
    EXPECT_EQ(s[0].id, "S1");
    EXPECT_EQ(s[1].id, "S2");
}

TEST(Strategies, SharedChildCountsOnceAndSupersetsDrop) {
    GoalGraph g;
    add(g, "r", RefineMode::And, {"a", "b"});
    add(g, "a", RefineMode::Or, {"x", "y"});
    add(g, "b", RefineMode::Or, {"x", "z"});
    auto s = enumerate_strategies(g, "r");
    // {x} satisfies both ORs, so {x,z} and {x,y} are not minimal.
    EXPECT_EQ(leaf_sets(s), (std::vector<std::vector<std::string>>{{"x"}, {"y", "z"}}));
}

TEST(Strategies, PureOrTreeHasOnePerLeaf) {
    for (int n = 1; n <= 9; ++n) {
        GoalGraph g;
        std::vector<std::string> kids;
        for (int k = 0; k < n; ++k) kids.push_back("c" + std::to_string(k));
        add(g, "r", RefineMode::Or, kids);
        EXPECT_EQ(enumerate_strategies(g, "r").size(), static_cast<std::size_t>(n));
    }
}

TEST(Strategies, CapAndUnknownRoot) {
    GoalGraph g;
    std::vector<std::string> ors;
    for (int k = 0; k < 6; ++k) {
        std::string id = "o" + std::to_string(k);
        ors.push_back(id);
        add(g, id, RefineMode::Or, {id + "a", id + "b", id + "c"});
    }
    add(g, "r", RefineMode::And, ors);
    EXPECT_EQ(enumerate_strategies(g, "r").size(), 729u);
    EXPECT_THROW(enumerate_strategies(g, "r", 100), StrategyLimitError);
    EXPECT_THROW(enumerate_strategies(g, "nope"), ValidationError);
}

TEST(Compile, CaseStudyRulesFollowLeafOrder) {
    auto doc = test::case_study();
    auto s = enumerate_strategies(doc.graph, "G1-1").at(0);
    auto rules = compile_strategy(doc, s);
    ASSERT_EQ(rules.size(), 16u);
    for (std::size_t k = 0; k < rules.size(); ++k) {
        EXPECT_EQ(rules[k].id, "P" + std::to_string(k + 1));
        EXPECT_EQ(rules[k].order, static_cast<int>(k));
        EXPECT_EQ(rules[k].based_on, s.leaves[k]);
    }
    const auto& p9 = rules[8];
    EXPECT_EQ(p9.condition, (Condition{"any", "any", "P2P Applications", "Working Hours"}));
    EXPECT_EQ(p9.actions.admission, Admission::Deny);
}

TEST(Compile, MatchesCheckedInCompiledFixture) {
    auto doc = test::case_study();
    auto s = enumerate_strategies(doc.graph, "G1-1").at(0);
    EXPECT_EQ(serialize(compile_document(doc, s)), test::read_file(test::fixture_path("unicauca_compiled.pbm")));
}

TEST(Compile, SingleWildcardLeaf) {
    Document doc;
    doc.graph.goals["g"] = Goal{"g", 3, ""};
    doc.bindings["g"] = wildcard_allow("g");
    auto rules = compile_strategy(doc, enumerate_strategies(doc.graph, "g").at(0));
    ASSERT_EQ(rules.size(), 1u);
    EXPECT_EQ(rules[0].id, "P1");
    EXPECT_EQ(rules[0].condition, Condition{});
    EXPECT_EQ(rules[0].actions.admission, Admission::Allow);
}

TEST(Compile, ChosenOrBranch) {
    Document doc;
    add(doc.graph, "root", RefineMode::Or, {"a", "b"});
    add(doc.graph, "a", RefineMode::And, {"x", "y"});
    for (const auto* id : {"x", "y"}) doc.bindings[id] = wildcard_allow(id);
    auto b = wildcard_allow("b");
    b.actions.admission = Admission::Deny;
    doc.bindings["b"] = b;
    auto strategies = enumerate_strategies(doc.graph, "root");
    auto rules = compile_strategy(doc, strategies.at(0));
    ASSERT_EQ(rules.size(), 1u);
    EXPECT_EQ(rules[0].based_on, "b");
    EXPECT_EQ(rules[0].actions.admission, Admission::Deny);
    EXPECT_EQ(compile_strategy(doc, strategies.at(1)).size(), 2u);
}

TEST(Compile, UnboundLeafFails) {
    Document doc;
    doc.graph.goals["g"] = Goal{"g", 3, ""};
    EXPECT_THROW(compile_strategy(doc, Strategy{"S1", "g", {"g"}}), ValidationError);
}

TEST(Compile, IsDeterministic) {
    auto doc = test::case_study();
    auto s = enumerate_strategies(doc.graph, "G1-1").at(0);
    auto first = serialize(compile_document(doc, s));
    for (int k = 0; k < 3; ++k) EXPECT_EQ(serialize(compile_document(doc, s)), first);
}
