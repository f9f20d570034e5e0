#include <gtest/gtest.h>

#include "oracles/generators.hpp"
#include "pbm/dsl.hpp"
#include "pbm/error.hpp"
#include "support.hpp"

using namespace pbm;

TEST(Parse, CaseStudyHasTwentyGoalsAndSixteenBindings) {
    auto doc = test::case_study();
    EXPECT_EQ(doc.graph.goals.size(), 20u);
    EXPECT_EQ(doc.bindings.size(), 16u);
    EXPECT_EQ(doc.catalogs.utc_offset_minutes, -300);
    EXPECT_TRUE(doc.rules.empty());
    EXPECT_EQ(doc.meta.at("name"), "unicauca-campus");
    EXPECT_TRUE(doc.catalogs.services.at("All IP").any);
    EXPECT_EQ(doc.catalogs.services.at("VoIP").matchers.size(), 2u);
}

TEST(Parse, EmptyInputGivesEmptyDocument) {
    auto doc = parse("");
    EXPECT_EQ(doc, Document{});
    EXPECT_TRUE(validate_document(doc).empty());
}

TEST(Parse, UnknownGoalInBinding) {
    std::string text =
        "bind SG9-9 {\n"
        "  subject a target b\n"
        "  if source any dest any service any time any\n"
        "  then allow\n"
        "}\n";
    try {
        parse(text);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(e.message().find("unknown goal SG9-9"), std::string::npos) << e.message();
        EXPECT_EQ(e.line(), 1u);
    }
}

TEST(Parse, SyntaxErrorPositionIsInsideInput) {
    const std::vector<std::string> bad = {
        "entity",
        "entity X { 10.0.0.300 }",
        "service S { tcp 70000 }",
        "time T { mon 10:00-09:00 }",
        "goal A level 0 \"x\"",
        "goal A level 1 \"unterminated",
        "refine A and { B }",
        "meta tz \"+99:00\"",
        "entity any { 10.0.0.1 }",
        "goal A level 1 \"a\"\ngoal A level 1 \"b\"",
        "goal A level 1 \"\"\nrefine A and { A }",
        "\n\n   }",
    };
    for (const auto& text : bad) {
        try {
            parse(text);
            ADD_FAILURE() << "parsed: " << text;
        } catch (const ParseError& e) {
            std::size_t lines = 1 + static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
            EXPECT_GE(e.line(), 1u) << text;
            EXPECT_LE(e.line(), lines) << text;
            EXPECT_GE(e.column(), 1u) << text;
        }
    }
}

TEST(Parse, CycleIsRejected) {
    std::string text =
        "goal A level 1 \"a\"\n"
        "goal B level 2 \"b\"\n"
        "refine A and { B }\n"
        "refine B and { A }\n";
    EXPECT_THROW(parse(text), ParseError);
}

TEST(Parse, BandwidthUnitsAndComments) {
    std::string text =
        "# comment\n"
        "entity \"Proxy \\\"A\\\"\" { 10.0.0.1 }  # trailing\n"
        "goal G level 1 \"g\"\n"
        "bind G {\n"
        "  subject s target t\n"
        "  if source \"Proxy \\\"A\\\"\" dest any service any time any\n"
        "  then min 2 mbps aggregate max 3 mbps\n"
        "}\n";
    auto doc = parse(text);
    const auto& b = doc.bindings.at("G");
    EXPECT_EQ(b.condition.source, "Proxy \"A\"");
    ASSERT_TRUE(b.actions.bandwidth);
    EXPECT_EQ(b.actions.bandwidth->min_kbps, 2000);
    EXPECT_EQ(b.actions.bandwidth->max_kbps, 3000);
    EXPECT_EQ(b.actions.bandwidth->scope, Scope::Aggregate);
}

TEST(Serialize, EmptyDocumentIsHeaderOnly) {
    auto text = serialize(Document{});
    ASSERT_FALSE(text.empty());
    EXPECT_EQ(text[0], '#');
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
    EXPECT_EQ(parse(text), Document{});
}

TEST(Serialize, CaseStudyRoundTrips) {
    auto doc = test::case_study();
    auto text = serialize(doc);
    EXPECT_EQ(parse(text), doc);
    EXPECT_EQ(serialize(parse(text)), text);
    auto compiled = test::case_study_compiled();
    EXPECT_EQ(parse(serialize(compiled)), compiled);
}

TEST(Serialize, GeneratedDocumentsAreFixpoints) {
    gen::Rng rng(11);
    for (int k = 0; k < 200; ++k) {
        auto doc = gen::random_document(rng);
        auto text = serialize(doc);
        Document back;
        ASSERT_NO_THROW(back = parse(text)) << text;
        EXPECT_EQ(back, doc) << text;
        EXPECT_EQ(serialize(back), text);
    }
}

TEST(Format, DaysAndMinutes) {
    EXPECT_EQ(format_days(0x1f), "mon-fri");
    EXPECT_EQ(format_days(0x60), "sat-sun");
    EXPECT_EQ(format_days(0x45), "mon,wed,sun");
    EXPECT_EQ(format_days(kAllDays), "mon-sun");
    EXPECT_EQ(format_minute(0), "00:00");
    EXPECT_EQ(format_minute(1440), "24:00");
    EXPECT_EQ(format_minute(485), "08:05");
}
