#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "pbm/ids.hpp"

using namespace pbm;

TEST(NaturalOrder, NumericRunsCompareByValue) {
    EXPECT_LT(natural_compare("SG3-2", "SG3-10"), 0);
    EXPECT_GT(natural_compare("P10", "P9"), 0);
    EXPECT_EQ(natural_compare("SG3-1", "SG3-1"), 0);
    EXPECT_LT(natural_compare("A", "B"), 0);
    EXPECT_LT(natural_compare("P1", "P1a"), 0);
}

TEST(NaturalOrder, SortsCaseStudyIds) {
    std::vector<std::string> ids = {"SG3-10", "SG3-2", "SG3-1", "SG3-16", "SG3-9"};
    std::sort(ids.begin(), ids.end(), IdLess{});
    EXPECT_EQ(ids, (std::vector<std::string>{"SG3-1", "SG3-2", "SG3-9", "SG3-10", "SG3-16"}));
}

TEST(NaturalOrder, IsAStrictWeakOrderOnSamples) {
    std::vector<std::string> s = {"a", "a0", "a00", "a1", "a01", "b", "", "1", "01", "10", "x-2", "x_2"};
    for (const auto& a : s) {
        EXPECT_FALSE(IdLess{}(a, a));
        for (const auto& b : s) {
            if (IdLess{}(a, b)) EXPECT_FALSE(IdLess{}(b, a)) << a << " " << b;
        }
    }
}

TEST(Identifier, AcceptsWordCharacters) {
    EXPECT_TRUE(is_identifier("SG3-1"));
    EXPECT_TRUE(is_identifier("proxy_pool"));
    EXPECT_FALSE(is_identifier(""));
    EXPECT_FALSE(is_identifier("Mail Servers"));
    EXPECT_FALSE(is_identifier("a.b"));
}
