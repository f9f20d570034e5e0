#pragma once

#include <string>
#include <string_view>

namespace pbm {

/// Natural ordering for identifiers: digit runs compare numerically, so
/// "SG3-2" sorts before "SG3-10". Falls back to byte order when two ids
/// differ only in leading zeros, which keeps the ordering strict.
int natural_compare(std::string_view a, std::string_view b) noexcept;

struct IdLess {
    using is_transparent = void;
    bool operator()(std::string_view a, std::string_view b) const noexcept {
        return natural_compare(a, b) < 0;
    }
};

/// True for strings made only of letters, digits, '-' and '_'.
bool is_identifier(std::string_view s) noexcept;

}  // namespace pbm
