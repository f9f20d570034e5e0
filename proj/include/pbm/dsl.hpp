#pragma once

// The .pbm policy language: catalogs, goals, refinements, goal bindings and
// compiled rules in one line-oriented, brace-delimited text format.
//
//   meta tz "-05:00"
//   entity "Mail Servers" { 10.1.1.0/28, 10.1.1.17 }
//   service Mail { tcp 25, tcp 110, tcp 143 }
//   service "All IP" = any
//   time "Working Hours" { mon-fri 08:00-18:00 }
//   goal SG3-1 level 3 "Guarantee 256 kbps per inbound mail connection"
//   refine G1-1 and { SG2-1, SG2-2, SG2-3 }
//   bind SG3-1 {
//     subject "Shaper" target "Shaper"
//     if source "Mail Servers" dest any service Mail time any
//     then min 256 kbps per-connection priority 6
//   }
//   rule P1 from SG3-1 order 0 { ...same body as bind... }

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pbm/model.hpp"

namespace pbm {

struct Binding {
    std::string goal;
    std::string subject;
    std::string target;
    Condition condition;
    ActionSet actions;

    bool operator==(const Binding&) const = default;
};

struct Document {
    /// Free metadata. The "tz" key is not kept here: it is parsed into
    /// catalogs.utc_offset_minutes and serialized from there.
    std::map<std::string, std::string, IdLess> meta;
    Catalogs catalogs;
    GoalGraph graph;
    std::map<std::string, Binding, IdLess> bindings;
    /// Sorted by PolicyRule::order.
    std::vector<PolicyRule> rules;

    bool operator==(const Document&) const = default;
};

/// Parses and fully validates a document. Throws ParseError; semantic
/// errors point at the line of the offending definition.
Document parse(std::string_view text);

/// Canonical text form. parse(serialize(d)) == d for every valid d, and
/// serialize is a fixpoint of parse . serialize.
std::string serialize(const Document& doc);

/// Every violation of the document invariants (graph, catalogs, bindings,
/// rules). Empty for anything parse() returns.
std::vector<std::string> validate_document(const Document& doc);

/// Day-set text such as "mon-fri" or "mon,wed,sat-sun".
std::string format_days(DaySet days);
/// "HH:MM"; 1440 prints as "24:00".
std::string format_minute(int minute);

}  // namespace pbm
