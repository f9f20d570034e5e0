#pragma once

// Fluid-flow enforcement simulator. Each timestep, flows are decided and
// link capacity is handed out in two phases: guarantees first (strict
// priority tiers, proportional split when a tier is oversubscribed), then
// excess by progressive filling, again tier by tier.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pbm/model.hpp"
#include "pbm/pdp.hpp"

namespace pbm {

inline constexpr std::size_t kNoRank = std::numeric_limits<std::size_t>::max();

/// Aggregate bandwidth shared by every flow whose first matching
/// aggregate-scope rule is `rule`.
struct Pipe {
    std::string rule;
    std::optional<std::int64_t> min_kbps;
    std::optional<std::int64_t> max_kbps;
    int priority = kDefaultPriority;
    std::size_t rank = kNoRank;  // position of the rule in the rule list
};

struct FlowRequest {
    Decision decision;
    std::int64_t demand_kbps = 0;
    /// Index into the pipe list. Pipe members are guaranteed through the
    /// pipe and sit in the pipe's priority tier.
    std::optional<std::size_t> pipe;
    /// Position of the first matching rule; orders flows inside a tier.
    /// Ties (and kNoRank) fall back to input order.
    std::size_t rank = kNoRank;
};

/// Granted kbps per request, same order as `flows`. Deterministic.
///
/// Phase A visits tiers 9..1. A standalone flow's guarantee is
/// min(effective_min, demand, effective_max); a pipe's is
/// min(pipe min, sum of member caps, pipe max) and is then shared among its
/// members by progressive filling. If a tier's guarantees exceed what is
/// left, the remainder is split in proportion to the guarantees with the
/// D'Hondt highest-averages rule (ties by rank), which keeps every grant
/// monotone in capacity.
///
/// Phase B visits tiers 9..1 again and raises every unsaturated flow by
/// equal increments up to min(demand, effective_max), keeping each pipe at
/// or below its max; leftovers smaller than one increment per flow go one
/// kbps at a time in rank order. Denied flows get 0.
std::vector<std::int64_t> allocate(std::span<const FlowRequest> flows, std::span<const Pipe> pipes,
                                   std::int64_t capacity_kbps);

inline std::vector<std::int64_t> allocate(std::span<const FlowRequest> flows, std::int64_t capacity_kbps) {
    return allocate(flows, std::span<const Pipe>{}, capacity_kbps);
}

struct AllocationInput {
    std::vector<FlowRequest> requests;
    std::vector<Pipe> pipes;
};

/// Turns decisions into allocator input: rank from the first matched rule,
/// pipe from the first matched rule that carries an aggregate-scope bound.
AllocationInput build_allocation_input(const std::vector<PolicyRule>& rules, std::span<const Decision> decisions,
                                       std::span<const std::int64_t> demands);

struct FlowRecord {
    std::size_t flow = 0;  // 1-based position in the trace
    std::vector<std::string> rules;
    std::int64_t granted_kbps = 0;
    std::int64_t demand_kbps = 0;
    bool denied = false;

    bool operator==(const FlowRecord&) const = default;
};

struct AllocationReport {
    std::int64_t timestep = 0;  // bucket start, epoch seconds
    std::vector<FlowRecord> flows;
    std::int64_t capacity_kbps = 0;
    std::int64_t used_kbps = 0;

    bool operator==(const AllocationReport&) const = default;
};

using Decider = std::function<Decision(const FlowDescriptor&)>;

/// Buckets the trace into epoch-aligned steps of `step_seconds`, decides
/// every flow and allocates per step. Throws ValidationError for an
/// unsorted trace or step_seconds < 1.
std::vector<AllocationReport> replay(const std::vector<PolicyRule>& rules, std::span<const FlowDescriptor> trace,
                                     std::int64_t capacity_kbps, std::int64_t step_seconds, const Decider& decider);

std::vector<AllocationReport> replay(const std::vector<PolicyRule>& rules, const Catalogs& catalogs,
                                     std::span<const FlowDescriptor> trace, std::int64_t capacity_kbps,
                                     std::int64_t step_seconds = 1);

/// CSV with header `ts,src,dst,proto,port,demand_kbps`. Throws ParseError
/// with the offending line for malformed or unsorted rows.
std::vector<FlowDescriptor> parse_trace(std::string_view csv);
std::string format_trace(std::span<const FlowDescriptor> flows);

/// CSV with header `ts,flow,rules,granted_kbps,demand_kbps,denied`; matched
/// rule ids are joined with ';', denied is 0 or 1.
std::string format_report(const std::vector<AllocationReport>& reports);

}  // namespace pbm
