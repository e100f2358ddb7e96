#pragma once

#include <optional>
#include <vector>

#include "elastiq/executor.hpp"
#include "elastiq/simulator.hpp"

namespace elastiq {

// Threshold autoscaling emulation. Headroom is modeled as
// (1 - backlogSeconds/evaluationPeriod) * 100; the utilization trigger the
// real platform uses is not observable in a simulator.
struct AutoscaleRules {
    double scale_out_below_pct = 15;
    double scale_in_above_pct = 75;
    int min_nodes = 2;
    int max_nodes = 30;
    Millis evaluation_period_ms = 300 * 1000;
};

void validate_rules(const AutoscaleRules& rules);

// Batch schedule with every entry pinned to one configuration (no
// elasticity); batch sizing still applies and the best factor is taken.
// Infeasible when any batch would run out of slack.
std::optional<Schedule> fixed_config_schedule(const SimContext& ctx,
                                              const std::vector<QuerySpec>& queries,
                                              const ClusterConfig& config,
                                              Millis simu_start_time);

// Eager dispatch without batch sizing: whatever arrived is processed by
// least laxity on a fixed configuration. Misses are outcomes, not errors.
ExecutionTrace naive_llf_run(const ScenarioConfig& scenario, const ClusterConfig& config);

// Rule-driven +-1 node scaling with provisioning delays and no deadline
// awareness; batching follows the elastic grid's chosen factor.
ExecutionTrace autoscale_run(const ScenarioConfig& scenario, const AutoscaleRules& rules);

}  // namespace elastiq
