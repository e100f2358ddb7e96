#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "elastiq/errors.hpp"
#include "elastiq/time_util.hpp"

namespace elastiq {

// One discrete cluster size. Sets are kept strictly ordered by size so that
// "next configuration" is well defined during schedule escalation.
struct ClusterConfig {
    int id = 0;                        // ordinal position in the config set
    int worker_nodes = 2;              // core + task nodes doing the processing
    double price_per_node_second = 0;  // dollars per node per second

    bool operator==(const ClusterConfig&) const = default;
};

// Validates ordering/rate invariants of a config set. Throws ScenarioError.
void validate_config_set(const std::vector<ClusterConfig>& configs);

// Mandatory node floor the cluster never goes below when releasing task
// nodes in idle periods (1 primary-equivalent + 1 core on EMR-like sets).
int mandatory_floor_nodes(const std::vector<ClusterConfig>& configs);

// Processing-duration model:
//   duration(nodes, tuples) = (a_serial + a_parallel/nodes) * tuples
//                           + b_fixed + b_per_node/nodes        [seconds]
// a_serial/a_parallel split the per-tuple cost into its serial and
// parallelizable shares; b_fixed/b_per_node are the per-batch overheads.
struct ProcCostModel {
    double a_serial = 0;    // seconds per tuple
    double a_parallel = 0;  // seconds * nodes per tuple
    double b_fixed = 0;     // seconds per batch
    double b_per_node = 0;  // seconds * nodes per batch
    int valid_min_nodes = 1;
    int valid_max_nodes = 1;

    bool in_valid_range(int nodes) const {
        return nodes >= valid_min_nodes && nodes <= valid_max_nodes;
    }
};

// Aggregation-duration model: piecewise-linear g(num_batches) scaled by a
// reciprocal node term, duration = g(batches) * (c0 + c1/nodes).
// g(1) == 0: a single batch needs no cross-batch combining step.
struct AggCostModel {
    // (num_batches, base_seconds), strictly increasing in num_batches.
    std::vector<std::pair<std::int64_t, double>> breakpoints;
    double scale_c0 = 1.0;
    double scale_c1 = 0.0;
};

// Machine + platform hourly rates backing timeline billing.
struct PriceTable {
    double machine_rate_per_hour = 0;
    double platform_rate_per_hour = 0;
    double minimum_billed_seconds = 60;  // per node per acquisition
};

// Step function of cluster size over time. `nodes` holds from `time_ms`
// until the next point; a priced timeline must end with a zero point.
struct TimelinePoint {
    Millis time_ms = 0;
    int nodes = 0;
    bool operator==(const TimelinePoint&) const = default;
};

struct NodeTimeline {
    std::vector<TimelinePoint> points;

    int nodes_at(Millis t) const;
    int max_nodes() const;
};

// Batch processing duration in ms, rounded up. Zero tuples cost only the
// per-batch overheads.
Millis estimate_duration_ms(const ProcCostModel& model, int nodes, std::int64_t tuples);

// Largest tuple count processable within duration_ms; 0 when even the batch
// overhead does not fit.
std::int64_t estimate_tuples(const ProcCostModel& model, int nodes, Millis duration_ms);

// Cross-batch aggregation duration in ms. Linear interpolation between
// breakpoints, linear continuation beyond the last one, and 0 for a single
// batch.
Millis estimate_agg_duration_ms(const AggCostModel& model, int nodes, std::int64_t num_batches);

// Raw (unrounded) g(batches) * scale(nodes) in seconds; used by fitting and
// reporting paths that should not see ms rounding.
double agg_duration_seconds(const AggCostModel& model, int nodes, std::int64_t num_batches);

struct DurationSample {
    int nodes = 0;
    std::int64_t tuples = 0;
    double seconds = 0;
};

struct ProcFitResult {
    ProcCostModel model;
    double residual_rms = 0;
};

// Least squares over the basis {tuples, tuples/nodes, 1, 1/nodes} with
// negative coefficients clamped to zero and refit. Throws
// DegenerateSamplesError when the design matrix is rank-deficient or the
// samples do not span two node counts and two tuple counts.
ProcFitResult fit_proc_model(const std::vector<DurationSample>& samples);

// Fits d(n) = c0 + c1/n to the known durations and evaluates at target_nodes.
// Seconds in, seconds out; no ms rounding.
double extrapolate_duration(const std::vector<std::pair<int, double>>& known_durations,
                            int target_nodes);

// Eq.-style per-batch pricing: nodes * rate * duration. No billing minimum;
// that applies at timeline level.
double batch_cost(const ClusterConfig& config, Millis duration_ms);

// Prices a node timeline: every acquisition is billed for
// max(minimum_billed_seconds, held seconds) at the combined hourly rate.
// Node units are matched last-acquired-first-released, mirroring transient
// task nodes. Throws MalformedTimelineError.
double schedule_cost(const NodeTimeline& timeline, const PriceTable& prices);

}  // namespace elastiq
