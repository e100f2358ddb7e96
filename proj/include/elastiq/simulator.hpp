#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "elastiq/cost_model.hpp"
#include "elastiq/workload.hpp"

namespace elastiq {

// One simulated batch execution. bet - bst covers the batch computation
// time, plus the partial-aggregation time when partial_agg_included is set,
// plus the final aggregation time on the query's last batch.
struct BatchScheduleEntry {
    Millis time_ms = 0;  // dispatch timestamp (equals bst)
    std::string query_id;
    std::int64_t batch_no = 0;  // 1-based per query
    Millis bst_ms = 0;
    Millis bet_ms = 0;
    int req_nodes = 0;
    int config_id = 0;
    std::int64_t tuples = 0;
    std::int64_t pending_after = 0;
    bool partial_agg_included = false;
    bool final_agg_included = false;
};

struct Schedule {
    std::vector<BatchScheduleEntry> entries;
    NodeTimeline node_timeline;
    double total_cost = 0;  // sum of per-batch costs at each batch's config
    int max_nodes = 0;
    int batch_size_factor = 1;
    int init_config_id = 0;
    double max_supported_rate_multiplier = 1.0;
};

enum class AggregationMode { FinalOnly, Partial };
enum class DispatchPolicy { LeastLaxity, EarliestDeadline };

struct SimParams {
    Millis c_max_ms = 3600 * 1000;          // per-batch duration cap
    std::vector<int> bsf_set = {1, 2, 4, 8, 16, 32};
    int step_k = 1;                          // backtrack decrement (Eq-8 style)
    int max_nodes_cap = 0;                   // 0 = largest config
    double partial_agg_fraction = 0.25;      // used when aggregation is Partial
    AggregationMode aggregation_mode = AggregationMode::FinalOnly;
    DispatchPolicy dispatch_policy = DispatchPolicy::LeastLaxity;
    bool reset_to_init_enabled = true;       // escalation reset rule A/B switch
    double msr_step_pct = 10.0;              // rate-multiplier lattice step
    double msr_ceiling = 16.0;
    Millis provisioning_lead_ms = 360 * 1000;
    Millis release_delay_ms = 90 * 1000;
    Millis release_idle_threshold_ms = 720 * 1000;
};

// Everything schedule generation needs besides the queries themselves.
struct SimContext {
    std::vector<ClusterConfig> configs;
    std::map<std::string, ProcCostModel> proc_models;  // by model id
    std::map<std::string, AggCostModel> agg_models;
    std::map<std::string, InputProfile> streams;
    SimParams params;

    const ClusterConfig& config(int id) const;
    const ProcCostModel& proc_model(const QuerySpec& q) const;
    const AggCostModel& agg_model(const QuerySpec& q) const;
    QueryInput query_input(const QuerySpec& q) const;
};

// Smallest batch size whose per-batch overhead keeps the total duration
// within twice the single-batch duration at the smallest configuration,
// capped so one batch stays under c_max. Granule-rounded. Throws
// InfeasibleBatchError when even a single granule exceeds c_max.
std::int64_t base_batch_size(const QuerySpec& query, const ProcCostModel& model,
                             const ClusterConfig& c1, Millis c_max_ms,
                             std::int64_t granule = 1);

struct BatchSimResult {
    bool pos_slack = false;          // every dispatched batch kept slack >= 0
    std::size_t fail_index = 0;      // entry index that went negative
};

// Forward-simulates batches from sim start, appending entries at and after
// start_index (earlier entries are fixed). Per-index node assignments come
// from `assignments`; indices beyond it reuse the last assignment. On the
// first negative slack the schedule is truncated at the failure point and
// false is returned.
BatchSimResult gen_batch_schedule(const SimContext& ctx,
                                  const std::vector<QuerySpec>& queries,
                                  int batch_size_factor, Millis simu_start_time,
                                  const std::vector<int>& assignments,
                                  std::size_t start_index,
                                  std::vector<BatchScheduleEntry>& entries);

struct GenStats {
    std::int64_t passes = 0;
    double wall_ms = 0;
};

// Escalating schedule search: walks the backtrack cursor toward the start on
// failures, bumps to the next configuration when the cursor underflows or
// crosses an idle gap, and resets earlier assignments to the initial
// configuration once escalation passes init+1. Returns nothing when the
// largest configuration (or max_nodes_cap) is insufficient.
std::optional<Schedule> gen_schedule(const SimContext& ctx, int init_config_id,
                                     int batch_size_factor,
                                     const std::vector<QuerySpec>& queries,
                                     Millis simu_start_time, GenStats* stats = nullptr);

// Mid-run progress of a query, for re-simulation after rate deviations or
// query-set changes.
struct QueryProgress {
    std::int64_t consumed = 0;
    std::int64_t batches_completed = 0;
    std::int64_t folds_done = 0;
    std::int64_t batches_since_fold = 0;
};

// Re-plans escalated segments from the idle gap that precedes them with the
// initial configuration, keeping the result only when it is feasible and no
// more expensive; then inserts task-node release/acquire into the timeline
// for idle periods outside every query window.
Schedule optimize_schedule(const SimContext& ctx, const Schedule& schedule,
                           const std::vector<QuerySpec>& queries, Millis simu_start_time,
                           const std::map<std::string, QueryProgress>& progress = {});

struct ChooseStats {
    std::int64_t cells = 0;
    std::int64_t feasible_cells = 0;
    std::int64_t passes = 0;
    double wall_ms = 0;
};

// Grid search over (initial configuration) x (batch size factor); minimum
// cost wins, ties broken by smaller max nodes, then smaller factor, then
// smaller initial configuration id. Also pins the chosen schedule's maximum
// supported rate multiplier.
std::optional<Schedule> choose_schedule(const SimContext& ctx,
                                        const std::vector<QuerySpec>& queries,
                                        Millis simu_start_time, ChooseStats* stats = nullptr);

std::optional<Schedule> choose_schedule_resume(
    const SimContext& ctx, const std::vector<QuerySpec>& queries,
    const std::map<std::string, QueryProgress>& progress, Millis simu_start_time,
    ChooseStats* stats = nullptr);

struct SingleQueryPlan {
    double cost = 0;
    // (start time, tuples) in execution order.
    std::vector<std::pair<Millis, std::int64_t>> batches;
};

// Backward single-query construction: sizes the last batch against the
// window end / deadline gap, schedules earlier batches against tuple
// availability, and retries with an aggregation allowance whenever the batch
// count exceeds the running assumption.
std::optional<SingleQueryPlan> single_query_cost_est(const SimContext& ctx,
                                                     const QuerySpec& query,
                                                     const ClusterConfig& config);

// Largest rate multiplier on the lattice {1, 1+s, (1+s)^2, ...} (capped at
// the configured ceiling) for which regenerating the schedule at the pinned
// (init config, factor) stays feasible without exceeding the chosen
// schedule's node peak.
double max_supported_rate(const SimContext& ctx, const std::vector<QuerySpec>& queries,
                          const Schedule& chosen, Millis simu_start_time, double step_pct);

// Helpers shared with the executor.
std::int64_t fold_period(std::int64_t total_batches, double fraction);
Millis remaining_work_ms(const SimContext& ctx, const QuerySimState& state, int nodes,
                         const QuerySpec& spec);

// Scales every stream's rates by `multiplier` (query totals are re-derived
// from the scaled profiles by QueryInput).
SimContext scale_rates(const SimContext& ctx, double multiplier);

}  // namespace elastiq
