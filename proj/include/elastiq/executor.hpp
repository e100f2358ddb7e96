#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "elastiq/simulator.hpp"

namespace elastiq {

// Simulated elastic cluster with realistic provisioning/release delays.
struct ClusterState {
    int current_nodes = 2;
    int requested_nodes = 2;
    Millis busy_until = 0;
    Millis provisioning_lead_ms = 360 * 1000;
    Millis release_delay_ms = 90 * 1000;
    Millis release_idle_threshold_ms = 720 * 1000;
};

struct ResizeEvent {
    Millis issue_ms = 0;
    int target_nodes = 0;
    Millis effective_ms = 0;  // nodes ready / released at this time
    bool is_release = false;
};

// Turns a planned node timeline into resize requests: additions are issued
// one provisioning lead ahead (clamped to now), releases only when the lower
// level persists for the idle threshold, taking effect after the release
// delay and never dropping below the mandatory floor.
std::vector<ResizeEvent> plan_resize_requests(const NodeTimeline& timeline,
                                              const ClusterState& cluster, Millis now,
                                              int floor_nodes);

enum class TraceEventType {
    BatchStart,
    BatchEnd,
    PartialAgg,
    FinalAgg,
    ResizeRequest,
    NodesReady,
    NodesReleased,
    ReSimulation,
    RateEstimate,
    DeadlineMet,
    DeadlineMiss,
    QueryAdded,
    QueryRemoved,
};

const char* trace_event_name(TraceEventType type);

struct TraceEvent {
    Millis time_ms = 0;
    TraceEventType type = TraceEventType::BatchStart;
    std::string query_id;
    std::int64_t batch_no = 0;
    int nodes = 0;
    std::string detail;
};

struct QueryOutcome {
    Millis completion_ms = 0;
    bool met = false;
};

struct ExecutionTrace {
    std::vector<TraceEvent> events;
    NodeTimeline node_timeline;
    double total_cost = 0;  // schedule_cost of the replayed timeline
    double planned_cost = 0;  // simulated cost of the initial plan, when any
    int max_nodes = 0;
    std::int64_t resim_count = 0;
    std::int64_t misses = 0;
    std::map<std::string, QueryOutcome> per_query;
};

enum class RatePolicy { Optimistic, Pessimistic };

struct QueryArrivalEvent {
    Millis time_ms = 0;
    std::optional<QuerySpec> add;  // either a new query ...
    std::string remove_id;         // ... or the id of one to drop
};

struct ScenarioConfig {
    std::map<std::string, InputProfile> streams;         // fed to simulation
    std::map<std::string, InputProfile> actual_streams;  // replayed arrivals
    std::vector<QuerySpec> queries;
    std::vector<ClusterConfig> configs;
    PriceTable price_table;
    std::map<std::string, ProcCostModel> proc_models;
    std::map<std::string, AggCostModel> agg_models;
    SimParams sim_params;
    RatePolicy rate_policy = RatePolicy::Pessimistic;
    Millis rate_window_ms = 180 * 1000;
    double rate_deviation_pct = 2.0;
    std::vector<QueryArrivalEvent> query_arrivals;
    double execution_noise_pct = 0;
    std::uint64_t seed = 0;
    Millis start_time_ms = 0;

    SimContext sim_context() const;
    const InputProfile& actual_stream(const std::string& id) const;
};

// Least-laxity pick among queries whose next batch is ready; ties go to the
// lexicographically smaller query id. Empty optional when nothing is ready.
struct ReadyQuery {
    std::string query_id;
    Millis slack_ms = 0;
};
std::optional<std::string> select_next_batch(const std::vector<ReadyQuery>& ready);

// How the executor schedules batches and nodes.
struct AutoscaleRules;  // baselines.hpp
struct RunOptions {
    enum class Strategy { Elastic, Fixed, NaiveLlf, Autoscale } strategy = Strategy::Elastic;
    int fixed_config_id = 0;              // Fixed / NaiveLlf / Autoscale
    const AutoscaleRules* autoscale = nullptr;
};

// Discrete-event replay of a scenario: dispatches batches by least laxity
// against the actual arrivals, manages node resizes with provisioning and
// release delays, re-simulates on rate deviations and query-set changes, and
// prices the replayed timeline. Deadline misses are recorded, not thrown.
// Throws ScenarioInfeasibleError when the initial simulation fails.
ExecutionTrace run_scenario(const ScenarioConfig& scenario,
                            const RunOptions& options = RunOptions{});

}  // namespace elastiq
