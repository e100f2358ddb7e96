#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "elastiq/errors.hpp"
#include "elastiq/time_util.hpp"

namespace elastiq {

// Piecewise-constant arrival-rate function for one stream. Tuples are
// delivered in whole granules (files); the default granule is one tuple.
struct InputProfile {
    std::string stream_id;
    // (segment start ms, rate in tuples/second); starts strictly increasing.
    std::vector<std::pair<Millis, double>> segments;
    Millis end_ms = 0;           // rate is 0 from here on
    std::int64_t granule = 1;    // tuples per delivery unit

    Millis start_ms() const { return segments.empty() ? end_ms : segments.front().first; }
};

void validate_profile(const InputProfile& profile);

// Total tuples arrived at or before t, floored to whole granules.
std::int64_t cumulative_tuples(const InputProfile& profile, Millis t);

// Total tuples the profile ever delivers.
std::int64_t total_tuples(const InputProfile& profile);

// Earliest t with cumulative_tuples(profile, t) >= count; inverse of
// cumulative_tuples. Throws NotEnoughTuplesError when count exceeds the
// profile total.
Millis input_time(const InputProfile& profile, std::int64_t count);

// Table-1 query attributes.
struct QuerySpec {
    std::string query_id;
    Millis wind_start_ms = 0;
    Millis wind_end_ms = 0;
    Millis deadline_ms = 0;
    std::vector<std::string> input_streams;  // batch-aligned when > 1
    double input_rate = 0;                   // nominal tuples/second
    std::int64_t num_tuple_total = 0;        // tuples delivered in the window
    std::string model_id = "default";
};

// Read-only view tying a query to its streams. The query's tuple axis is the
// total across streams inside its window; a batch covering tuples up to k is
// ready when every stream has delivered its proportional share of k, so
// readiness is the max of the per-stream input times.
class QueryInput {
  public:
    QueryInput() = default;
    QueryInput(const QuerySpec& spec, std::vector<const InputProfile*> profiles);

    std::int64_t total() const { return total_; }
    std::int64_t max_granule() const { return max_granule_; }

    // Earliest time the first `count` query tuples are all available.
    Millis availability_time(std::int64_t count) const;

    // Query tuples available at or before t.
    std::int64_t available_at(Millis t) const;

  private:
    std::vector<const InputProfile*> profiles_;
    std::vector<std::int64_t> base_;         // per-stream arrivals before the window
    std::vector<std::int64_t> in_window_;    // per-stream arrivals inside the window
    std::int64_t total_ = 0;
    std::int64_t max_granule_ = 1;
    Millis wind_start_ms_ = 0;
    Millis wind_end_ms_ = 0;
};

// Per-query state evolved by schedule simulation and execution.
struct QuerySimState {
    QuerySpec spec;
    std::int64_t batch_size = 0;        // factor x base size, granule-rounded
    std::int64_t total_batches = 0;     // projected batch count for the run
    std::int64_t consumed = 0;          // tuples already scheduled/processed
    std::int64_t pending = 0;
    std::int64_t batches_completed = 0;
    std::int64_t fold_every = 0;        // partial-agg period in batches; 0 = off
    std::int64_t folds_done = 0;
    std::int64_t batches_since_fold = 0;

    // Scratch recomputed every simulation step.
    Millis next_brt = 0;
    Millis bst = 0;
    Millis bct = 0;
    Millis pat = 0;
    Millis fat = 0;
    Millis slack = 0;
    bool ready_at_simu_time = false;
};

// Readiness time of the state's next batch (the final batch waits for every
// remaining tuple).
Millis next_brt(const QuerySimState& state, const QueryInput& input);

// Observed arrival rate: tuples received in (now - window, now] divided by
// the window. Returns 0 with no arrivals.
double estimate_rate(const std::vector<std::pair<Millis, std::int64_t>>& arrival_log, Millis now,
                     Millis window_ms);

}  // namespace elastiq
