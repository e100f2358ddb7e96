#pragma once

#include <string>
#include <vector>

#include "elastiq/baselines.hpp"
#include "elastiq/executor.hpp"

namespace elastiq {

// Strict scenario parsing: unknown keys are rejected, referenced ids must
// resolve, and declared tuple totals must match the profiles.
ScenarioConfig load_scenario(const std::string& json_text);
ScenarioConfig load_scenario_file(const std::string& path);
std::string scenario_to_json(const ScenarioConfig& scenario);

// Cost-model document round trip:
//   {"proc": {"a_serial": ..}, "agg": {"breakpoints": [[b, s], ..], ..}}
struct ModelDocument {
    ProcCostModel proc;
    AggCostModel agg;
};
ModelDocument load_model_document(const std::string& json_text);
std::string model_document_to_json(const ModelDocument& doc, double residual_rms = 0);

// Measurement CSV with header nodes,tuples,seconds.
std::vector<DurationSample> load_samples_csv(const std::string& csv_text);

// Plan / trace serialization used by the CLI and the bindings.
std::string plan_to_json(const Schedule& schedule, std::uint64_t seed);
std::string schedule_to_csv(const Schedule& schedule, std::uint64_t seed);
std::string trace_to_csv(const ExecutionTrace& trace, std::uint64_t seed);
std::string trace_summary_to_json(const ExecutionTrace& trace, std::uint64_t seed);
std::string timeline_to_csv(const NodeTimeline& timeline, std::uint64_t seed);

// Money rendered as dollars with four decimals.
std::string format_money(double dollars);

// Atomic file write (temp + rename).
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace elastiq
