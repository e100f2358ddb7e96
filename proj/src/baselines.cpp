#include "elastiq/baselines.hpp"

namespace elastiq {

void validate_rules(const AutoscaleRules& rules) {
    if (!(0 < rules.scale_out_below_pct && rules.scale_out_below_pct < rules.scale_in_above_pct &&
          rules.scale_in_above_pct < 100))
        throw ScenarioError("autoscale thresholds must satisfy 0 < out < in < 100");
    if (rules.min_nodes < 1 || rules.max_nodes < rules.min_nodes)
        throw ScenarioError("autoscale node bounds are inconsistent");
    if (rules.evaluation_period_ms <= 0)
        throw ScenarioError("autoscale evaluation period must be positive");
}

std::optional<Schedule> fixed_config_schedule(const SimContext& ctx,
                                              const std::vector<QuerySpec>& queries,
                                              const ClusterConfig& config,
                                              Millis simu_start_time) {
    std::optional<Schedule> best;
    for (const int factor : ctx.params.bsf_set) {
        std::vector<BatchScheduleEntry> entries;
        const std::vector<int> pinned = {config.id};
        BatchSimResult res;
        try {
            res = gen_batch_schedule(ctx, queries, factor, simu_start_time, pinned, 0, entries);
        } catch (const InfeasibleBatchError&) {
            return std::nullopt;
        }
        if (!res.pos_slack) continue;
        Schedule s;
        s.entries = std::move(entries);
        s.init_config_id = config.id;
        s.batch_size_factor = factor;
        s.max_nodes = config.worker_nodes;
        for (const auto& e : s.entries)
            s.total_cost += batch_cost(ctx.config(e.config_id), e.bet_ms - e.bst_ms);
        s = optimize_schedule(ctx, s, queries, simu_start_time);
        if (!best || s.total_cost < best->total_cost) best = std::move(s);
    }
    return best;
}

ExecutionTrace naive_llf_run(const ScenarioConfig& scenario, const ClusterConfig& config) {
    RunOptions options;
    options.strategy = RunOptions::Strategy::NaiveLlf;
    options.fixed_config_id = config.id;
    return run_scenario(scenario, options);
}

ExecutionTrace autoscale_run(const ScenarioConfig& scenario, const AutoscaleRules& rules) {
    validate_rules(rules);
    RunOptions options;
    options.strategy = RunOptions::Strategy::Autoscale;
    options.autoscale = &rules;
    return run_scenario(scenario, options);
}

}  // namespace elastiq
