#include "elastiq/simulator.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace elastiq {

const ClusterConfig& SimContext::config(int id) const {
    if (id < 0 || id >= static_cast<int>(configs.size()))
        throw ScenarioError("config id out of range");
    return configs[id];
}

const ProcCostModel& SimContext::proc_model(const QuerySpec& q) const {
    auto it = proc_models.find(q.model_id);
    if (it == proc_models.end()) it = proc_models.find("default");
    if (it == proc_models.end())
        throw ScenarioError("no processing model for query " + q.query_id);
    return it->second;
}

const AggCostModel& SimContext::agg_model(const QuerySpec& q) const {
    auto it = agg_models.find(q.model_id);
    if (it == agg_models.end()) it = agg_models.find("default");
    if (it == agg_models.end()) {
        static const AggCostModel zero{};
        return zero;
    }
    return it->second;
}

QueryInput SimContext::query_input(const QuerySpec& q) const {
    std::vector<const InputProfile*> profiles;
    for (const auto& sid : q.input_streams) {
        auto it = streams.find(sid);
        if (it == streams.end())
            throw ScenarioError("query " + q.query_id + " references unknown stream " + sid);
        profiles.push_back(&it->second);
    }
    return QueryInput(q, std::move(profiles));
}

std::int64_t fold_period(std::int64_t total_batches, double fraction) {
    if (fraction <= 0) return 0;
    return std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(total_batches))));
}

std::int64_t base_batch_size(const QuerySpec& query, const ProcCostModel& model,
                             const ClusterConfig& c1, Millis c_max_ms, std::int64_t granule) {
    const std::int64_t n_total = std::max<std::int64_t>(1, query.num_tuple_total);
    const int nodes = c1.worker_nodes;
    const std::int64_t min_batch = std::min(granule, n_total);
    if (estimate_duration_ms(model, nodes, min_batch) >= c_max_ms)
        throw InfeasibleBatchError("query " + query.query_id +
                                   ": a single granule already exceeds the batch duration cap");

    const Millis bound = 2 * estimate_duration_ms(model, nodes, n_total);
    std::int64_t chosen = n_total;
    for (std::int64_t x = 1; x <= n_total; ++x) {
        const std::int64_t batches = (n_total + x - 1) / x;
        if (batches * estimate_duration_ms(model, nodes, x) <= bound) {
            chosen = x;
            break;
        }
    }
    chosen = (chosen + granule - 1) / granule * granule;

    if (estimate_duration_ms(model, nodes, chosen) >= c_max_ms) {
        // Largest granule multiple that still fits under the cap.
        std::int64_t lo = 1, hi = chosen / granule;
        while (lo < hi) {
            const std::int64_t mid = lo + (hi - lo + 1) / 2;
            if (estimate_duration_ms(model, nodes, mid * granule) < c_max_ms)
                lo = mid;
            else
                hi = mid - 1;
        }
        chosen = lo * granule;
    }
    return chosen;
}

namespace {

// Cell-static per-query data plus the evolving simulation state.
struct RunQuery {
    QuerySimState state;
    QueryInput input;
    const ProcCostModel* proc = nullptr;
    const AggCostModel* agg = nullptr;
};

struct RunSetup {
    std::vector<RunQuery> queries;
    // Query states as of simu_start_time; prefix restoration rewinds here
    // before replaying fixed entries.
    std::vector<QuerySimState> base_states;
    Millis simu_start_time = 0;

    void snapshot_base() {
        base_states.clear();
        for (const auto& rq : queries) base_states.push_back(rq.state);
    }
};

Millis agg_ms(const AggCostModel& agg, int nodes, std::int64_t batches) {
    return estimate_agg_duration_ms(agg, nodes, batches);
}

// Remaining computation for Eq-5 slack: every pending batch priced at the
// current node count, plus the partial folds still due and the final
// aggregation.
Millis remaining_work_for(const RunQuery& rq, int nodes) {
    const auto& st = rq.state;
    if (st.pending <= 0) return 0;
    const std::int64_t size = st.batch_size;
    const std::int64_t full = st.pending / size;
    const std::int64_t rest = st.pending % size;
    Millis work = full * estimate_duration_ms(*rq.proc, nodes, size);
    if (rest > 0) work += estimate_duration_ms(*rq.proc, nodes, rest);

    if (st.fold_every > 0 && st.total_batches > 1) {
        std::int64_t folds = st.folds_done;
        std::int64_t since = st.batches_since_fold;
        std::int64_t b = st.batches_completed;
        // Walk the remaining fold boundaries; sizes of one cost nothing.
        while (b < st.total_batches) {
            const std::int64_t next_multiple = (b / st.fold_every + 1) * st.fold_every;
            const std::int64_t next_fold = std::min(next_multiple, st.total_batches);
            since += next_fold - b;
            b = next_fold;
            work += agg_ms(*rq.agg, nodes, since);
            ++folds;
            since = 0;
        }
        work += agg_ms(*rq.agg, nodes, folds);
    } else {
        work += agg_ms(*rq.agg, nodes, st.total_batches);
    }
    return work;
}

struct BatchOutcome {
    Millis bct = 0;
    Millis pat = 0;
    Millis fat = 0;
    std::int64_t tuples = 0;
    bool partial_included = false;
    bool final_included = false;
};

// Applies one batch to the query state (Eq-6/Eq-7 time bookkeeping is the
// caller's job; this owns the tuple/fold counters).
BatchOutcome dispatch_batch(RunQuery& rq, int nodes) {
    auto& st = rq.state;
    BatchOutcome out;
    out.tuples = std::min(st.batch_size, st.pending);
    out.bct = estimate_duration_ms(*rq.proc, nodes, out.tuples);
    st.consumed += out.tuples;
    st.pending -= out.tuples;
    st.batches_completed += 1;
    st.batches_since_fold += 1;
    if (st.fold_every > 0 && st.total_batches > 1 &&
        (st.batches_completed % st.fold_every == 0 ||
         st.batches_completed == st.total_batches)) {
        out.pat = agg_ms(*rq.agg, nodes, st.batches_since_fold);
        out.partial_included = true;
        st.folds_done += 1;
        st.batches_since_fold = 0;
    }
    if (st.pending == 0) {
        out.fat = st.fold_every > 0 && st.total_batches > 1
                      ? agg_ms(*rq.agg, nodes, st.folds_done)
                      : agg_ms(*rq.agg, nodes, st.total_batches);
        out.final_included = true;
    }
    return out;
}

const std::map<std::string, QueryProgress> kNoProgress;

RunSetup make_setup(const SimContext& ctx, const std::vector<QuerySpec>& queries,
                    int batch_size_factor, Millis simu_start_time,
                    const std::map<std::string, QueryProgress>& progress = kNoProgress) {
    if (batch_size_factor < 1) throw ScenarioError("batch size factor must be >= 1");
    RunSetup setup;
    setup.simu_start_time = simu_start_time;
    for (const auto& q : queries) {
        QueryInput input = ctx.query_input(q);
        const std::int64_t total = input.total();
        if (total <= 0) continue;  // nothing to schedule
        RunQuery rq{QuerySimState{}, std::move(input)};
        rq.proc = &ctx.proc_model(q);
        rq.agg = &ctx.agg_model(q);
        rq.state.spec = q;
        rq.state.spec.num_tuple_total = total;
        const std::int64_t base =
            base_batch_size(rq.state.spec, *rq.proc, ctx.configs.front(), ctx.params.c_max_ms,
                            rq.input.max_granule());
        rq.state.batch_size = std::min<std::int64_t>(
            base * batch_size_factor, std::max<std::int64_t>(total, 1));
        rq.state.total_batches = (total + rq.state.batch_size - 1) / rq.state.batch_size;
        rq.state.pending = total;
        if (auto it = progress.find(q.query_id); it != progress.end()) {
            rq.state.consumed = std::min(it->second.consumed, total);
            rq.state.pending = total - rq.state.consumed;
            rq.state.batches_completed = it->second.batches_completed;
            rq.state.folds_done = it->second.folds_done;
            rq.state.batches_since_fold = it->second.batches_since_fold;
            rq.state.total_batches =
                rq.state.batches_completed +
                (rq.state.pending + rq.state.batch_size - 1) / rq.state.batch_size;
            if (rq.state.pending <= 0) continue;  // already complete
        }
        if (ctx.params.aggregation_mode == AggregationMode::Partial)
            rq.state.fold_every =
                fold_period(rq.state.total_batches, ctx.params.partial_agg_fraction);
        setup.queries.push_back(std::move(rq));
    }
    setup.snapshot_base();
    return setup;
}

// Rewinds every query to its base state, then replays the fixed prefix.
void restore_from_prefix(RunSetup& setup, const std::vector<BatchScheduleEntry>& entries,
                         std::size_t prefix_len) {
    for (std::size_t i = 0; i < setup.queries.size(); ++i)
        setup.queries[i].state = setup.base_states[i];
    for (std::size_t i = 0; i < prefix_len; ++i) {
        const auto& e = entries[i];
        for (auto& rq : setup.queries) {
            if (rq.state.spec.query_id != e.query_id) continue;
            rq.state.consumed += e.tuples;
            rq.state.pending -= e.tuples;
            rq.state.batches_completed += 1;
            rq.state.batches_since_fold += 1;
            if (e.partial_agg_included) {
                rq.state.folds_done += 1;
                rq.state.batches_since_fold = 0;
            }
            break;
        }
    }
}

int assignment_at(const std::vector<int>& assignments, std::size_t index) {
    if (assignments.empty()) throw ScenarioError("empty node assignment list");
    return index < assignments.size() ? assignments[index] : assignments.back();
}

BatchSimResult run_batches(const SimContext& ctx, RunSetup& setup,
                           const std::vector<int>& assignments, std::size_t start_index,
                           std::vector<BatchScheduleEntry>& entries) {
    const bool edf = ctx.params.dispatch_policy == DispatchPolicy::EarliestDeadline;
    std::size_t cursor = start_index;
    Millis simu_time = cursor == 0 ? setup.simu_start_time : entries[cursor - 1].bet_ms;

    std::vector<RunQuery*> active;
    for (auto& rq : setup.queries)
        if (rq.state.pending > 0) active.push_back(&rq);

    while (!active.empty()) {
        const int config_id = assignment_at(assignments, cursor);
        const ClusterConfig& config = ctx.config(config_id);

        for (RunQuery* rq : active) {
            auto& st = rq->state;
            st.next_brt = next_brt(st, rq->input);
            st.ready_at_simu_time = simu_time >= st.next_brt;
            st.bst = std::max(simu_time, st.next_brt);
            st.slack = st.spec.deadline_ms - st.bst - remaining_work_for(*rq, config.worker_nodes);
        }

        // LLF among ready queries; otherwise the earliest upcoming batch.
        RunQuery* pick = nullptr;
        bool any_ready = false;
        for (RunQuery* rq : active) any_ready = any_ready || rq->state.ready_at_simu_time;
        for (RunQuery* rq : active) {
            if (any_ready && !rq->state.ready_at_simu_time) continue;
            if (!pick) {
                pick = rq;
                continue;
            }
            const auto& a = rq->state;
            const auto& b = pick->state;
            bool better;
            if (any_ready) {
                const auto ka = edf ? std::make_pair(a.spec.deadline_ms, a.spec.query_id)
                                    : std::make_pair(a.slack, a.spec.query_id);
                const auto kb = edf ? std::make_pair(b.spec.deadline_ms, b.spec.query_id)
                                    : std::make_pair(b.slack, b.spec.query_id);
                better = ka < kb;
            } else {
                const auto ka = std::make_tuple(a.next_brt, edf ? a.spec.deadline_ms : a.slack,
                                                a.spec.query_id);
                const auto kb = std::make_tuple(b.next_brt, edf ? b.spec.deadline_ms : b.slack,
                                                b.spec.query_id);
                better = ka < kb;
            }
            if (better) pick = rq;
        }

        if (pick->state.slack < 0) {
            entries.resize(cursor);
            return {false, cursor};
        }

        const Millis bst = pick->state.bst;
        const BatchOutcome out = dispatch_batch(*pick, config.worker_nodes);
        BatchScheduleEntry entry;
        entry.query_id = pick->state.spec.query_id;
        entry.batch_no = pick->state.batches_completed;
        entry.bst_ms = bst;
        entry.time_ms = bst;
        entry.bet_ms = bst + out.bct + out.pat + out.fat;
        entry.req_nodes = config.worker_nodes;
        entry.config_id = config_id;
        entry.tuples = out.tuples;
        entry.pending_after = pick->state.pending;
        entry.partial_agg_included = out.partial_included;
        entry.final_agg_included = out.final_included;

        if (cursor < entries.size())
            entries[cursor] = entry;
        else
            entries.push_back(entry);
        simu_time = entry.bet_ms;
        ++cursor;

        if (pick->state.pending == 0)
            active.erase(std::find(active.begin(), active.end(), pick));
    }
    entries.resize(cursor);
    return {true, cursor};
}

NodeTimeline build_timeline(const SimContext& ctx, const std::vector<BatchScheduleEntry>& entries,
                            const std::vector<QuerySpec>& queries, Millis start_time,
                            bool release_out_of_window) {
    NodeTimeline tl;
    if (entries.empty()) return tl;
    const int floor_nodes = mandatory_floor_nodes(ctx.configs);
    const Millis lead = ctx.params.provisioning_lead_ms;

    // Merged query windows, sorted; idle time outside them is releasable.
    std::vector<std::pair<Millis, Millis>> windows;
    for (const auto& q : queries) windows.emplace_back(q.wind_start_ms, q.wind_end_ms);
    std::sort(windows.begin(), windows.end());
    std::vector<std::pair<Millis, Millis>> merged;
    for (const auto& w : windows) {
        if (!merged.empty() && w.first <= merged.back().second)
            merged.back().second = std::max(merged.back().second, w.second);
        else
            merged.push_back(w);
    }

    const auto inside_until = [&](Millis t) -> std::optional<Millis> {
        for (const auto& [ws, we] : merged)
            if (ws <= t && t < we) return we;
        return std::nullopt;
    };
    const auto next_window_start_after = [&](Millis t) -> Millis {
        for (const auto& [ws, we] : merged)
            if (ws > t) return ws;
        return std::numeric_limits<Millis>::max();
    };
    const auto push = [&tl](Millis t, int nodes) {
        if (!tl.points.empty() && tl.points.back().nodes == nodes) return;
        if (!tl.points.empty() && tl.points.back().time_ms == t) {
            tl.points.back().nodes = nodes;
            if (tl.points.size() >= 2 && tl.points[tl.points.size() - 2].nodes == nodes)
                tl.points.pop_back();
            return;
        }
        tl.points.push_back({t, nodes});
    };

    const auto emit_idle = [&](Millis a, Millis b, int next_req) {
        if (a >= b) return;
        const int held = tl.points.empty() ? next_req : tl.points.back().nodes;
        if (!release_out_of_window) {
            push(a, std::max(held, next_req));
            return;
        }
        Millis t = a;
        while (t < b) {
            if (const auto we = inside_until(t)) {
                // Inside a window: keep the cluster warm for the next batch.
                push(t, std::max(held, next_req));
                t = std::min(b, *we);
            } else {
                // Outside every window: drop the task nodes, reacquire one
                // lead before they are needed again.
                const Millis needed_by = std::min(b, next_window_start_after(t));
                const Millis back_at = std::max(t, needed_by - lead);
                push(t, floor_nodes);
                push(back_at, next_req);
                t = needed_by;
            }
        }
    };

    emit_idle(start_time, entries.front().bst_ms, entries.front().req_nodes);
    push(entries.front().bst_ms, entries.front().req_nodes);
    for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i].bst_ms > entries[i - 1].bet_ms)
            emit_idle(entries[i - 1].bet_ms, entries[i].bst_ms, entries[i].req_nodes);
        push(entries[i].bst_ms, entries[i].req_nodes);
    }
    push(entries.back().bet_ms, 0);
    return tl;
}

double entries_cost(const SimContext& ctx, const std::vector<BatchScheduleEntry>& entries) {
    double total = 0;
    for (const auto& e : entries)
        total += batch_cost(ctx.config(e.config_id), e.bet_ms - e.bst_ms);
    return total;
}

int entries_max_nodes(const std::vector<BatchScheduleEntry>& entries) {
    int m = 0;
    for (const auto& e : entries) m = std::max(m, e.req_nodes);
    return m;
}

Schedule finish_schedule(const SimContext& ctx, std::vector<BatchScheduleEntry> entries,
                         const std::vector<QuerySpec>& queries, Millis start_time,
                         int init_config_id, int factor, bool release_out_of_window) {
    Schedule s;
    s.entries = std::move(entries);
    s.node_timeline = build_timeline(ctx, s.entries, queries, start_time, release_out_of_window);
    s.total_cost = entries_cost(ctx, s.entries);
    s.max_nodes = entries_max_nodes(s.entries);
    s.init_config_id = init_config_id;
    s.batch_size_factor = factor;
    return s;
}

std::optional<Schedule> gen_schedule_impl(const SimContext& ctx, RunSetup& setup,
                                          int init_config_id, int batch_size_factor,
                                          const std::vector<QuerySpec>& queries,
                                          Millis simu_start_time, GenStats* stats) {
    const int max_cap = ctx.params.max_nodes_cap > 0 ? ctx.params.max_nodes_cap
                                                     : ctx.configs.back().worker_nodes;
    if (ctx.config(init_config_id).worker_nodes > max_cap) return std::nullopt;

    std::vector<int> assignments = {init_config_id};
    std::vector<BatchScheduleEntry> entries;
    int level = init_config_id;
    std::size_t resume = 0;
    std::ptrdiff_t walk = 0;
    const int k_step = std::max(1, ctx.params.step_k);

    std::int64_t total_batches = 0;
    for (const auto& rq : setup.queries) total_batches += rq.state.total_batches;
    const std::int64_t iteration_cap =
        (static_cast<std::int64_t>(ctx.configs.size()) + 2) * (total_batches + 2);

    for (std::int64_t iter = 0; iter <= iteration_cap; ++iter) {
        if (stats) stats->passes += 1;
        restore_from_prefix(setup, entries, resume);
        const BatchSimResult res =
            run_batches(ctx, setup, assignments, resume, entries);
        if (res.pos_slack)
            return finish_schedule(ctx, entries, queries, simu_start_time, init_config_id,
                                   batch_size_factor, false);

        const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(entries.size());
        walk = std::min(walk, len);
        walk = (len - walk > k_step) ? walk - k_step : walk - 1;
        const bool gap_crossed = walk >= 0 && walk + 1 < len &&
                                 entries[walk + 1].bst_ms > entries[walk].bet_ms;
        if (walk < 0 || gap_crossed) {
            walk = len > 0 ? len - 1 : 0;
            level += 1;
            if (level >= static_cast<int>(ctx.configs.size()) ||
                ctx.config(level).worker_nodes > max_cap)
                return std::nullopt;
            if (ctx.params.reset_to_init_enabled && level > init_config_id + 1) {
                for (std::ptrdiff_t j = 0; j < walk && j < static_cast<std::ptrdiff_t>(assignments.size()); ++j)
                    assignments[j] = init_config_id;
            }
        }
        while (assignments.size() < static_cast<std::size_t>(walk) + 1)
            assignments.push_back(assignments.back());
        assignments[walk] = level;

        resume = entries.size();
        for (std::size_t j = 0; j < entries.size(); ++j) {
            if (entries[j].config_id != assignment_at(assignments, j)) {
                resume = j;
                break;
            }
        }
    }
    throw std::logic_error("schedule search did not terminate within its iteration bound");
}

}  // namespace

BatchSimResult gen_batch_schedule(const SimContext& ctx, const std::vector<QuerySpec>& queries,
                                  int batch_size_factor, Millis simu_start_time,
                                  const std::vector<int>& assignments, std::size_t start_index,
                                  std::vector<BatchScheduleEntry>& entries) {
    RunSetup setup = make_setup(ctx, queries, batch_size_factor, simu_start_time);
    if (start_index > entries.size())
        throw ScenarioError("start index beyond the known schedule prefix");
    restore_from_prefix(setup, entries, start_index);
    return run_batches(ctx, setup, assignments, start_index, entries);
}

std::optional<Schedule> gen_schedule(const SimContext& ctx, int init_config_id,
                                     int batch_size_factor,
                                     const std::vector<QuerySpec>& queries,
                                     Millis simu_start_time, GenStats* stats) {
    const auto t0 = std::chrono::steady_clock::now();
    RunSetup setup = make_setup(ctx, queries, batch_size_factor, simu_start_time);
    auto result = gen_schedule_impl(ctx, setup, init_config_id, batch_size_factor, queries,
                                    simu_start_time, stats);
    if (stats)
        stats->wall_ms +=
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
    return result;
}

Schedule optimize_schedule(const SimContext& ctx, const Schedule& schedule,
                           const std::vector<QuerySpec>& queries, Millis simu_start_time,
                           const std::map<std::string, QueryProgress>& progress) {
    Schedule best = schedule;
    const int init_nodes = ctx.config(schedule.init_config_id).worker_nodes;

    std::size_t i = 1;
    while (i < best.entries.size()) {
        const bool gap = best.entries[i].bst_ms > best.entries[i - 1].bet_ms;
        if (gap) {
            // Only worth replanning when the segment after the gap escalated.
            bool escalated = false;
            for (std::size_t j = i; j < best.entries.size(); ++j) {
                if (best.entries[j].req_nodes > init_nodes) escalated = true;
                if (j + 1 < best.entries.size() &&
                    best.entries[j + 1].bst_ms > best.entries[j].bet_ms)
                    break;
            }
            if (escalated) {
                RunSetup sub = make_setup(ctx, queries, schedule.batch_size_factor,
                                          simu_start_time, progress);
                restore_from_prefix(sub, best.entries, i);
                sub.snapshot_base();
                sub.simu_start_time = best.entries[i - 1].bet_ms;
                GenStats ignore;
                auto replanned =
                    gen_schedule_impl(ctx, sub, schedule.init_config_id,
                                      schedule.batch_size_factor, queries,
                                      sub.simu_start_time, &ignore);
                if (replanned) {
                    std::vector<BatchScheduleEntry> merged(best.entries.begin(),
                                                           best.entries.begin() + i);
                    merged.insert(merged.end(), replanned->entries.begin(),
                                  replanned->entries.end());
                    const double merged_cost = entries_cost(ctx, merged);
                    if (merged_cost <= best.total_cost) {
                        best.entries = std::move(merged);
                        best.total_cost = merged_cost;
                        best.max_nodes = entries_max_nodes(best.entries);
                    }
                }
            }
        }
        ++i;
    }

    best.node_timeline = build_timeline(ctx, best.entries, queries, simu_start_time, true);
    best.total_cost = entries_cost(ctx, best.entries);
    best.max_nodes = entries_max_nodes(best.entries);
    return best;
}

namespace {

std::optional<Schedule> gen_schedule_with_progress(
    const SimContext& ctx, int init_config_id, int batch_size_factor,
    const std::vector<QuerySpec>& queries, const std::map<std::string, QueryProgress>& progress,
    Millis simu_start_time, GenStats* stats) {
    RunSetup setup = make_setup(ctx, queries, batch_size_factor, simu_start_time, progress);
    return gen_schedule_impl(ctx, setup, init_config_id, batch_size_factor, queries,
                             simu_start_time, stats);
}

double max_supported_rate_with_progress(const SimContext& ctx,
                                        const std::vector<QuerySpec>& queries,
                                        const std::map<std::string, QueryProgress>& progress,
                                        const Schedule& chosen, Millis simu_start_time,
                                        double step_pct) {
    if (step_pct <= 0) throw ScenarioError("rate step must be positive");
    const double ceiling = ctx.params.msr_ceiling;
    double supported = 1.0;
    for (int k = 1;; ++k) {
        const double m = std::pow(1.0 + step_pct / 100.0, k);
        if (m > ceiling) return ceiling;
        const SimContext scaled = scale_rates(ctx, m);
        auto res = gen_schedule_with_progress(scaled, chosen.init_config_id,
                                              chosen.batch_size_factor, queries, progress,
                                              simu_start_time, nullptr);
        if (!res || res->max_nodes > chosen.max_nodes) return supported;
        supported = m;
    }
}

std::optional<Schedule> choose_impl(const SimContext& ctx, const std::vector<QuerySpec>& queries,
                                    const std::map<std::string, QueryProgress>& progress,
                                    Millis simu_start_time, ChooseStats* stats) {
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<Schedule> best;
    try {
        for (const auto& config : ctx.configs) {
            for (const int factor : ctx.params.bsf_set) {
                GenStats gen_stats;
                auto cand = gen_schedule_with_progress(ctx, config.id, factor, queries, progress,
                                                       simu_start_time, &gen_stats);
                if (stats) {
                    stats->cells += 1;
                    stats->passes += gen_stats.passes;
                }
                if (!cand) continue;
                *cand = optimize_schedule(ctx, *cand, queries, simu_start_time, progress);
                if (stats) stats->feasible_cells += 1;
                const auto key = [](const Schedule& s) {
                    return std::make_tuple(s.total_cost, s.max_nodes, s.batch_size_factor,
                                           s.init_config_id);
                };
                if (!best || key(*cand) < key(*best)) best = std::move(cand);
            }
        }
    } catch (const InfeasibleBatchError&) {
        best.reset();
    }
    if (best)
        best->max_supported_rate_multiplier = max_supported_rate_with_progress(
            ctx, queries, progress, *best, simu_start_time, ctx.params.msr_step_pct);
    if (stats)
        stats->wall_ms +=
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
    return best;
}

}  // namespace

std::optional<Schedule> choose_schedule(const SimContext& ctx,
                                        const std::vector<QuerySpec>& queries,
                                        Millis simu_start_time, ChooseStats* stats) {
    return choose_impl(ctx, queries, kNoProgress, simu_start_time, stats);
}

std::optional<Schedule> choose_schedule_resume(
    const SimContext& ctx, const std::vector<QuerySpec>& queries,
    const std::map<std::string, QueryProgress>& progress, Millis simu_start_time,
    ChooseStats* stats) {
    return choose_impl(ctx, queries, progress, simu_start_time, stats);
}

std::optional<SingleQueryPlan> single_query_cost_est(const SimContext& ctx,
                                                     const QuerySpec& query,
                                                     const ClusterConfig& config) {
    constexpr std::int64_t kMaxBatches = 10000;
    const ProcCostModel& proc = ctx.proc_model(query);
    const AggCostModel& agg = ctx.agg_model(query);
    const QueryInput input = ctx.query_input(query);
    const std::int64_t total = input.total();
    if (total == 0) return SingleQueryPlan{};

    for (std::int64_t num_batch = 1; num_batch < kMaxBatches; ++num_batch) {
        Millis mod_deadline = query.deadline_ms;
        if (num_batch != 1)
            mod_deadline -= estimate_agg_duration_ms(agg, config.worker_nodes, num_batch);

        SingleQueryPlan plan;
        std::int64_t pending = total;
        Millis time_pt = mod_deadline;
        bool stuck = false;
        while (pending > 0) {
            const Millis ip_avail = input.availability_time(pending);
            const Millis budget = time_pt - ip_avail;
            std::int64_t proc_tuples =
                budget <= 0 ? 0 : estimate_tuples(proc, config.worker_nodes, budget);
            if (proc_tuples <= 0) {
                stuck = true;
                break;
            }
            Millis dur;
            if (proc_tuples >= pending) {
                proc_tuples = pending;
                dur = estimate_duration_ms(proc, config.worker_nodes, pending);
            } else {
                dur = budget;
            }
            plan.batches.emplace_back(time_pt - dur, proc_tuples);
            plan.cost += batch_cost(config, dur);
            pending -= proc_tuples;
            time_pt -= dur;
            if (static_cast<std::int64_t>(plan.batches.size()) > kMaxBatches) {
                stuck = true;
                break;
            }
        }
        if (stuck) continue;
        if (static_cast<std::int64_t>(plan.batches.size()) <= num_batch) {
            std::reverse(plan.batches.begin(), plan.batches.end());
            return plan;
        }
    }
    return std::nullopt;
}

SimContext scale_rates(const SimContext& ctx, double multiplier) {
    SimContext scaled = ctx;
    for (auto& [id, profile] : scaled.streams)
        for (auto& seg : profile.segments) seg.second *= multiplier;
    return scaled;
}

double max_supported_rate(const SimContext& ctx, const std::vector<QuerySpec>& queries,
                          const Schedule& chosen, Millis simu_start_time, double step_pct) {
    if (step_pct <= 0) throw ScenarioError("rate step must be positive");
    const double ceiling = ctx.params.msr_ceiling;
    double supported = 1.0;
    for (int k = 1;; ++k) {
        const double m = std::pow(1.0 + step_pct / 100.0, k);
        if (m > ceiling) return ceiling;
        const SimContext scaled = scale_rates(ctx, m);
        auto res = gen_schedule(scaled, chosen.init_config_id, chosen.batch_size_factor, queries,
                                simu_start_time);
        if (!res || res->max_nodes > chosen.max_nodes) return supported;
        supported = m;
    }
}

Millis remaining_work_ms(const SimContext& ctx, const QuerySimState& state, int nodes,
                         const QuerySpec& spec) {
    RunQuery rq;
    rq.state = state;
    rq.proc = &ctx.proc_model(spec);
    rq.agg = &ctx.agg_model(spec);
    return remaining_work_for(rq, nodes);
}

}  // namespace elastiq
