#include "elastiq/executor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "elastiq/baselines.hpp"

namespace elastiq {

namespace {
constexpr Millis kNever = std::numeric_limits<Millis>::max();
}

const char* trace_event_name(TraceEventType type) {
    switch (type) {
        case TraceEventType::BatchStart: return "batch_start";
        case TraceEventType::BatchEnd: return "batch_end";
        case TraceEventType::PartialAgg: return "partial_agg";
        case TraceEventType::FinalAgg: return "final_agg";
        case TraceEventType::ResizeRequest: return "resize_request";
        case TraceEventType::NodesReady: return "nodes_ready";
        case TraceEventType::NodesReleased: return "nodes_released";
        case TraceEventType::ReSimulation: return "re_simulation";
        case TraceEventType::RateEstimate: return "rate_estimate";
        case TraceEventType::DeadlineMet: return "deadline_met";
        case TraceEventType::DeadlineMiss: return "deadline_miss";
        case TraceEventType::QueryAdded: return "query_added";
        case TraceEventType::QueryRemoved: return "query_removed";
    }
    return "unknown";
}

SimContext ScenarioConfig::sim_context() const {
    SimContext ctx;
    ctx.configs = configs;
    ctx.proc_models = proc_models;
    ctx.agg_models = agg_models;
    ctx.streams = streams;
    ctx.params = sim_params;
    return ctx;
}

const InputProfile& ScenarioConfig::actual_stream(const std::string& id) const {
    auto it = actual_streams.find(id);
    if (it != actual_streams.end()) return it->second;
    auto nom = streams.find(id);
    if (nom == streams.end()) throw ScenarioError("unknown stream " + id);
    return nom->second;
}

std::vector<ResizeEvent> plan_resize_requests(const NodeTimeline& timeline,
                                              const ClusterState& cluster, Millis now,
                                              int floor_nodes) {
    std::vector<ResizeEvent> events;
    const auto& pts = timeline.points;
    if (pts.empty()) return events;

    // The cluster's current size is the baseline; the plan's opening level
    // may itself require a resize.
    int prev = cluster.current_nodes;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Millis t = pts[i].time_ms;
        const int level = pts[i].nodes;
        if (level > prev) {
            ResizeEvent ev;
            ev.target_nodes = level;
            ev.issue_ms = std::max(now, t - cluster.provisioning_lead_ms);
            ev.effective_ms = ev.issue_ms + cluster.provisioning_lead_ms;
            events.push_back(ev);
        } else if (level < prev) {
            // Release only when the lower (or an even lower) level persists
            // for the idle threshold.
            Millis stable_until = kNever;
            for (std::size_t j = i + 1; j < pts.size(); ++j) {
                if (pts[j].nodes > level) {
                    stable_until = pts[j].time_ms;
                    break;
                }
            }
            if (stable_until == kNever || stable_until - t >= cluster.release_idle_threshold_ms) {
                ResizeEvent ev;
                ev.is_release = true;
                ev.target_nodes = std::max(level, floor_nodes);
                ev.issue_ms = std::max(now, t);
                ev.effective_ms = ev.issue_ms + cluster.release_delay_ms;
                if (ev.target_nodes < prev) events.push_back(ev);
            }
        }
        prev = level;
    }
    return events;
}

std::optional<std::string> select_next_batch(const std::vector<ReadyQuery>& ready) {
    const ReadyQuery* pick = nullptr;
    for (const auto& r : ready) {
        if (!pick || std::make_pair(r.slack_ms, r.query_id) <
                         std::make_pair(pick->slack_ms, pick->query_id))
            pick = &r;
    }
    if (!pick) return std::nullopt;
    return pick->query_id;
}

namespace {

struct ExecQuery {
    QuerySpec spec;
    QueryInput actual;           // readiness against the replayed arrivals
    std::int64_t total_actual = 0;
    std::int64_t consumed = 0;
    std::int64_t batches_completed = 0;
    std::int64_t folds_done = 0;
    std::int64_t batches_since_fold = 0;
    std::int64_t batch_size = 1;
    std::int64_t total_batches = 1;
    std::int64_t fold_every = 0;
    bool complete = false;
};

struct InFlight {
    std::string query_id;
    std::int64_t batch_no = 0;
    std::int64_t tuples = 0;
    Millis end_ms = 0;
    Millis pat_ms = 0;
    Millis fat_ms = 0;
    int nodes = 0;
    bool partial = false;
    bool final_batch = false;
};

struct PendingApply {
    Millis effective_ms = 0;
    int target = 0;
    bool is_release = false;
};

class Engine {
  public:
    Engine(const ScenarioConfig& scenario, const RunOptions& options)
        : scenario_(scenario),
          options_(options),
          ctx_(scenario.sim_context()),
          rng_(scenario.seed) {
        validate_config_set(ctx_.configs);
        floor_ = mandatory_floor_nodes(ctx_.configs);
        cluster_.provisioning_lead_ms = ctx_.params.provisioning_lead_ms;
        cluster_.release_delay_ms = ctx_.params.release_delay_ms;
        cluster_.release_idle_threshold_ms = ctx_.params.release_idle_threshold_ms;
        now_ = scenario.start_time_ms;
        next_rate_tick_ = now_ + scenario.rate_window_ms;
        arrivals_ = scenario.query_arrivals;
        std::stable_sort(arrivals_.begin(), arrivals_.end(),
                         [](const QueryArrivalEvent& a, const QueryArrivalEvent& b) {
                             return a.time_ms < b.time_ms;
                         });
    }

    ExecutionTrace run() {
        for (const auto& q : scenario_.queries) add_query(q, now_, false);
        setup_strategy();
        if (adapts() && !replan(now_, "initial")) {
            throw ScenarioInfeasibleError("no feasible schedule for the initial query set");
        }
        loop();
        return finish();
    }

  private:
    bool adapts() const { return options_.strategy == RunOptions::Strategy::Elastic; }
    bool planned_batching() const { return options_.strategy != RunOptions::Strategy::NaiveLlf; }

    void setup_strategy() {
        switch (options_.strategy) {
            case RunOptions::Strategy::Elastic:
                cluster_.current_nodes = floor_;
                break;
            case RunOptions::Strategy::Fixed: {
                auto plan = fixed_config_schedule(ctx_, scenario_.queries,
                                                  ctx_.config(options_.fixed_config_id), now_);
                if (!plan)
                    throw ScenarioInfeasibleError("fixed configuration cannot meet the deadlines");
                cluster_.current_nodes = ctx_.config(options_.fixed_config_id).worker_nodes;
                adopt_plan(*plan, now_);
                break;
            }
            case RunOptions::Strategy::NaiveLlf:
                cluster_.current_nodes = ctx_.config(options_.fixed_config_id).worker_nodes;
                refresh_batch_sizes();
                break;
            case RunOptions::Strategy::Autoscale: {
                auto plan = choose_schedule(ctx_, scenario_.queries, now_);
                if (!plan)
                    throw ScenarioInfeasibleError("no feasible schedule to derive batch sizes");
                factor_ = plan->batch_size_factor;
                trace_.planned_cost = plan->total_cost;
                cluster_.current_nodes = options_.autoscale->min_nodes;
                next_autoscale_tick_ = now_ + options_.autoscale->evaluation_period_ms;
                refresh_batch_sizes();
                break;
            }
        }
        record_nodes(now_);
    }

    // ---- plan management -------------------------------------------------

    bool replan(Millis t, const std::string& reason) {
        std::map<std::string, QueryProgress> progress;
        std::vector<QuerySpec> specs;
        for (const auto& [id, q] : queries_) {
            if (q.complete) continue;
            specs.push_back(q.spec);
            progress[id] = {q.consumed, q.batches_completed, q.folds_done,
                            q.batches_since_fold};
        }
        if (specs.empty()) return true;
        auto plan = choose_schedule_resume(ctx_, specs, progress, t);
        if (first_plan_) {
            first_plan_ = false;
            if (!plan) return false;
        }
        if (!plan) {
            log(t, TraceEventType::ReSimulation, "", 0, cluster_.current_nodes,
                reason + ":infeasible");
            return false;
        }
        if (reason != "initial") {
            trace_.resim_count += 1;
            log(t, TraceEventType::ReSimulation, "", 0, cluster_.current_nodes, reason);
        }
        adopt_plan(*plan, t);
        return true;
    }

    void adopt_plan(const Schedule& plan, Millis t) {
        plan_ = plan;
        if (trace_.planned_cost == 0) trace_.planned_cost = plan.total_cost;
        factor_ = plan.batch_size_factor;
        planned_nodes_.clear();
        for (const auto& e : plan.entries)
            planned_nodes_[{e.query_id, e.batch_no}] = e.req_nodes;
        // The cluster comes up at the plan's starting level before the run;
        // later plans go through ordinary resize requests.
        if (t == scenario_.start_time_ms) {
            const int initial = std::max(
                floor_, plan.node_timeline.points.empty()
                            ? floor_
                            : plan.node_timeline.points.front().nodes);
            cluster_.current_nodes = std::max(cluster_.current_nodes, initial);
            record_nodes(t);
        }
        resize_ideas_ = plan_resize_requests(plan.node_timeline, cluster_, t, floor_);
        next_resize_idea_ = 0;
        refresh_batch_sizes();
    }

    void refresh_batch_sizes() {
        for (auto& [id, q] : queries_) {
            if (q.complete) continue;
            const QuerySpec* nominal_spec = &q.spec;
            QuerySpec sized = *nominal_spec;
            sized.num_tuple_total = std::max<std::int64_t>(
                1, nominal_total(q.spec));
            if (planned_batching()) {
                const std::int64_t base =
                    base_batch_size(sized, ctx_.proc_model(q.spec), ctx_.configs.front(),
                                    ctx_.params.c_max_ms, q.actual.max_granule());
                q.batch_size = std::max<std::int64_t>(1, base * factor_);
            } else {
                q.batch_size = 1;  // eager: anything available dispatches
            }
            const std::int64_t remaining = std::max<std::int64_t>(0, q.total_actual - q.consumed);
            q.total_batches =
                q.batches_completed + (remaining + q.batch_size - 1) / q.batch_size;
            q.fold_every = ctx_.params.aggregation_mode == AggregationMode::Partial
                               ? fold_period(q.total_batches, ctx_.params.partial_agg_fraction)
                               : 0;
        }
    }

    std::int64_t nominal_total(const QuerySpec& spec) const {
        QueryInput nominal(spec, nominal_profiles(spec));
        return nominal.total();
    }

    std::vector<const InputProfile*> nominal_profiles(const QuerySpec& spec) const {
        std::vector<const InputProfile*> out;
        for (const auto& sid : spec.input_streams) {
            auto it = ctx_.streams.find(sid);
            if (it == ctx_.streams.end()) throw ScenarioError("unknown stream " + sid);
            out.push_back(&it->second);
        }
        return out;
    }

    // ---- query management ------------------------------------------------

    void add_query(const QuerySpec& spec, Millis t, bool log_event) {
        std::vector<const InputProfile*> actual;
        Millis latest_end = spec.wind_end_ms;
        for (const auto& sid : spec.input_streams) {
            actual.push_back(&scenario_.actual_stream(sid));
            latest_end = std::max(latest_end, actual.back()->end_ms);
        }
        ExecQuery q;
        q.spec = spec;
        // Window tuples that run late still belong to the query, so
        // availability extends to the actual stream end; the count is capped
        // at the larger of the nominal expectation and what really landed
        // inside the window.
        QuerySpec extended = spec;
        extended.wind_end_ms = latest_end;
        q.actual = QueryInput(extended, actual);
        const std::int64_t strict_in_window = QueryInput(spec, actual).total();
        const std::int64_t expected = nominal_total(spec);
        q.total_actual =
            std::min(q.actual.total(), std::max(expected, strict_in_window));
        queries_[spec.query_id] = std::move(q);
        if (log_event) log(t, TraceEventType::QueryAdded, spec.query_id, 0, 0, "");
        auto& stored = queries_[spec.query_id];
        if (stored.total_actual == 0) {
            stored.complete = true;
            const Millis done = std::max(t, spec.wind_end_ms);
            finish_query(stored, done);
        }
    }

    void finish_query(ExecQuery& q, Millis completion) {
        q.complete = true;
        const bool met = completion <= q.spec.deadline_ms;
        trace_.per_query[q.spec.query_id] = {completion, met};
        if (!met) trace_.misses += 1;
        log(completion, met ? TraceEventType::DeadlineMet : TraceEventType::DeadlineMiss,
            q.spec.query_id, q.batches_completed, cluster_.current_nodes, "");
    }

    // ---- cluster ----------------------------------------------------------

    void record_nodes(Millis t) {
        auto& pts = trace_.node_timeline.points;
        if (!pts.empty() && pts.back().nodes == cluster_.current_nodes) return;
        if (!pts.empty() && pts.back().time_ms == t)
            pts.back().nodes = cluster_.current_nodes;
        else
            pts.push_back({t, cluster_.current_nodes});
    }

    void apply_resize(const PendingApply& apply, Millis t) {
        if (apply.is_release) {
            if (in_flight_ && apply.target < in_flight_->nodes) {
                // No release while a job needs the nodes; retry at batch end.
                pending_applies_.push_back({in_flight_->end_ms, apply.target, true});
                return;
            }
            const int target =
                std::max({apply.target, floor_, in_flight_ ? in_flight_->nodes : 0});
            if (target < cluster_.current_nodes) {
                cluster_.current_nodes = target;
                log(t, TraceEventType::NodesReleased, "", 0, cluster_.current_nodes, "");
                record_nodes(t);
            }
        } else if (apply.target > cluster_.current_nodes) {
            cluster_.current_nodes = apply.target;
            log(t, TraceEventType::NodesReady, "", 0, cluster_.current_nodes, "");
            record_nodes(t);
        }
    }

    // ---- rate adaptation ---------------------------------------------------

    void rate_tick(Millis t) {
        bool resim_needed = false;
        std::string reason;
        for (auto& [sid, nominal] : ctx_.streams) {
            const InputProfile& actual = scenario_.actual_stream(sid);
            const double w = ms_to_seconds(scenario_.rate_window_ms);
            const double actual_rate =
                static_cast<double>(cumulative_tuples(actual, t) -
                                    cumulative_tuples(actual, t - scenario_.rate_window_ms)) /
                w;
            const double nominal_rate =
                static_cast<double>(cumulative_tuples(nominal, t) -
                                    cumulative_tuples(nominal, t - scenario_.rate_window_ms)) /
                w;
            log(t, TraceEventType::RateEstimate, "", 0, cluster_.current_nodes,
                sid + "=" + std::to_string(actual_rate));
            if (nominal_rate <= 0 && actual_rate <= 0) continue;

            const double ratio = nominal_rate <= 0
                                     ? std::numeric_limits<double>::infinity()
                                     : actual_rate / nominal_rate;
            const double dev = scenario_.rate_deviation_pct / 100.0;
            if (scenario_.rate_policy == RatePolicy::Pessimistic) {
                if (ratio > 1.0 + dev &&
                    ratio > plan_.max_supported_rate_multiplier) {
                    // Assume the higher rate continues for the rest of the
                    // window: replace the nominal tail with the estimate.
                    raise_nominal_tail(sid, t, actual_rate);
                    resim_needed = true;
                    reason = "rate_increase:" + sid;
                } else if (ratio < 1.0 - dev) {
                    slow_streams_.insert(sid);
                } else if (slow_streams_.count(sid)) {
                    // Arrivals recovered; pending tuples shift later.
                    slow_streams_.erase(sid);
                    defer_nominal_tail(sid, t);
                    resim_needed = true;
                    reason = "rate_recovery:" + sid;
                }
            }
            // The optimistic model keeps the plan: early tuples only make
            // batches ready sooner, and slow streams defer re-simulation.
        }
        if (resim_needed && adapts()) replan(t, reason);
    }

    void raise_nominal_tail(const std::string& sid, Millis t, double rate) {
        // The past is observed: keep the actual arrivals up to now and assume
        // the measured rate continues to the window end.
        InputProfile& p = ctx_.streams[sid];
        const InputProfile& actual = scenario_.actual_stream(sid);
        std::vector<std::pair<Millis, double>> kept;
        for (const auto& seg : actual.segments)
            if (seg.first < t) kept.push_back(seg);
        kept.emplace_back(t, rate);
        p.segments = std::move(kept);
        if (p.end_ms < t) p.end_ms = t;
    }

    void defer_nominal_tail(const std::string& sid, Millis t) {
        InputProfile& p = ctx_.streams[sid];
        const InputProfile& actual = scenario_.actual_stream(sid);
        const std::int64_t planned_total = total_tuples(p);
        const std::int64_t arrived = cumulative_tuples(actual, t);
        const std::int64_t remaining = planned_total - arrived;
        if (remaining <= 0) return;
        double tail_rate = 0;
        for (const auto& seg : p.segments)
            if (seg.first <= t) tail_rate = seg.second;
        if (tail_rate <= 0) tail_rate = 1.0;
        std::vector<std::pair<Millis, double>> kept;
        for (const auto& seg : actual.segments)
            if (seg.first < t) kept.push_back(seg);
        kept.emplace_back(t, tail_rate);
        p.segments = std::move(kept);
        p.end_ms =
            std::max(p.end_ms, t + ceil_ms(static_cast<double>(remaining) / tail_rate));
    }

    // ---- dispatch ----------------------------------------------------------

    std::int64_t take_for(const ExecQuery& q, Millis t) const {
        const std::int64_t arrived = q.actual.available_at(t);
        const std::int64_t unprocessed = arrived - q.consumed;
        if (unprocessed <= 0) return 0;
        if (!planned_batching()) return unprocessed;  // eager mode takes all
        const std::int64_t remaining = q.total_actual - q.consumed;
        const std::int64_t want = std::min(q.batch_size, remaining);
        return unprocessed >= want ? want : 0;
    }

    Millis readiness_time(const ExecQuery& q) const {
        const std::int64_t remaining = q.total_actual - q.consumed;
        if (remaining <= 0) return kNever;
        std::int64_t need;
        if (planned_batching())
            need = q.consumed + std::min(q.batch_size, remaining);
        else
            need = q.consumed + 1;
        return q.actual.availability_time(need);
    }

    Millis slack_for(const ExecQuery& q, Millis t) const {
        QuerySimState st;
        st.spec = q.spec;
        st.batch_size = q.batch_size;
        st.total_batches = q.total_batches;
        st.consumed = q.consumed;
        st.pending = std::max<std::int64_t>(q.total_actual - q.consumed, 0);
        st.batches_completed = q.batches_completed;
        st.fold_every = q.fold_every;
        st.folds_done = q.folds_done;
        st.batches_since_fold = q.batches_since_fold;
        const Millis work =
            remaining_work_ms(ctx_, st, cluster_.current_nodes, q.spec);
        return q.spec.deadline_ms - t - work;
    }

    void try_dispatch(Millis t) {
        if (in_flight_) return;
        std::vector<ReadyQuery> ready;
        for (const auto& [id, q] : queries_) {
            if (q.complete) continue;
            if (take_for(q, t) <= 0) continue;
            ready.push_back({id, slack_for(q, t)});
        }
        const auto pick = select_next_batch(ready);
        if (!pick) return;

        ExecQuery& q = queries_[*pick];
        const std::int64_t take = take_for(q, t);
        // A batch is submitted with the plan's parallelism; nodes awaiting
        // release sit idle rather than speeding the batch beyond its plan.
        int nodes = cluster_.current_nodes;
        const auto planned =
            planned_nodes_.find({q.spec.query_id, q.batches_completed + 1});
        if (planned != planned_nodes_.end()) nodes = std::min(nodes, planned->second);
        const Millis bct = estimate_duration_ms(ctx_.proc_model(q.spec), nodes, take);

        q.consumed += take;
        q.batches_completed += 1;
        q.batches_since_fold += 1;
        const std::int64_t remaining = q.total_actual - q.consumed;
        const bool final_batch = remaining <= 0;

        InFlight fl;
        fl.query_id = q.spec.query_id;
        fl.batch_no = q.batches_completed;
        fl.tuples = take;
        fl.nodes = nodes;
        fl.final_batch = final_batch;
        if (q.fold_every > 0 && q.total_batches > 1 &&
            (q.batches_completed % q.fold_every == 0 || final_batch)) {
            fl.pat_ms = estimate_agg_duration_ms(ctx_.agg_model(q.spec), nodes,
                                                 q.batches_since_fold);
            fl.partial = true;
            q.folds_done += 1;
            q.batches_since_fold = 0;
        }
        if (final_batch) {
            const std::int64_t combine =
                q.fold_every > 0 && q.total_batches > 1 ? q.folds_done : q.batches_completed;
            fl.fat_ms = estimate_agg_duration_ms(ctx_.agg_model(q.spec), nodes, combine);
        }

        Millis span = bct + fl.pat_ms + fl.fat_ms;
        if (scenario_.execution_noise_pct > 0) {
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            const double factor =
                std::pow(1.0 + scenario_.execution_noise_pct / 100.0, u(rng_));
            span = std::max<Millis>(1, ceil_ms(ms_to_seconds(span) * factor));
        }
        fl.end_ms = t + span;
        cluster_.busy_until = fl.end_ms;
        log(t, TraceEventType::BatchStart, fl.query_id, fl.batch_no, nodes,
            std::to_string(take) + " tuples");
        in_flight_ = fl;
    }

    void complete_batch(Millis t) {
        const InFlight fl = *in_flight_;
        in_flight_.reset();
        log(t, TraceEventType::BatchEnd, fl.query_id, fl.batch_no, fl.nodes,
            std::to_string(fl.tuples) + " tuples");
        if (fl.partial)
            log(t, TraceEventType::PartialAgg, fl.query_id, fl.batch_no, fl.nodes, "");
        auto it = queries_.find(fl.query_id);
        if (it == queries_.end()) return;  // removed mid-batch
        if (fl.final_batch) {
            log(t, TraceEventType::FinalAgg, fl.query_id, fl.batch_no, fl.nodes, "");
            finish_query(it->second, t);
        }
    }

    // ---- autoscale ----------------------------------------------------------

    void autoscale_tick(Millis t) {
        const AutoscaleRules& rules = *options_.autoscale;
        double backlog_seconds = 0;
        for (const auto& [id, q] : queries_) {
            if (q.complete) continue;
            const std::int64_t arrived = q.actual.available_at(t);
            const std::int64_t unprocessed = std::max<std::int64_t>(0, arrived - q.consumed);
            if (unprocessed > 0)
                backlog_seconds += ms_to_seconds(estimate_duration_ms(
                    ctx_.proc_model(q.spec), cluster_.current_nodes, unprocessed));
        }
        if (in_flight_) backlog_seconds += ms_to_seconds(in_flight_->end_ms - t);
        const double headroom =
            (1.0 - backlog_seconds / ms_to_seconds(rules.evaluation_period_ms)) * 100.0;

        if (headroom < rules.scale_out_below_pct &&
            cluster_.current_nodes + pending_up_count() < rules.max_nodes) {
            const int target = cluster_.current_nodes + pending_up_count() + 1;
            log(t, TraceEventType::ResizeRequest, "", 0, target, "autoscale_out");
            pending_applies_.push_back({t + cluster_.provisioning_lead_ms, target, false});
        } else if (headroom > rules.scale_in_above_pct &&
                   cluster_.current_nodes > rules.min_nodes) {
            const int target = cluster_.current_nodes - 1;
            log(t, TraceEventType::ResizeRequest, "", 0, target, "autoscale_in");
            pending_applies_.push_back({t + cluster_.release_delay_ms, target, true});
        }
    }

    int pending_up_count() const {
        int extra = 0;
        for (const auto& p : pending_applies_)
            if (!p.is_release) extra = std::max(extra, p.target - cluster_.current_nodes);
        return extra;
    }

    // ---- main loop -----------------------------------------------------------

    bool work_remains() const {
        if (in_flight_) return true;
        if (next_arrival_ < arrivals_.size()) return true;
        for (const auto& [id, q] : queries_)
            if (!q.complete) return true;
        return false;
    }

    Millis next_event_time() const {
        Millis t = kNever;
        if (in_flight_) t = std::min(t, in_flight_->end_ms);
        for (const auto& p : pending_applies_) t = std::min(t, p.effective_ms);
        if (next_resize_idea_ < resize_ideas_.size())
            t = std::min(t, resize_ideas_[next_resize_idea_].issue_ms);
        if (next_arrival_ < arrivals_.size())
            t = std::min(t, arrivals_[next_arrival_].time_ms);
        bool incomplete = false;
        for (const auto& [id, q] : queries_)
            if (!q.complete) incomplete = true;
        if (incomplete) {
            if (adapts()) t = std::min(t, next_rate_tick_);
            if (options_.strategy == RunOptions::Strategy::Autoscale)
                t = std::min(t, next_autoscale_tick_);
            if (!in_flight_) {
                for (const auto& [id, q] : queries_) {
                    if (q.complete) continue;
                    t = std::min(t, std::max(now_, readiness_time(q)));
                }
            }
        }
        return t;
    }

    void loop() {
        int guard = 0;
        while (work_remains()) {
            if (++guard > 5000000) throw std::logic_error("executor event loop stuck");
            const Millis t = next_event_time();
            if (t == kNever) break;
            now_ = std::max(now_, t);

            if (in_flight_ && in_flight_->end_ms <= now_) complete_batch(in_flight_->end_ms);

            // Planned requests whose issue time has come.
            while (next_resize_idea_ < resize_ideas_.size() &&
                   resize_ideas_[next_resize_idea_].issue_ms <= now_) {
                const ResizeEvent& ev = resize_ideas_[next_resize_idea_++];
                log(ev.issue_ms, TraceEventType::ResizeRequest, "", 0, ev.target_nodes,
                    ev.is_release ? "release" : "acquire");
                pending_applies_.push_back({ev.effective_ms, ev.target_nodes, ev.is_release});
            }

            // Resizes that landed.
            std::vector<PendingApply> due;
            for (auto it = pending_applies_.begin(); it != pending_applies_.end();) {
                if (it->effective_ms <= now_) {
                    due.push_back(*it);
                    it = pending_applies_.erase(it);
                } else {
                    ++it;
                }
            }
            std::stable_sort(due.begin(), due.end(),
                             [](const PendingApply& a, const PendingApply& b) {
                                 return a.effective_ms < b.effective_ms;
                             });
            for (const auto& apply : due) apply_resize(apply, now_);

            // Query-set changes.
            bool query_change = false;
            while (next_arrival_ < arrivals_.size() &&
                   arrivals_[next_arrival_].time_ms <= now_) {
                const auto& ev = arrivals_[next_arrival_++];
                if (ev.add) {
                    add_query(*ev.add, now_, true);
                    query_change = true;
                } else if (!ev.remove_id.empty()) {
                    auto it = queries_.find(ev.remove_id);
                    if (it != queries_.end()) {
                        log(now_, TraceEventType::QueryRemoved, ev.remove_id, 0, 0, "");
                        queries_.erase(it);
                        query_change = true;
                    }
                }
            }
            if (query_change && adapts()) replan(now_, "query_change");
            if (query_change) refresh_batch_sizes();

            while (adapts() && next_rate_tick_ <= now_) {
                rate_tick(next_rate_tick_);
                next_rate_tick_ += scenario_.rate_window_ms;
            }
            while (options_.strategy == RunOptions::Strategy::Autoscale &&
                   next_autoscale_tick_ <= now_) {
                autoscale_tick(next_autoscale_tick_);
                next_autoscale_tick_ += options_.autoscale->evaluation_period_ms;
            }

            try_dispatch(now_);
        }
    }

    ExecutionTrace finish() {
        Millis end = now_;
        for (const auto& ev : trace_.events) end = std::max(end, ev.time_ms);
        auto& pts = trace_.node_timeline.points;
        if (pts.empty()) pts.push_back({scenario_.start_time_ms, cluster_.current_nodes});
        if (pts.back().nodes != 0) pts.push_back({std::max(end, pts.back().time_ms), 0});
        trace_.total_cost = schedule_cost(trace_.node_timeline, scenario_.price_table);
        trace_.max_nodes = trace_.node_timeline.max_nodes();
        std::stable_sort(trace_.events.begin(), trace_.events.end(),
                         [](const TraceEvent& a, const TraceEvent& b) {
                             return a.time_ms < b.time_ms;
                         });
        return trace_;
    }

    void log(Millis t, TraceEventType type, const std::string& qid, std::int64_t batch_no,
             int nodes, const std::string& detail) {
        trace_.events.push_back({t, type, qid, batch_no, nodes, detail});
    }

    const ScenarioConfig& scenario_;
    RunOptions options_;
    SimContext ctx_;  // nominal view; rate adaptation rewrites stream tails
    std::mt19937_64 rng_;
    ClusterState cluster_;
    int floor_ = 2;
    Millis now_ = 0;
    Millis next_rate_tick_ = 0;
    Millis next_autoscale_tick_ = kNever;
    int factor_ = 1;
    bool first_plan_ = true;
    Schedule plan_;
    std::map<std::pair<std::string, std::int64_t>, int> planned_nodes_;
    std::vector<ResizeEvent> resize_ideas_;
    std::size_t next_resize_idea_ = 0;
    std::vector<PendingApply> pending_applies_;
    std::vector<QueryArrivalEvent> arrivals_;
    std::size_t next_arrival_ = 0;
    std::map<std::string, ExecQuery> queries_;
    std::optional<InFlight> in_flight_;
    std::set<std::string> slow_streams_;
    ExecutionTrace trace_;
};

}  // namespace

ExecutionTrace run_scenario(const ScenarioConfig& scenario, const RunOptions& options) {
    Engine engine(scenario, options);
    return engine.run();
}

}  // namespace elastiq
