#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>

#include "elastiq/executor.hpp"
#include "support/test_support.hpp"

using namespace elastiq;
using namespace testsupport;

namespace {

// Backlogged single query: batches run back to back, so the replayed
// timeline is busy almost wall to wall.
ScenarioConfig dense_scenario() {
    ScenarioConfig sc;
    sc.configs = {{0, 2, 0.001}};
    ProcCostModel proc;
    proc.a_parallel = 0.4;  // 0.2 s/tuple on 2 nodes: slower than arrivals
    proc.valid_min_nodes = 2;
    proc.valid_max_nodes = 2;
    sc.proc_models["default"] = proc;
    sc.agg_models["default"] = AggCostModel{};
    sc.price_table = {1.8, 1.8, 60.0};
    InputProfile s{"s", {{0, 10.0}}, 100 * 1000, 1};
    sc.streams["s"] = s;
    QuerySpec q;
    q.query_id = "q";
    q.wind_start_ms = 0;
    q.wind_end_ms = 100 * 1000;
    q.deadline_ms = 210 * 1000;
    q.input_streams = {"s"};
    sc.queries = {q};
    sc.sim_params.bsf_set = {10};
    sc.sim_params.provisioning_lead_ms = 0;
    sc.sim_params.release_delay_ms = 0;
    return sc;
}

std::map<std::pair<std::string, std::int64_t>, std::pair<Millis, Millis>> batch_times(
    const ExecutionTrace& trace) {
    std::map<std::pair<std::string, std::int64_t>, std::pair<Millis, Millis>> out;
    for (const auto& ev : trace.events) {
        const auto key = std::make_pair(ev.query_id, ev.batch_no);
        if (ev.type == TraceEventType::BatchStart) out[key].first = ev.time_ms;
        if (ev.type == TraceEventType::BatchEnd) out[key].second = ev.time_ms;
    }
    return out;
}

}  // namespace

TEST_CASE("plan_resize_requests") {
    ClusterState cluster;
    cluster.provisioning_lead_ms = 360 * 1000;
    cluster.release_delay_ms = 90 * 1000;
    cluster.release_idle_threshold_ms = 720 * 1000;

    SUBCASE("additions are requested one lead ahead") {
        NodeTimeline tl{{{0, 2}, {1000 * 1000, 4}, {5000 * 1000, 0}}};
        const auto evs = plan_resize_requests(tl, cluster, 0, 2);
        REQUIRE(evs.size() >= 1);
        CHECK(evs[0].issue_ms == 640 * 1000);
        CHECK(evs[0].effective_ms == 1000 * 1000);
        CHECK(evs[0].target_nodes == 4);
        CHECK_FALSE(evs[0].is_release);
    }
    SUBCASE("requests clamp to now") {
        NodeTimeline tl{{{0, 2}, {100 * 1000, 4}, {5000 * 1000, 0}}};
        const auto evs = plan_resize_requests(tl, cluster, 0, 2);
        REQUIRE(!evs.empty());
        CHECK(evs[0].issue_ms == 0);
        CHECK(evs[0].effective_ms == 360 * 1000);
    }
    SUBCASE("short dips are not released") {
        NodeTimeline tl{
            {{0, 10}, {2000 * 1000, 2}, {2600 * 1000, 10}, {9000 * 1000, 0}}};
        cluster.current_nodes = 10;
        const auto evs = plan_resize_requests(tl, cluster, 0, 2);
        for (const auto& ev : evs) {
            if (ev.is_release && ev.issue_ms < 2600 * 1000)
                FAIL_CHECK("600 s dip was released");
        }
    }
    SUBCASE("long dips release after the delay") {
        NodeTimeline tl{
            {{0, 10}, {2000 * 1000, 2}, {5000 * 1000, 10}, {9000 * 1000, 0}}};
        cluster.current_nodes = 10;
        const auto evs = plan_resize_requests(tl, cluster, 0, 2);
        REQUIRE(!evs.empty());
        const auto& first_release =
            *std::find_if(evs.begin(), evs.end(),
                          [](const ResizeEvent& ev) { return ev.is_release; });
        CHECK(first_release.target_nodes == 2);
        CHECK(first_release.issue_ms == 2000 * 1000);
        CHECK(first_release.effective_ms == 2090 * 1000);
    }
    SUBCASE("releases never go below the floor") {
        NodeTimeline tl{{{0, 10}, {1000 * 1000, 1}, {9000 * 1000, 10}, {20000 * 1000, 0}}};
        const auto evs = plan_resize_requests(tl, cluster, 0, 2);
        for (const auto& ev : evs)
            if (ev.is_release && ev.effective_ms < 20000 * 1000) CHECK(ev.target_nodes >= 2);
    }
}

TEST_CASE("select_next_batch picks least laxity, ties by id") {
    CHECK(select_next_batch({{"q1", 5000}, {"q2", 3000}}) == "q2");
    CHECK_FALSE(select_next_batch({}).has_value());
    CHECK(select_next_batch({{"q2", 3000}, {"q1", 3000}}) == "q1");
}

TEST_CASE("executor replays the toy plan exactly") {
    const ScenarioConfig sc = toy_scenario(16000);
    const auto plan = choose_schedule(sc.sim_context(), sc.queries, 0);
    REQUIRE(plan.has_value());

    const ExecutionTrace trace = run_scenario(sc);
    CHECK(trace.misses == 0);
    CHECK(trace.resim_count == 0);
    const auto times = batch_times(trace);
    REQUIRE(times.size() == plan->entries.size());
    for (const auto& e : plan->entries) {
        const auto it = times.find({e.query_id, e.batch_no});
        REQUIRE(it != times.end());
        CHECK(std::abs(it->second.first - e.bst_ms) <= 1);
        CHECK(std::abs(it->second.second - e.bet_ms) <= 1);
    }
    CHECK(trace.per_query.at("toy").met);
}

TEST_CASE("dense replay prices within one percent of the plan") {
    const ScenarioConfig sc = dense_scenario();
    const auto plan = choose_schedule(sc.sim_context(), sc.queries, 0);
    REQUIRE(plan.has_value());
    const ExecutionTrace trace = run_scenario(sc);
    CHECK(trace.misses == 0);
    const auto times = batch_times(trace);
    for (const auto& e : plan->entries) {
        const auto it = times.find({e.query_id, e.batch_no});
        REQUIRE(it != times.end());
        CHECK(std::abs(it->second.first - e.bst_ms) <= 1);
        CHECK(std::abs(it->second.second - e.bet_ms) <= 1);
    }
    CHECK(trace.total_cost == doctest::Approx(plan->total_cost).epsilon(0.01));
}

TEST_CASE("non-preemption and node floors hold in the replayed trace") {
    const ScenarioConfig sc = dense_scenario();
    const ExecutionTrace trace = run_scenario(sc);
    Millis busy_until = -1;
    int depth = 0;
    for (const auto& ev : trace.events) {
        if (ev.type == TraceEventType::BatchStart) {
            CHECK(ev.time_ms >= busy_until);
            depth += 1;
            CHECK(depth == 1);
        }
        if (ev.type == TraceEventType::BatchEnd) {
            busy_until = ev.time_ms;
            depth -= 1;
        }
    }
    const auto& pts = trace.node_timeline.points;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) CHECK(pts[i].nodes >= 2);
}

TEST_CASE("empty query set leaves only node bookkeeping at the idle floor") {
    ScenarioConfig sc = toy_scenario(16000);
    sc.queries.clear();
    const ExecutionTrace trace = run_scenario(sc);
    CHECK(trace.misses == 0);
    for (const auto& ev : trace.events) {
        CHECK(ev.type != TraceEventType::BatchStart);
        CHECK(ev.type != TraceEventType::BatchEnd);
    }
    // Mandatory floor (1 node in the toy config set) billed at the minimum.
    const double floor_cost = schedule_cost(
        NodeTimeline{{{0, 1}, {0, 0}}}, sc.price_table);
    CHECK(trace.total_cost == doctest::Approx(floor_cost));
}

TEST_CASE("pessimistic policy re-simulates on a mid-window rate spike") {
    ScenarioConfig sc;
    sc.configs = {{0, 2, 0.001}, {1, 4, 0.001}, {2, 10, 0.001}};
    ProcCostModel proc;
    proc.a_parallel = 0.006;  // 0.003 s/tuple on 2 nodes
    proc.b_fixed = 1.0;
    proc.valid_min_nodes = 2;
    proc.valid_max_nodes = 10;
    sc.proc_models["default"] = proc;
    sc.agg_models["default"] = AggCostModel{};
    sc.price_table = {1.8, 1.8, 60.0};

    InputProfile nominal{"s", {{0, 100.0}}, 3600 * 1000, 1};
    InputProfile actual{"s", {{0, 100.0}, {1800 * 1000, 400.0}}, 3600 * 1000, 1};
    sc.streams["s"] = nominal;
    sc.actual_streams["s"] = actual;

    QuerySpec q;
    q.query_id = "q";
    q.wind_start_ms = 0;
    q.wind_end_ms = 3600 * 1000;
    q.deadline_ms = 3700 * 1000;
    q.input_streams = {"s"};
    sc.queries = {q};

    sc.sim_params.bsf_set = {1, 2, 4, 8};
    sc.sim_params.provisioning_lead_ms = 60 * 1000;
    sc.sim_params.release_delay_ms = 30 * 1000;
    sc.sim_params.release_idle_threshold_ms = 120 * 1000;
    sc.rate_policy = RatePolicy::Pessimistic;

    // Matched-rate control run.
    ScenarioConfig control = sc;
    control.actual_streams.clear();
    const ExecutionTrace base = run_scenario(control);
    CHECK(base.misses == 0);
    CHECK(base.resim_count == 0);

    const ExecutionTrace spiked = run_scenario(sc);
    CHECK(spiked.misses == 0);
    CHECK(spiked.resim_count >= 1);
    CHECK(spiked.max_nodes > base.max_nodes);

    // The first re-simulation lands within one rate window of the ramp.
    Millis first_resim = -1;
    for (const auto& ev : spiked.events) {
        if (ev.type == TraceEventType::ReSimulation) {
            first_resim = ev.time_ms;
            break;
        }
    }
    REQUIRE(first_resim >= 0);
    CHECK(first_resim >= 1800 * 1000);
    CHECK(first_resim <= 1800 * 1000 + sc.rate_window_ms);
}

TEST_CASE("optimistic policy rides out an early-arriving stream") {
    ScenarioConfig sc = dense_scenario();
    // Same tuple total, delivered 25% faster and finishing early.
    InputProfile actual{"s", {{0, 12.5}}, 80 * 1000, 1};
    sc.actual_streams["s"] = actual;
    sc.rate_policy = RatePolicy::Optimistic;
    const ExecutionTrace trace = run_scenario(sc);
    CHECK(trace.resim_count == 0);
    CHECK(trace.misses == 0);
}

TEST_CASE("re-simulation count stays zero when rates match") {
    const ScenarioConfig sc = dense_scenario();
    const ExecutionTrace trace = run_scenario(sc);
    CHECK(trace.resim_count == 0);
}

TEST_CASE("query arrivals trigger a replan and still meet deadlines") {
    ScenarioConfig sc;
    sc.configs = {{0, 2, 0.001}, {1, 4, 0.001}};
    ProcCostModel proc;
    proc.a_parallel = 0.004;
    proc.b_fixed = 1.0;
    sc.proc_models["default"] = proc;
    sc.agg_models["default"] = AggCostModel{};
    sc.price_table = {1.8, 1.8, 60.0};
    sc.streams["s1"] = InputProfile{"s1", {{0, 100.0}}, 600 * 1000, 1};
    sc.streams["s2"] = InputProfile{"s2", {{400 * 1000, 100.0}}, 900 * 1000, 1};

    QuerySpec q1;
    q1.query_id = "q1";
    q1.wind_start_ms = 0;
    q1.wind_end_ms = 600 * 1000;
    q1.deadline_ms = 700 * 1000;
    q1.input_streams = {"s1"};
    sc.queries = {q1};

    QuerySpec q2 = q1;
    q2.query_id = "q2";
    q2.wind_start_ms = 400 * 1000;
    q2.wind_end_ms = 900 * 1000;
    q2.deadline_ms = 1000 * 1000;
    q2.input_streams = {"s2"};
    sc.query_arrivals.push_back({300 * 1000, q2, ""});
    sc.sim_params.provisioning_lead_ms = 30 * 1000;
    sc.sim_params.release_delay_ms = 10 * 1000;

    const ExecutionTrace trace = run_scenario(sc);
    CHECK(trace.misses == 0);
    CHECK(trace.resim_count >= 1);
    bool added = false;
    for (const auto& ev : trace.events)
        if (ev.type == TraceEventType::QueryAdded && ev.query_id == "q2") added = true;
    CHECK(added);
    CHECK(trace.per_query.count("q2") == 1);
}

TEST_CASE("seeded noise is deterministic and seed-sensitive") {
    ScenarioConfig sc = dense_scenario();
    sc.execution_noise_pct = 10.0;
    sc.queries[0].deadline_ms = 400 * 1000;  // forgiving under noise
    sc.seed = 11;
    const ExecutionTrace a = run_scenario(sc);
    const ExecutionTrace b = run_scenario(sc);
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i)
        CHECK(a.events[i].time_ms == b.events[i].time_ms);

    sc.seed = 12;
    const ExecutionTrace c = run_scenario(sc);
    bool any_diff = a.events.size() != c.events.size();
    for (std::size_t i = 0; !any_diff && i < a.events.size(); ++i)
        any_diff = a.events[i].time_ms != c.events[i].time_ms;
    CHECK(any_diff);
}

TEST_CASE("batches never start before their tuples exist in the actual stream") {
    ScenarioConfig sc = dense_scenario();
    // Slower actual stream: everything lands 25% later.
    sc.actual_streams["s"] = InputProfile{"s", {{0, 8.0}}, 125 * 1000, 1};
    sc.queries[0].deadline_ms = 400 * 1000;
    const ExecutionTrace trace = run_scenario(sc);
    const auto& actual = sc.actual_streams.at("s");
    std::int64_t seen = 0;
    for (const auto& ev : trace.events) {
        if (ev.type != TraceEventType::BatchStart) continue;
        const auto tuples = std::stoll(ev.detail);
        seen += tuples;
        CHECK(cumulative_tuples(actual, ev.time_ms) >= seen);
    }
    CHECK(seen == total_tuples(actual));
}
