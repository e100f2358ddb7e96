#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include "elastiq/scenario_io.hpp"

using namespace elastiq;

namespace {
std::string scenario_path(const char* name) {
    return std::string(ELASTIQ_SCENARIOS) + "/" + name;
}
}  // namespace

TEST_CASE("every bundled scenario file loads") {
    for (const char* name :
         {"toy.json", "toy_tight.json", "multi_tight.json", "partial_agg_a.json",
          "partial_agg_b.json", "vr_spike.json", "dense.json", "release_idle.json",
          "kstep_a.json", "kstep_b.json"}) {
        CAPTURE(name);
        CHECK_NOTHROW(load_scenario_file(scenario_path(name)));
    }
}

TEST_CASE("scenario JSON round trip preserves the configuration") {
    const ScenarioConfig sc = load_scenario_file(scenario_path("vr_spike.json"));
    const ScenarioConfig again = load_scenario(scenario_to_json(sc));
    CHECK(again.queries.size() == sc.queries.size());
    CHECK(again.configs.size() == sc.configs.size());
    CHECK(again.streams.size() == sc.streams.size());
    CHECK(again.actual_streams.size() == sc.actual_streams.size());
    CHECK(again.rate_window_ms == sc.rate_window_ms);
    CHECK(again.rate_deviation_pct == sc.rate_deviation_pct);
    CHECK(again.sim_params.bsf_set == sc.sim_params.bsf_set);
    CHECK((again.rate_policy == sc.rate_policy));
    CHECK(scenario_to_json(again) == scenario_to_json(sc));
}

TEST_CASE("strict parsing rejects malformed scenarios") {
    SUBCASE("unknown keys") {
        CHECK_THROWS_AS(load_scenario(R"({"version":1,"streams":[],"queries":[],
            "configs":[{"id":0,"worker_nodes":2,"price_per_node_second":1}],
            "models":{}, "surprise": true})"),
                        ScenarioError);
    }
    SUBCASE("unknown stream reference") {
        CHECK_THROWS_AS(load_scenario(R"({"version":1,
            "streams":[{"id":"a","segments":[[0,1.0]],"end":1000}],
            "queries":[{"query_id":"q","wind_start":0,"wind_end":500,"deadline":600,
                        "input_stream":"missing"}],
            "configs":[{"id":0,"worker_nodes":2,"price_per_node_second":1}],
            "models":{"default":{"proc":{"a_serial":1.0}}}})"),
                        ScenarioError);
    }
    SUBCASE("declared totals must match the profile") {
        CHECK_THROWS_AS(load_scenario(R"({"version":1,
            "streams":[{"id":"a","segments":[[0,1.0]],"end":10000}],
            "queries":[{"query_id":"q","wind_start":0,"wind_end":10000,"deadline":20000,
                        "input_stream":"a","num_tuple_total":55}],
            "configs":[{"id":0,"worker_nodes":2,"price_per_node_second":1}],
            "models":{"default":{"proc":{"a_serial":1.0}}}})"),
                        ScenarioError);
    }
    SUBCASE("unsupported version") {
        CHECK_THROWS_AS(load_scenario(R"({"version":7,"streams":[],"queries":[],
            "configs":[{"id":0,"worker_nodes":2,"price_per_node_second":1}],"models":{}})"),
                        ScenarioError);
    }
    SUBCASE("not even JSON") { CHECK_THROWS_AS(load_scenario("nope"), ScenarioError); }
}

TEST_CASE("model documents round trip") {
    ModelDocument doc;
    doc.proc = {0.001, 0.02, 5.0, 1.5, 2, 20};
    doc.agg.breakpoints = {{2, 10.0}, {4, 20.0}};
    doc.agg.scale_c0 = 0.5;
    doc.agg.scale_c1 = 1.0;
    const ModelDocument again = load_model_document(model_document_to_json(doc, 0.1));
    CHECK(again.proc.a_serial == doctest::Approx(doc.proc.a_serial));
    CHECK(again.proc.a_parallel == doctest::Approx(doc.proc.a_parallel));
    CHECK(again.proc.b_fixed == doctest::Approx(doc.proc.b_fixed));
    CHECK(again.proc.b_per_node == doctest::Approx(doc.proc.b_per_node));
    CHECK(again.proc.valid_min_nodes == 2);
    CHECK(again.proc.valid_max_nodes == 20);
    CHECK(again.agg.breakpoints == doc.agg.breakpoints);
}

TEST_CASE("sample CSV parsing") {
    const auto samples = load_samples_csv("nodes,tuples,seconds\n2,1000,12.5\n4,1000,7.25\n");
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].nodes == 2);
    CHECK(samples[0].tuples == 1000);
    CHECK(samples[0].seconds == doctest::Approx(12.5));
    CHECK_THROWS_AS(load_samples_csv("bad,header\n1,2,3\n"), ScenarioError);
    CHECK_THROWS_AS(load_samples_csv("nodes,tuples,seconds\n1;2;3\n"), ScenarioError);
    CHECK_THROWS_AS(load_samples_csv(""), ScenarioError);
}

TEST_CASE("money renders with four decimals") {
    CHECK(format_money(6.0) == "6.0000");
    CHECK(format_money(0.0083333) == "0.0083");
    CHECK(format_money(7.5) == "7.5000");
}

TEST_CASE("environment variables override cluster timing defaults") {
    ::setenv("ELASTIQ_RATE_WINDOW_S", "60", 1);
    ::setenv("ELASTIQ_PROVISIONING_LEAD_S", "120", 1);
    const ScenarioConfig sc = load_scenario_file(scenario_path("toy.json"));
    CHECK(sc.rate_window_ms == 60 * 1000);
    CHECK(sc.sim_params.provisioning_lead_ms == 120 * 1000);
    ::unsetenv("ELASTIQ_RATE_WINDOW_S");
    ::unsetenv("ELASTIQ_PROVISIONING_LEAD_S");
    const ScenarioConfig plain = load_scenario_file(scenario_path("toy.json"));
    CHECK(plain.rate_window_ms == 180 * 1000);
    CHECK(plain.sim_params.provisioning_lead_ms == 0);
}
