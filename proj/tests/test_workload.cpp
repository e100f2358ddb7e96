#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "elastiq/workload.hpp"

using namespace elastiq;

namespace {

InputProfile uniform_profile(double rate, Millis start, Millis end, std::int64_t granule = 1) {
    InputProfile p;
    p.stream_id = "s";
    p.segments = {{start, rate}};
    p.end_ms = end;
    p.granule = granule;
    return p;
}

InputProfile two_segment_profile() {
    InputProfile p;
    p.stream_id = "s2";
    p.segments = {{0, 10.0}, {60000, 20.0}};
    p.end_ms = 120000;
    return p;
}

}  // namespace

TEST_CASE("cumulative_tuples integrates the rate segments") {
    CHECK(cumulative_tuples(uniform_profile(1.0, 0, 100000), 50000) == 50);
    CHECK(cumulative_tuples(two_segment_profile(), 90000) == 1200);
    CHECK(cumulative_tuples(two_segment_profile(), -5000) == 0);
    CHECK(cumulative_tuples(two_segment_profile(), 0) == 0);
}

TEST_CASE("cumulative_tuples respects granule delivery") {
    // One 9400-tuple file per second.
    auto p = uniform_profile(9400.0, 0, 10000, 9400);
    CHECK(cumulative_tuples(p, 500) == 0);
    CHECK(cumulative_tuples(p, 1000) == 9400);
    CHECK(cumulative_tuples(p, 2500) == 18800);
}

TEST_CASE("input_time inverts cumulative_tuples") {
    CHECK(input_time(two_segment_profile(), 0) == 0);
    CHECK(input_time(two_segment_profile(), 1200) == 90000);
    CHECK(input_time(two_segment_profile(), 600) == 60000);
    // Worked toy stream: 1 tuple/second from 0, tuple 4 lands at t=4.
    auto toy = uniform_profile(1.0, 0, 12000);
    CHECK(input_time(toy, 4) == 4000);
    CHECK(input_time(toy, 12) == 12000);
    CHECK_THROWS_AS(input_time(toy, 13), NotEnoughTuplesError);
}

TEST_CASE("profile conservation and Galois connection") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> rate_dist(0.5, 40.0);
    std::uniform_int_distribution<Millis> gap_dist(1000, 50000);
    std::uniform_int_distribution<std::int64_t> granule_dist(1, 4);
    for (int round = 0; round < 25; ++round) {
        InputProfile p;
        p.stream_id = "r";
        Millis t = gap_dist(rng);
        const int segs = 1 + static_cast<int>(rng() % 4);
        for (int s = 0; s < segs; ++s) {
            p.segments.emplace_back(t, rate_dist(rng));
            t += gap_dist(rng);
        }
        p.end_ms = t;
        p.granule = granule_dist(rng);
        validate_profile(p);

        const std::int64_t total = total_tuples(p);
        double expected_raw = 0;
        for (std::size_t s = 0; s < p.segments.size(); ++s) {
            const Millis e = s + 1 < p.segments.size() ? p.segments[s + 1].first : p.end_ms;
            expected_raw += p.segments[s].second * ms_to_seconds(e - p.segments[s].first);
        }
        const std::int64_t expected =
            static_cast<std::int64_t>(expected_raw + 1e-9) / p.granule * p.granule;
        CHECK(total == expected);

        // input_time(cumulative(t)) <= t, and cumulative is nondecreasing.
        std::int64_t prev = 0;
        for (Millis probe = 0; probe <= p.end_ms + 5000; probe += 997) {
            const std::int64_t c = cumulative_tuples(p, probe);
            CHECK(c >= prev);
            prev = c;
            if (c > 0) CHECK(input_time(p, c) <= probe);
        }
        if (total > 0) {
            for (std::int64_t count = 1; count <= total; count += std::max<std::int64_t>(1, total / 7)) {
                const Millis at = input_time(p, count);
                CHECK(cumulative_tuples(p, at) >= count);
                CHECK(cumulative_tuples(p, at - 1) < count);
            }
        }
    }
}

TEST_CASE("query input spans multiple aligned streams") {
    InputProfile a = uniform_profile(10.0, 0, 10000);
    a.stream_id = "a";
    InputProfile b = uniform_profile(5.0, 0, 10000);
    b.stream_id = "b";
    QuerySpec spec;
    spec.query_id = "q";
    spec.wind_start_ms = 0;
    spec.wind_end_ms = 10000;
    spec.deadline_ms = 20000;
    spec.input_streams = {"a", "b"};
    QueryInput qi(spec, {&a, &b});
    CHECK(qi.total() == 150);
    // Half the query tuples needs half of each stream: max(input_time) = 5 s.
    CHECK(qi.availability_time(75) == 5000);
    CHECK(qi.availability_time(150) == 10000);
    CHECK(qi.available_at(5000) == 75);
}

TEST_CASE("next_brt follows batch consumption") {
    InputProfile p = two_segment_profile();
    QuerySpec spec;
    spec.query_id = "q";
    spec.wind_start_ms = 0;
    spec.wind_end_ms = 120000;
    spec.deadline_ms = 200000;
    spec.input_streams = {"s2"};
    QueryInput qi(spec, {&p});

    QuerySimState st;
    st.spec = spec;
    st.batch_size = 600;
    st.pending = qi.total();
    SUBCASE("first batch readiness") { CHECK(next_brt(st, qi) == 60000); }
    SUBCASE("final partial batch waits for the window end") {
        st.consumed = 1500;
        st.pending = qi.total() - st.consumed;
        CHECK(st.pending < st.batch_size);
        CHECK(next_brt(st, qi) == 120000);
    }
    SUBCASE("single batch covering everything waits for the window end") {
        st.batch_size = qi.total();
        CHECK(next_brt(st, qi) == 120000);
    }
    SUBCASE("nondecreasing in consumed prefix") {
        Millis prev = 0;
        for (std::int64_t done = 0; done + 1 < qi.total(); done += 600) {
            st.consumed = done;
            st.pending = qi.total() - done;
            const Millis brt = next_brt(st, qi);
            CHECK(brt >= prev);
            prev = brt;
        }
    }
}

TEST_CASE("estimate_rate averages the window") {
    std::vector<std::pair<Millis, std::int64_t>> log;
    for (Millis t = 1000; t <= 300000; t += 1000) log.emplace_back(t, 40);
    CHECK(estimate_rate(log, 300000, 180000) == doctest::Approx(40.0));
    CHECK(estimate_rate({}, 300000, 180000) == doctest::Approx(0.0));
    std::vector<std::pair<Millis, std::int64_t>> burst = {{299000, 10800}};
    CHECK(estimate_rate(burst, 300000, 180000) == doctest::Approx(60.0));
    CHECK_THROWS_AS(estimate_rate({}, 0, 0), ScenarioError);
}
