#include "elastiq/scenario_io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace elastiq {

using nlohmann::json;

namespace {

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) known = true;
        if (!known) throw ScenarioError("unknown key '" + key + "' in " + where);
    }
}

Millis env_override_ms(const char* name, Millis fallback) {
    // ELASTIQ_* variables carry seconds, matching the documented defaults.
    if (const char* raw = std::getenv(name)) {
        char* end = nullptr;
        const double seconds = std::strtod(raw, &end);
        if (end && *end == '\0' && seconds >= 0) return ceil_ms(seconds);
    }
    return fallback;
}

InputProfile parse_stream(const json& j) {
    expect_keys(j, "stream", {"id", "segments", "end", "granule"});
    InputProfile p;
    p.stream_id = j.at("id").get<std::string>();
    for (const auto& seg : j.at("segments")) {
        if (!seg.is_array() || seg.size() != 2)
            throw ScenarioError("stream segment must be [start_ms, rate]");
        p.segments.emplace_back(seg[0].get<Millis>(), seg[1].get<double>());
    }
    p.end_ms = j.at("end").get<Millis>();
    p.granule = j.value("granule", std::int64_t{1});
    validate_profile(p);
    return p;
}

json stream_to_json(const InputProfile& p) {
    json j;
    j["id"] = p.stream_id;
    j["segments"] = json::array();
    for (const auto& [t, r] : p.segments) j["segments"].push_back({t, r});
    j["end"] = p.end_ms;
    if (p.granule != 1) j["granule"] = p.granule;
    return j;
}

QuerySpec parse_query(const json& j) {
    expect_keys(j, "query",
                {"query_id", "wind_start", "wind_end", "deadline", "input_stream",
                 "input_streams", "input_rate", "num_tuple_total", "model"});
    QuerySpec q;
    q.query_id = j.at("query_id").get<std::string>();
    q.wind_start_ms = j.at("wind_start").get<Millis>();
    q.wind_end_ms = j.at("wind_end").get<Millis>();
    q.deadline_ms = j.at("deadline").get<Millis>();
    if (j.contains("input_streams"))
        for (const auto& s : j.at("input_streams")) q.input_streams.push_back(s.get<std::string>());
    else if (j.contains("input_stream"))
        q.input_streams.push_back(j.at("input_stream").get<std::string>());
    if (q.input_streams.empty())
        throw ScenarioError("query " + q.query_id + " names no input stream");
    q.input_rate = j.value("input_rate", 0.0);
    q.num_tuple_total = j.value("num_tuple_total", std::int64_t{0});
    q.model_id = j.value("model", std::string("default"));
    if (!(q.wind_start_ms < q.wind_end_ms && q.wind_end_ms <= q.deadline_ms))
        throw ScenarioError("query " + q.query_id +
                            " needs wind_start < wind_end <= deadline");
    return q;
}

json query_to_json(const QuerySpec& q) {
    json j;
    j["query_id"] = q.query_id;
    j["wind_start"] = q.wind_start_ms;
    j["wind_end"] = q.wind_end_ms;
    j["deadline"] = q.deadline_ms;
    j["input_streams"] = q.input_streams;
    if (q.input_rate > 0) j["input_rate"] = q.input_rate;
    if (q.num_tuple_total > 0) j["num_tuple_total"] = q.num_tuple_total;
    if (q.model_id != "default") j["model"] = q.model_id;
    return j;
}

ProcCostModel parse_proc_model(const json& j) {
    expect_keys(j, "proc model",
                {"a_serial", "a_parallel", "b_fixed", "b_per_node", "valid_nodes"});
    ProcCostModel m;
    m.a_serial = j.value("a_serial", 0.0);
    m.a_parallel = j.value("a_parallel", 0.0);
    m.b_fixed = j.value("b_fixed", 0.0);
    m.b_per_node = j.value("b_per_node", 0.0);
    if (m.a_serial < 0 || m.a_parallel < 0 || m.b_fixed < 0 || m.b_per_node < 0)
        throw ScenarioError("processing model coefficients must be nonnegative");
    if (j.contains("valid_nodes")) {
        const auto& r = j.at("valid_nodes");
        if (!r.is_array() || r.size() != 2)
            throw ScenarioError("valid_nodes must be [lo, hi]");
        m.valid_min_nodes = r[0].get<int>();
        m.valid_max_nodes = r[1].get<int>();
    }
    return m;
}

AggCostModel parse_agg_model(const json& j) {
    expect_keys(j, "agg model", {"breakpoints", "node_scale"});
    AggCostModel m;
    if (j.contains("breakpoints")) {
        for (const auto& bp : j.at("breakpoints")) {
            if (!bp.is_array() || bp.size() != 2)
                throw ScenarioError("agg breakpoint must be [batches, seconds]");
            m.breakpoints.emplace_back(bp[0].get<std::int64_t>(), bp[1].get<double>());
        }
        for (std::size_t i = 1; i < m.breakpoints.size(); ++i)
            if (m.breakpoints[i - 1].first >= m.breakpoints[i].first)
                throw ScenarioError("agg breakpoints must be strictly increasing");
    }
    if (j.contains("node_scale")) {
        const auto& s = j.at("node_scale");
        if (!s.is_array() || s.size() != 2) throw ScenarioError("node_scale must be [c0, c1]");
        m.scale_c0 = s[0].get<double>();
        m.scale_c1 = s[1].get<double>();
    }
    return m;
}

json proc_model_to_json(const ProcCostModel& m) {
    json j;
    j["a_serial"] = m.a_serial;
    j["a_parallel"] = m.a_parallel;
    j["b_fixed"] = m.b_fixed;
    j["b_per_node"] = m.b_per_node;
    j["valid_nodes"] = {m.valid_min_nodes, m.valid_max_nodes};
    return j;
}

json agg_model_to_json(const AggCostModel& m) {
    json j;
    j["breakpoints"] = json::array();
    for (const auto& [b, s] : m.breakpoints) j["breakpoints"].push_back({b, s});
    j["node_scale"] = {m.scale_c0, m.scale_c1};
    return j;
}

SimParams parse_sim_params(const json& j) {
    expect_keys(j, "sim_params",
                {"c_max", "bsf_set", "step_k", "max_nodes_cap", "partial_agg_fraction",
                 "aggregation", "dispatch", "reset_to_init", "msr_step_pct", "msr_ceiling",
                 "provisioning_lead", "release_delay", "release_idle_threshold"});
    SimParams p;
    p.c_max_ms = j.value("c_max", p.c_max_ms);
    if (j.contains("bsf_set")) {
        p.bsf_set.clear();
        for (const auto& f : j.at("bsf_set")) p.bsf_set.push_back(f.get<int>());
        if (p.bsf_set.empty()) throw ScenarioError("bsf_set must not be empty");
        for (std::size_t i = 0; i < p.bsf_set.size(); ++i)
            if (p.bsf_set[i] < 1 || (i > 0 && p.bsf_set[i - 1] >= p.bsf_set[i]))
                throw ScenarioError("bsf_set must be increasing and >= 1");
    }
    p.step_k = j.value("step_k", p.step_k);
    if (p.step_k < 1) throw ScenarioError("step_k must be >= 1");
    p.max_nodes_cap = j.value("max_nodes_cap", p.max_nodes_cap);
    p.partial_agg_fraction = j.value("partial_agg_fraction", p.partial_agg_fraction);
    if (j.contains("aggregation")) {
        const std::string mode = j.at("aggregation").get<std::string>();
        if (mode == "final-only")
            p.aggregation_mode = AggregationMode::FinalOnly;
        else if (mode == "partial")
            p.aggregation_mode = AggregationMode::Partial;
        else
            throw ScenarioError("aggregation must be final-only or partial");
    }
    if (j.contains("dispatch")) {
        const std::string policy = j.at("dispatch").get<std::string>();
        if (policy == "llf")
            p.dispatch_policy = DispatchPolicy::LeastLaxity;
        else if (policy == "edf")
            p.dispatch_policy = DispatchPolicy::EarliestDeadline;
        else
            throw ScenarioError("dispatch must be llf or edf");
    }
    p.reset_to_init_enabled = j.value("reset_to_init", p.reset_to_init_enabled);
    p.msr_step_pct = j.value("msr_step_pct", p.msr_step_pct);
    p.msr_ceiling = j.value("msr_ceiling", p.msr_ceiling);
    p.provisioning_lead_ms = j.value("provisioning_lead", p.provisioning_lead_ms);
    p.release_delay_ms = j.value("release_delay", p.release_delay_ms);
    p.release_idle_threshold_ms = j.value("release_idle_threshold", p.release_idle_threshold_ms);
    return p;
}

json sim_params_to_json(const SimParams& p) {
    json j;
    j["c_max"] = p.c_max_ms;
    j["bsf_set"] = p.bsf_set;
    j["step_k"] = p.step_k;
    if (p.max_nodes_cap > 0) j["max_nodes_cap"] = p.max_nodes_cap;
    j["partial_agg_fraction"] = p.partial_agg_fraction;
    j["aggregation"] =
        p.aggregation_mode == AggregationMode::Partial ? "partial" : "final-only";
    if (p.dispatch_policy == DispatchPolicy::EarliestDeadline) j["dispatch"] = "edf";
    if (!p.reset_to_init_enabled) j["reset_to_init"] = false;
    j["msr_step_pct"] = p.msr_step_pct;
    j["msr_ceiling"] = p.msr_ceiling;
    j["provisioning_lead"] = p.provisioning_lead_ms;
    j["release_delay"] = p.release_delay_ms;
    j["release_idle_threshold"] = p.release_idle_threshold_ms;
    return j;
}

}  // namespace

ScenarioConfig load_scenario(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    expect_keys(j, "scenario",
                {"version", "seed", "streams", "actual_streams", "queries", "configs",
                 "price_table", "models", "sim_params", "rate_policy", "rate_window",
                 "rate_deviation_pct", "query_arrivals", "execution_noise_pct", "start_time"});
    if (j.value("version", 0) != 1) throw ScenarioError("scenario version must be 1");

    ScenarioConfig sc;
    sc.seed = j.value("seed", std::uint64_t{0});
    sc.start_time_ms = j.value("start_time", Millis{0});

    for (const auto& s : j.at("streams")) {
        InputProfile p = parse_stream(s);
        if (sc.streams.count(p.stream_id))
            throw ScenarioError("duplicate stream id " + p.stream_id);
        sc.streams[p.stream_id] = std::move(p);
    }
    if (j.contains("actual_streams")) {
        for (const auto& s : j.at("actual_streams")) {
            InputProfile p = parse_stream(s);
            if (!sc.streams.count(p.stream_id))
                throw ScenarioError("actual stream " + p.stream_id + " has no nominal twin");
            sc.actual_streams[p.stream_id] = std::move(p);
        }
    }

    for (const auto& q : j.at("queries")) sc.queries.push_back(parse_query(q));

    for (const auto& c : j.at("configs")) {
        expect_keys(c, "config", {"id", "worker_nodes", "price_per_node_second"});
        sc.configs.push_back({c.at("id").get<int>(), c.at("worker_nodes").get<int>(),
                              c.at("price_per_node_second").get<double>()});
    }
    validate_config_set(sc.configs);

    if (j.contains("price_table")) {
        const auto& pt = j.at("price_table");
        expect_keys(pt, "price_table",
                    {"machine_rate_per_hour", "platform_rate_per_hour", "minimum_billed_seconds"});
        sc.price_table.machine_rate_per_hour = pt.at("machine_rate_per_hour").get<double>();
        sc.price_table.platform_rate_per_hour = pt.at("platform_rate_per_hour").get<double>();
        sc.price_table.minimum_billed_seconds =
            pt.value("minimum_billed_seconds", sc.price_table.minimum_billed_seconds);
    } else {
        // Keeps timeline pricing consistent with the smallest config's rate.
        sc.price_table.machine_rate_per_hour =
            sc.configs.front().price_per_node_second * 3600.0 / 2;
        sc.price_table.platform_rate_per_hour = sc.price_table.machine_rate_per_hour;
    }

    for (const auto& [model_id, m] : j.at("models").items()) {
        expect_keys(m, "model " + model_id, {"proc", "agg"});
        sc.proc_models[model_id] = parse_proc_model(m.at("proc"));
        if (m.contains("agg")) sc.agg_models[model_id] = parse_agg_model(m.at("agg"));
    }

    if (j.contains("sim_params")) sc.sim_params = parse_sim_params(j.at("sim_params"));
    sc.sim_params.provisioning_lead_ms =
        env_override_ms("ELASTIQ_PROVISIONING_LEAD_S", sc.sim_params.provisioning_lead_ms);
    sc.sim_params.release_delay_ms =
        env_override_ms("ELASTIQ_RELEASE_DELAY_S", sc.sim_params.release_delay_ms);
    sc.sim_params.release_idle_threshold_ms = env_override_ms(
        "ELASTIQ_RELEASE_IDLE_THRESHOLD_S", sc.sim_params.release_idle_threshold_ms);

    if (j.contains("rate_policy")) {
        const std::string policy = j.at("rate_policy").get<std::string>();
        if (policy == "optimistic")
            sc.rate_policy = RatePolicy::Optimistic;
        else if (policy == "pessimistic")
            sc.rate_policy = RatePolicy::Pessimistic;
        else
            throw ScenarioError("rate_policy must be optimistic or pessimistic");
    }
    sc.rate_window_ms = j.value("rate_window", sc.rate_window_ms);
    sc.rate_window_ms = env_override_ms("ELASTIQ_RATE_WINDOW_S", sc.rate_window_ms);
    sc.rate_deviation_pct = j.value("rate_deviation_pct", sc.rate_deviation_pct);
    sc.execution_noise_pct = j.value("execution_noise_pct", sc.execution_noise_pct);

    if (j.contains("query_arrivals")) {
        for (const auto& ev : j.at("query_arrivals")) {
            expect_keys(ev, "query_arrival", {"time", "add", "remove"});
            QueryArrivalEvent qe;
            qe.time_ms = ev.at("time").get<Millis>();
            if (ev.contains("add")) qe.add = parse_query(ev.at("add"));
            if (ev.contains("remove")) qe.remove_id = ev.at("remove").get<std::string>();
            if (!qe.add && qe.remove_id.empty())
                throw ScenarioError("query_arrival needs add or remove");
            sc.query_arrivals.push_back(std::move(qe));
        }
    }

    // Cross references and declared totals.
    const auto check_query = [&sc](const QuerySpec& q) {
        std::vector<const InputProfile*> profiles;
        for (const auto& sid : q.input_streams) {
            if (!sc.streams.count(sid))
                throw ScenarioError("query " + q.query_id + " references unknown stream " + sid);
            profiles.push_back(&sc.streams.at(sid));
        }
        if (!sc.proc_models.count(q.model_id) && !sc.proc_models.count("default"))
            throw ScenarioError("query " + q.query_id + " references unknown model " +
                                q.model_id);
        if (q.num_tuple_total > 0) {
            const QueryInput input(q, profiles);
            if (input.total() != q.num_tuple_total)
                throw ScenarioError("query " + q.query_id + " declares " +
                                    std::to_string(q.num_tuple_total) +
                                    " tuples but the profiles deliver " +
                                    std::to_string(input.total()));
        }
    };
    for (const auto& q : sc.queries) check_query(q);
    for (const auto& ev : sc.query_arrivals)
        if (ev.add) check_query(*ev.add);

    return sc;
}

ScenarioConfig load_scenario_file(const std::string& path) {
    return load_scenario(read_file(path));
}

std::string scenario_to_json(const ScenarioConfig& sc) {
    json j;
    j["version"] = 1;
    j["seed"] = sc.seed;
    if (sc.start_time_ms != 0) j["start_time"] = sc.start_time_ms;
    j["streams"] = json::array();
    for (const auto& [id, p] : sc.streams) j["streams"].push_back(stream_to_json(p));
    if (!sc.actual_streams.empty()) {
        j["actual_streams"] = json::array();
        for (const auto& [id, p] : sc.actual_streams)
            j["actual_streams"].push_back(stream_to_json(p));
    }
    j["queries"] = json::array();
    for (const auto& q : sc.queries) j["queries"].push_back(query_to_json(q));
    j["configs"] = json::array();
    for (const auto& c : sc.configs)
        j["configs"].push_back({{"id", c.id},
                                {"worker_nodes", c.worker_nodes},
                                {"price_per_node_second", c.price_per_node_second}});
    j["price_table"] = {{"machine_rate_per_hour", sc.price_table.machine_rate_per_hour},
                        {"platform_rate_per_hour", sc.price_table.platform_rate_per_hour},
                        {"minimum_billed_seconds", sc.price_table.minimum_billed_seconds}};
    j["models"] = json::object();
    for (const auto& [id, m] : sc.proc_models) {
        j["models"][id]["proc"] = proc_model_to_json(m);
        if (sc.agg_models.count(id)) j["models"][id]["agg"] = agg_model_to_json(sc.agg_models.at(id));
    }
    j["sim_params"] = sim_params_to_json(sc.sim_params);
    j["rate_policy"] = sc.rate_policy == RatePolicy::Optimistic ? "optimistic" : "pessimistic";
    j["rate_window"] = sc.rate_window_ms;
    j["rate_deviation_pct"] = sc.rate_deviation_pct;
    if (sc.execution_noise_pct > 0) j["execution_noise_pct"] = sc.execution_noise_pct;
    if (!sc.query_arrivals.empty()) {
        j["query_arrivals"] = json::array();
        for (const auto& ev : sc.query_arrivals) {
            json e;
            e["time"] = ev.time_ms;
            if (ev.add) e["add"] = query_to_json(*ev.add);
            if (!ev.remove_id.empty()) e["remove"] = ev.remove_id;
            j["query_arrivals"].push_back(e);
        }
    }
    return j.dump(2) + "\n";
}

ModelDocument load_model_document(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(std::string("model document is not valid JSON: ") + e.what());
    }
    expect_keys(j, "model document", {"proc", "agg", "residual_rms"});
    ModelDocument doc;
    doc.proc = parse_proc_model(j.at("proc"));
    if (j.contains("agg")) doc.agg = parse_agg_model(j.at("agg"));
    return doc;
}

std::string model_document_to_json(const ModelDocument& doc, double residual_rms) {
    json j;
    j["proc"] = proc_model_to_json(doc.proc);
    j["agg"] = agg_model_to_json(doc.agg);
    if (residual_rms > 0) j["residual_rms"] = residual_rms;
    return j.dump(2) + "\n";
}

std::vector<DurationSample> load_samples_csv(const std::string& csv_text) {
    std::istringstream in(csv_text);
    std::string line;
    std::vector<DurationSample> samples;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "nodes,tuples,seconds")
                throw ScenarioError("sample CSV must start with header nodes,tuples,seconds");
            header_seen = true;
            continue;
        }
        DurationSample s;
        char comma1 = 0, comma2 = 0;
        std::istringstream row(line);
        if (!(row >> s.nodes >> comma1 >> s.tuples >> comma2 >> s.seconds) || comma1 != ',' ||
            comma2 != ',')
            throw ScenarioError("bad sample row: " + line);
        samples.push_back(s);
    }
    if (!header_seen) throw ScenarioError("sample CSV is empty");
    return samples;
}

std::string format_money(double dollars) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", dollars);
    return buf;
}

std::string plan_to_json(const Schedule& s, std::uint64_t seed) {
    json j;
    j["version"] = 1;
    j["seed"] = seed;
    j["cost"] = json::parse(format_money(s.total_cost));
    j["max_nodes"] = s.max_nodes;
    j["batch_size_factor"] = s.batch_size_factor;
    j["init_config"] = s.init_config_id;
    j["max_supported_rate"] = s.max_supported_rate_multiplier;
    j["entries"] = json::array();
    for (const auto& e : s.entries) {
        json ej;
        ej["query_id"] = e.query_id;
        ej["batch_no"] = e.batch_no;
        ej["bst_ms"] = e.bst_ms;
        ej["bet_ms"] = e.bet_ms;
        ej["req_nodes"] = e.req_nodes;
        ej["config"] = e.config_id;
        ej["tuples"] = e.tuples;
        ej["pending"] = e.pending_after;
        if (e.partial_agg_included) ej["partial_agg"] = true;
        if (e.final_agg_included) ej["final_agg"] = true;
        j["entries"].push_back(ej);
    }
    j["node_timeline"] = json::array();
    for (const auto& p : s.node_timeline.points)
        j["node_timeline"].push_back({p.time_ms, p.nodes});
    return j.dump(2) + "\n";
}

std::string schedule_to_csv(const Schedule& s, std::uint64_t seed) {
    std::ostringstream out;
    out << "# seed=" << seed << "\n";
    out << "query_id,batch_no,bst_ms,bet_ms,req_nodes,tuples,pending\n";
    for (const auto& e : s.entries)
        out << e.query_id << ',' << e.batch_no << ',' << e.bst_ms << ',' << e.bet_ms << ','
            << e.req_nodes << ',' << e.tuples << ',' << e.pending_after << "\n";
    return out.str();
}

std::string trace_to_csv(const ExecutionTrace& trace, std::uint64_t seed) {
    std::ostringstream out;
    out << "# seed=" << seed << "\n";
    out << "time_ms,event,query_id,batch_no,nodes,detail\n";
    for (const auto& ev : trace.events)
        out << ev.time_ms << ',' << trace_event_name(ev.type) << ',' << ev.query_id << ','
            << ev.batch_no << ',' << ev.nodes << ',' << ev.detail << "\n";
    return out.str();
}

std::string trace_summary_to_json(const ExecutionTrace& trace, std::uint64_t seed) {
    json j;
    j["seed"] = seed;
    j["total_cost"] = json::parse(format_money(trace.total_cost));
    j["planned_cost"] = json::parse(format_money(trace.planned_cost));
    j["misses"] = trace.misses;
    j["max_nodes"] = trace.max_nodes;
    j["re_simulations"] = trace.resim_count;
    j["queries"] = json::object();
    for (const auto& [id, outcome] : trace.per_query) {
        j["queries"][id]["completion_ms"] = outcome.completion_ms;
        j["queries"][id]["met"] = outcome.met;
    }
    return j.dump(2) + "\n";
}

std::string timeline_to_csv(const NodeTimeline& timeline, std::uint64_t seed) {
    std::ostringstream out;
    out << "# seed=" << seed << "\n";
    out << "time_ms,nodes\n";
    for (const auto& p : timeline.points) out << p.time_ms << ',' << p.nodes << "\n";
    return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ScenarioError("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace elastiq
