// Command-line front end: fit cost models, generate schedules, replay
// scenarios, compare strategies, and sweep parameters.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "elastiq/baselines.hpp"
#include "elastiq/scenario_io.hpp"
#include "elastiq/simulator.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadData = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitUsage = 64;

struct GlobalArgs {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = ".";
    bool quiet = false;
};

std::string out_path(const GlobalArgs& g, const std::string& name) {
    return (std::filesystem::path(g.out_dir) / name).string();
}

std::uint64_t effective_seed(const GlobalArgs& g, const elastiq::ScenarioConfig& sc) {
    return g.seed_set ? g.seed : sc.seed;
}

void say(const GlobalArgs& g, const std::string& line) {
    if (!g.quiet) std::cout << line << "\n";
}

int cmd_fit(const GlobalArgs& g, const std::string& samples_path, const std::string& out_name) {
    const auto samples = elastiq::load_samples_csv(elastiq::read_file(samples_path));
    const auto fit = elastiq::fit_proc_model(samples);
    elastiq::ModelDocument doc;
    doc.proc = fit.model;
    elastiq::write_file_atomic(out_path(g, out_name),
                               elastiq::model_document_to_json(doc, fit.residual_rms));
    std::ostringstream line;
    line << "fit a_serial=" << fit.model.a_serial << " a_parallel=" << fit.model.a_parallel
         << " b_fixed=" << fit.model.b_fixed << " b_per_node=" << fit.model.b_per_node
         << " residual_rms=" << fit.residual_rms;
    say(g, line.str());
    return kExitOk;
}

int cmd_simulate(const GlobalArgs& g, const std::string& scenario_path, int k_override,
                 const std::string& bsf_override, const std::string& agg_override) {
    elastiq::ScenarioConfig sc = elastiq::load_scenario_file(scenario_path);
    if (k_override > 0) sc.sim_params.step_k = k_override;
    if (!bsf_override.empty()) {
        sc.sim_params.bsf_set.clear();
        std::istringstream in(bsf_override);
        std::string tok;
        while (std::getline(in, tok, ',')) sc.sim_params.bsf_set.push_back(std::stoi(tok));
    }
    if (agg_override == "partial")
        sc.sim_params.aggregation_mode = elastiq::AggregationMode::Partial;
    else if (agg_override == "final-only")
        sc.sim_params.aggregation_mode = elastiq::AggregationMode::FinalOnly;

    const std::uint64_t seed = effective_seed(g, sc);
    elastiq::ChooseStats stats;
    const auto ctx = sc.sim_context();
    const auto schedule =
        elastiq::choose_schedule(ctx, sc.queries, sc.start_time_ms, &stats);
    if (!schedule) {
        std::cerr << "no feasible schedule for any (config, factor) combination\n";
        return kExitInfeasible;
    }
    elastiq::write_file_atomic(out_path(g, "plan.json"), elastiq::plan_to_json(*schedule, seed));
    elastiq::write_file_atomic(out_path(g, "schedule.csv"),
                               elastiq::schedule_to_csv(*schedule, seed));
    std::ostringstream line;
    line << "cost " << elastiq::format_money(schedule->total_cost) << " max_nodes "
         << schedule->max_nodes << " bsf " << schedule->batch_size_factor << " init_config "
         << schedule->init_config_id << " max_rate "
         << schedule->max_supported_rate_multiplier << " sim_ms " << stats.wall_ms << " passes "
         << stats.passes;
    say(g, line.str());
    return kExitOk;
}

elastiq::RunOptions parse_strategy(const std::string& strategy,
                                   const elastiq::ScenarioConfig& sc,
                                   elastiq::AutoscaleRules& rules) {
    elastiq::RunOptions options;
    if (strategy == "elastic") {
        options.strategy = elastiq::RunOptions::Strategy::Elastic;
    } else if (strategy.rfind("fixed:", 0) == 0) {
        options.strategy = elastiq::RunOptions::Strategy::Fixed;
        options.fixed_config_id = std::stoi(strategy.substr(6));
    } else if (strategy == "naive-llf") {
        options.strategy = elastiq::RunOptions::Strategy::NaiveLlf;
        options.fixed_config_id = 0;
    } else if (strategy.rfind("naive-llf:", 0) == 0) {
        options.strategy = elastiq::RunOptions::Strategy::NaiveLlf;
        options.fixed_config_id = std::stoi(strategy.substr(10));
    } else if (strategy == "autoscale") {
        options.strategy = elastiq::RunOptions::Strategy::Autoscale;
        rules.max_nodes = sc.configs.back().worker_nodes;
        rules.min_nodes = elastiq::mandatory_floor_nodes(sc.configs);
        options.autoscale = &rules;
    } else {
        throw CLI::ValidationError("--strategy",
                                   "unknown strategy (elastic|fixed:<id>|naive-llf|autoscale)");
    }
    return options;
}

int cmd_run(const GlobalArgs& g, const std::string& scenario_path, const std::string& strategy) {
    elastiq::ScenarioConfig sc = elastiq::load_scenario_file(scenario_path);
    const std::uint64_t seed = effective_seed(g, sc);
    sc.seed = seed;
    elastiq::AutoscaleRules rules;
    elastiq::RunOptions options = parse_strategy(strategy, sc, rules);

    elastiq::ExecutionTrace trace;
    try {
        trace = elastiq::run_scenario(sc, options);
    } catch (const elastiq::ScenarioInfeasibleError& e) {
        std::cerr << e.what() << "\n";
        return kExitInfeasible;
    }
    elastiq::write_file_atomic(out_path(g, "trace.csv"), elastiq::trace_to_csv(trace, seed));
    elastiq::write_file_atomic(out_path(g, "summary.json"),
                               elastiq::trace_summary_to_json(trace, seed));
    elastiq::write_file_atomic(out_path(g, "nodes.csv"),
                               elastiq::timeline_to_csv(trace.node_timeline, seed));
    std::ostringstream line;
    line << "strategy " << strategy << " cost " << elastiq::format_money(trace.total_cost)
         << " misses " << trace.misses << " max_nodes " << trace.max_nodes << " re_simulations "
         << trace.resim_count;
    say(g, line.str());
    return kExitOk;
}

int cmd_compare(const GlobalArgs& g, const std::string& scenario_path) {
    elastiq::ScenarioConfig sc = elastiq::load_scenario_file(scenario_path);
    const std::uint64_t seed = effective_seed(g, sc);
    sc.seed = seed;
    const auto ctx = sc.sim_context();

    std::ostringstream csv;
    csv << "# seed=" << seed << "\n";
    csv << "strategy,cost,misses,max_nodes\n";

    const auto elastic_plan = elastiq::choose_schedule(ctx, sc.queries, sc.start_time_ms);
    double min_fixed_cost = -1;
    for (const auto& config : sc.configs) {
        const auto fixed =
            elastiq::fixed_config_schedule(ctx, sc.queries, config, sc.start_time_ms);
        if (fixed) {
            if (min_fixed_cost < 0 || fixed->total_cost < min_fixed_cost)
                min_fixed_cost = fixed->total_cost;
            elastiq::RunOptions options;
            options.strategy = elastiq::RunOptions::Strategy::Fixed;
            options.fixed_config_id = config.id;
            const auto trace = elastiq::run_scenario(sc, options);
            csv << "fixed:" << config.id << ',' << elastiq::format_money(fixed->total_cost) << ','
                << trace.misses << ',' << trace.max_nodes << "\n";
        } else {
            csv << "fixed:" << config.id << ",-,-,-\n";
        }
    }

    if (elastic_plan) {
        const auto trace = elastiq::run_scenario(sc, elastiq::RunOptions{});
        csv << "elastic," << elastiq::format_money(elastic_plan->total_cost) << ','
            << trace.misses << ',' << trace.max_nodes << "\n";
    } else {
        csv << "elastic,-,-,-\n";
    }

    {
        elastiq::RunOptions options;
        options.strategy = elastiq::RunOptions::Strategy::NaiveLlf;
        options.fixed_config_id = 0;
        const auto trace = elastiq::run_scenario(sc, options);
        csv << "naive-llf," << elastiq::format_money(trace.total_cost) << ',' << trace.misses
            << ',' << trace.max_nodes << "\n";
    }
    {
        elastiq::AutoscaleRules rules;
        rules.max_nodes = sc.configs.back().worker_nodes;
        rules.min_nodes = elastiq::mandatory_floor_nodes(sc.configs);
        try {
            const auto trace = elastiq::autoscale_run(sc, rules);
            csv << "autoscale," << elastiq::format_money(trace.total_cost) << ',' << trace.misses
                << ',' << trace.max_nodes << "\n";
        } catch (const elastiq::ScenarioInfeasibleError&) {
            csv << "autoscale,-,-,-\n";
        }
    }

    elastiq::write_file_atomic(out_path(g, "compare.csv"), csv.str());
    if (elastic_plan && min_fixed_cost >= 0) {
        const bool holds = elastic_plan->total_cost <= min_fixed_cost + 1e-9;
        say(g, std::string("elastic <= min feasible fixed: ") + (holds ? "yes" : "NO"));
        if (!holds) return 1;
    }
    say(g, "wrote " + out_path(g, "compare.csv"));
    return kExitOk;
}

int cmd_sweep(const GlobalArgs& g, const std::string& scenario_path, const std::string& k_set) {
    elastiq::ScenarioConfig sc = elastiq::load_scenario_file(scenario_path);
    const std::uint64_t seed = effective_seed(g, sc);
    std::vector<int> ks;
    std::istringstream in(k_set);
    std::string tok;
    while (std::getline(in, tok, ',')) ks.push_back(std::stoi(tok));
    if (ks.empty()) ks.push_back(sc.sim_params.step_k);

    std::ostringstream csv;
    csv << "# seed=" << seed << "\n";
    csv << "k,init_config,bsf,feasible,cost,max_nodes,passes,wall_ms\n";
    for (const int k : ks) {
        elastiq::SimContext ctx = sc.sim_context();
        ctx.params.step_k = k;
        for (const auto& config : sc.configs) {
            for (const int factor : ctx.params.bsf_set) {
                elastiq::GenStats stats;
                const auto t0 = std::chrono::steady_clock::now();
                std::optional<elastiq::Schedule> s;
                try {
                    s = elastiq::gen_schedule(ctx, config.id, factor, sc.queries,
                                              sc.start_time_ms, &stats);
                    if (s) *s = elastiq::optimize_schedule(ctx, *s, sc.queries, sc.start_time_ms);
                } catch (const elastiq::InfeasibleBatchError&) {
                    s.reset();
                }
                const double wall =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t0)
                        .count();
                csv << k << ',' << config.id << ',' << factor << ',' << (s ? 1 : 0) << ',';
                if (s)
                    csv << elastiq::format_money(s->total_cost) << ',' << s->max_nodes;
                else
                    csv << "-,-";
                csv << ',' << stats.passes << ',' << wall << "\n";
            }
        }
    }
    elastiq::write_file_atomic(out_path(g, "sweep.csv"), csv.str());
    say(g, "wrote " + out_path(g, "sweep.csv"));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deadline-aware elastic batch scheduler and executor"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--seed", g.seed, "override the scenario seed")
        ->each([&g](const std::string&) { g.seed_set = true; });
    app.add_option("--out", g.out_dir, "output directory (default .)");
    app.add_flag("--quiet", g.quiet, "suppress progress output");

    std::string samples_path, model_out = "model.json";
    auto* fit = app.add_subcommand("fit", "fit a processing cost model from a sample CSV");
    fit->add_option("samples", samples_path, "CSV with header nodes,tuples,seconds")->required();
    fit->add_option("--model-out", model_out, "output model file name");

    std::string scenario_path;
    int k_override = 0;
    std::string bsf_override, agg_override;
    auto* simulate = app.add_subcommand("simulate", "choose a minimum-cost schedule");
    simulate->add_option("scenario", scenario_path, "scenario JSON")->required();
    simulate->add_option("--k", k_override, "backtrack step size");
    simulate->add_option("--bsf-set", bsf_override, "comma-separated batch size factors");
    simulate->add_option("--partial-agg", agg_override,
                         "aggregation mode override (partial|final-only)");

    std::string strategy = "elastic";
    auto* run = app.add_subcommand("run", "replay a scenario through the executor");
    run->add_option("scenario", scenario_path, "scenario JSON")->required();
    run->add_option("--strategy", strategy, "elastic|fixed:<id>|naive-llf[:id]|autoscale");

    auto* compare = app.add_subcommand("compare", "run every strategy side by side");
    compare->add_option("scenario", scenario_path, "scenario JSON")->required();

    std::string k_set = "1";
    auto* sweep = app.add_subcommand("sweep", "grid metrics across (config, factor) and K");
    sweep->add_option("scenario", scenario_path, "scenario JSON")->required();
    sweep->add_option("--k-set", k_set, "comma-separated K values");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (fit->parsed()) return cmd_fit(g, samples_path, model_out);
        if (simulate->parsed()) return cmd_simulate(g, scenario_path, k_override, bsf_override,
                                                    agg_override);
        if (run->parsed()) return cmd_run(g, scenario_path, strategy);
        if (compare->parsed()) return cmd_compare(g, scenario_path);
        if (sweep->parsed()) return cmd_sweep(g, scenario_path, k_set);
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const elastiq::DegenerateSamplesError& e) {
        std::cerr << e.what() << "\n";
        return kExitBadData;
    } catch (const elastiq::ScenarioError& e) {
        std::cerr << e.what() << "\n";
        return kExitBadData;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitBadData;
    }
    return kExitUsage;
}
