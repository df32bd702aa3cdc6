// Command-line front end: simulate, sweep, oracle.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "pcnet/harness.hpp"
#include "pcnet/tucrl.hpp"

namespace fs = std::filesystem;
using namespace pcnet;

namespace {

struct CommonOptions {
    std::string config;
    std::string scenario;
    double load = 1.0;
    std::int64_t slots = 10000;
    std::uint64_t seed = 1;
    Packets truncation = 30;
    std::string out = "out";
    std::int64_t stride = 100;
    int replications = 1;
    double confidence_scale = 1.0;
    std::size_t evi_cap = 100000;
    double warmup = 0.1;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    auto* cfg = cmd->add_option("--config", o.config, "Scenario JSON file");
    auto* sc = cmd->add_option("--scenario", o.scenario, "Bundled scenario: fig2, scenario1, scenario2");
    cfg->excludes(sc);
    cmd->add_option("--load", o.load, "Load multiplier rho")->check(CLI::PositiveNumber);
    cmd->add_option("--slots", o.slots, "Horizon T in slots")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "Base seed");
    cmd->add_option("--truncation", o.truncation, "TUCRL truncation threshold V")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--stride", o.stride, "Metric sampling stride")->check(CLI::PositiveNumber);
    cmd->add_option("--replications", o.replications, "Replications (seed, seed+1, ...)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--confidence-scale", o.confidence_scale,
                    "Multiplier on the TUCRL confidence constant (1 = literal)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--evi-cap", o.evi_cap, "EVI iteration cap")->check(CLI::PositiveNumber);
    cmd->add_option("--warmup", o.warmup, "Warm-up fraction excluded from summaries");
}

harness::ExperimentConfig resolve(const CommonOptions& o, const std::string& algo) {
    harness::ExperimentConfig c;
    if (!o.config.empty())
        c.scenario = harness::load_scenario(o.config);
    else
        c.scenario = harness::builtin_scenario(o.scenario.empty() ? "fig2" : o.scenario);
    c.load = o.load;
    c.algorithm = algo;
    c.horizon = o.slots;
    c.seed = o.seed;
    c.replications = o.replications;
    c.stride = o.stride;
    c.warmup_fraction = o.warmup;
    c.tucrl.truncation = o.truncation;
    c.tucrl.confidence_scale = o.confidence_scale;
    c.tucrl.evi_max_iterations = o.evi_cap;
    c.output = o.out;
    c.validate();
    return c;
}

std::string tag(const harness::ExperimentConfig& c) {
    std::ostringstream s;
    s << c.scenario.name << "_" << c.algorithm << "_load" << c.load << "_seed" << c.seed;
    return s.str();
}

int simulate(const CommonOptions& o, const std::string& algo) {
    const harness::ExperimentConfig cfg = resolve(o, algo);
    fs::create_directories(cfg.output);
    const std::string base = (fs::path(cfg.output) / tag(cfg)).string();
    const harness::ExperimentResult res = harness::run_experiment(cfg);

    harness::write_text(base + "_manifest.json", harness::manifest(cfg));
    harness::emit_csv(res.mean, base + ".csv");
    for (std::size_t r = 0; r < res.runs.size() && res.runs.size() > 1; ++r)
        harness::emit_csv(res.runs[r].series, base + "_rep" + std::to_string(r) + ".csv");

    const auto warm = static_cast<std::int64_t>(cfg.warmup_fraction * static_cast<double>(cfg.horizon));
    for (const harness::RunResult& run : res.runs) {
        std::printf("seed %llu: arrivals %lld delivered %lld dropped %lld backlog %lld conserved %s\n",
                    static_cast<unsigned long long>(run.seed),
                    static_cast<long long>(run.totals.arrivals),
                    static_cast<long long>(run.totals.delivered),
                    static_cast<long long>(run.totals.dropped),
                    static_cast<long long>(run.final_queues.total()),
                    run.conserved() ? "yes" : "NO");
        if (algo == "tmw")
            std::printf("  queue-bound violations %lld\n", static_cast<long long>(run.bound_violations));
        if (algo == "tucrl") {
            std::printf("  episodes %zu (bound %.0f)\n", run.episodes.size(), run.episode_bound);
            const std::string log = base + "_episodes_s" + std::to_string(run.seed) + ".csv";
            std::string text = "episode,start,visited_pairs,gain,evi_iterations\n";
            for (const auto& e : run.episodes)
                text += std::to_string(e.episode) + "," + std::to_string(e.start) + "," +
                        std::to_string(e.visited_pairs) + "," + std::to_string(e.gain) + "," +
                        std::to_string(e.iterations) + "\n";
            harness::write_text(log, text);
        }
    }
    std::printf("mean total queue after warm-up %.4f, slope %.6f, drop fraction %.4f\n",
                harness::mean_queue(res.mean, warm), harness::queue_slope(res.mean, warm),
                res.mean.rows.back().drop_fraction);
    std::printf("wrote %s.csv\n", base.c_str());
    return 0;
}

int sweep(const CommonOptions& o, const std::vector<std::string>& algos, std::vector<double> loads) {
    harness::ExperimentConfig cfg = resolve(o, algos.front());
    fs::create_directories(cfg.output);
    const auto rows = harness::load_sweep(cfg, loads, algos);
    const std::string path = (fs::path(cfg.output) / (cfg.scenario.name + "_sweep.csv")).string();
    harness::emit_sweep_csv(rows, path);
    harness::write_text((fs::path(cfg.output) / (cfg.scenario.name + "_sweep_manifest.json")).string(),
                        harness::manifest(cfg));
    std::printf("%-10s %6s %14s %14s %10s\n", "algorithm", "load", "final_queue", "mean_queue", "slope");
    for (const auto& r : rows)
        std::printf("%-10s %6.3f %14.2f %14.2f %10.5f\n", r.algorithm.c_str(), r.load,
                    r.final_total_queue, r.mean_total_queue, r.slope);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

int oracle(const CommonOptions& o) {
    const harness::ExperimentConfig cfg = resolve(o, "tucrl");
    harness::Scenario sc = harness::instantiate(cfg.scenario, cfg.load);
    const tucrl::TruncatedStateSpace space(*sc.network, cfg.tucrl.truncation);
    const tucrl::ActionSpace actions(*sc.network);
    const auto table = tucrl::exact_transitions(*sc.network, *sc.policy, space, actions);
    const auto res = tucrl::oracle_average_cost(table, tucrl::backlog_costs(space));
    std::printf("states %zu actions %zu gain %.9f iterations %zu\n", space.size(), actions.size(),
                res.gain, res.iterations);
    fs::create_directories(cfg.output);
    const std::string path =
        (fs::path(cfg.output) / (cfg.scenario.name + "_oracle_V" + std::to_string(cfg.tucrl.truncation) + ".csv"))
            .string();
    std::string text;
    for (const auto& [i, k] : space.dims())
        text += "q_n" + std::to_string(i + 1) + "_f" + std::to_string(k + 1) + ",";
    text += "action\n";
    for (std::size_t s = 0; s < space.size(); ++s) {
        for (Packets c : space.coords(s)) text += std::to_string(c) + ",";
        text += std::to_string(res.policy[s]) + "\n";
    }
    harness::write_text(path, text);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partially controllable queueing network simulator"};
    app.require_subcommand(1);

    CommonOptions sim_opts;
    std::string algo = "maxweight";
    auto* sim = app.add_subcommand("simulate", "Run one experiment and write CSV plus a manifest");
    add_common(sim, sim_opts);
    sim->add_option("--algo", algo, "Controller")->check(CLI::IsMember({"maxweight", "tmw", "tucrl"}));

    CommonOptions sweep_opts;
    std::vector<std::string> sweep_algos{"maxweight", "tmw"};
    std::vector<double> loads{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
    auto* sw = app.add_subcommand("sweep", "Final queue totals over a list of loads");
    add_common(sw, sweep_opts);
    sw->add_option("--algo", sweep_algos, "Controllers")
        ->check(CLI::IsMember({"maxweight", "tmw", "tucrl"}));
    sw->add_option("--loads", loads, "Load multipliers, comma separated")->delimiter(',');

    CommonOptions oracle_opts;
    auto* orc = app.add_subcommand("oracle", "Optimal truncated-model gain by relative value iteration");
    add_common(orc, oracle_opts);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*sim) return simulate(sim_opts, algo);
        if (*sw) return sweep(sweep_opts, sweep_algos, loads);
        if (*orc) return oracle(oracle_opts);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
