#include "pcnet/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pcnet::harness {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
    return out;
}

// Reconstructed capacities. Offered load into node 3 is 40.
ScenarioConfig fig2_config() {
    ScenarioConfig c;
    c.name = "fig2";
    c.nodes = 5;
    c.bound = 40;
    c.forwarding = Forwarding::kCutThrough;
    c.links = {{0, 1, 20}, {0, 4, 20}, {1, 2, 40}, {2, 3, 20}, {4, 3, 20}};
    c.uncontrollable = {1, 2};
    c.flows = {{0, 3, 20.0, true}};
    c.policy.type = PolicyConfig::Type::kRandomChoice;
    c.policy.name = "fig2";
    c.policy.rules = {{1, {{2, 0, 1.0}}}, {2, {}}};
    return c;
}

// Reconstructed so that the largest supportable 1->4 rate is 25 while
// MaxWeight, which keeps feeding node 2, only carries about 10.
ScenarioConfig scenario1_config() {
    ScenarioConfig c;
    c.name = "scenario1";
    c.nodes = 6;
    c.bound = 40;
    c.forwarding = Forwarding::kCutThrough;
    c.links = {{0, 1, 40}, {0, 4, 20}, {1, 2, 40}, {1, 4, 40},
               {2, 3, 10}, {4, 3, 40}, {5, 2, 10}, {5, 4, 10}};
    c.uncontrollable = {1, 2};
    c.flows = {{0, 3, 25.0, true}, {5, 3, 5.0, false}};
    c.policy.type = PolicyConfig::Type::kRandomChoice;
    c.policy.name = "scenario1";
    c.policy.rules = {{1, {{2, 0, 0.5}, {4, 0, 0.5}}}, {2, {{3, 0, 0.5}, {3, 1, 0.5}}}};
    return c;
}

ScenarioConfig scenario2_config() {
    ScenarioConfig c;
    c.name = "scenario2";
    c.nodes = 4;
    c.bound = 1;
    c.forwarding = Forwarding::kCutThrough;
    c.links = {{0, 1, 1}, {0, 2, 1}, {1, 3, 1}, {2, 3, 1}};
    c.uncontrollable = {1, 2};
    c.flows = {{0, 3, 1.0, true}};
    c.policy.type = PolicyConfig::Type::kRelayThreshold;
    c.policy.name = "relay_threshold";
    c.policy.threshold.relay_a = 1;
    c.policy.threshold.relay_b = 2;
    c.policy.threshold.sink = 3;
    c.policy.threshold.flow = 0;
    return c;
}

template <class T>
T get_field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": field '" + key + "': " + e.what());
    }
}

NodeId node_from_json(const json& j, const char* key, int nodes, const std::string& where) {
    const int id = get_field<int>(j, key, where);
    if (id < 1 || id > nodes)
        throw ConfigError(where + ": node " + std::to_string(id) + " outside 1.." +
                          std::to_string(nodes));
    return id - 1;
}

FlowId flow_from_json(const json& j, const char* key, std::size_t flows, const std::string& where) {
    const int id = get_field<int>(j, key, where);
    if (id < 1 || static_cast<std::size_t>(id) > flows)
        throw ConfigError(where + ": flow " + std::to_string(id) + " outside 1.." +
                          std::to_string(flows));
    return id - 1;
}

RelayThresholdPolicy::Rates rates_from_json(const json& j, const char* key,
                                            RelayThresholdPolicy::Rates fallback,
                                            const std::string& where) {
    if (!j.contains(key)) return fallback;
    const auto v = get_field<std::vector<double>>(j, key, where);
    if (v.size() != 2) throw ConfigError(where + ": '" + key + "' needs two rates");
    return {v[0], v[1]};
}

json rates_to_json(const RelayThresholdPolicy::Rates& r) { return json::array({r.a, r.b}); }

}  // namespace

std::vector<std::string> scenario_names() { return {"fig2", "scenario1", "scenario2"}; }

ScenarioConfig builtin_scenario(const std::string& name) {
    if (name == "fig2") return fig2_config();
    if (name == "scenario1") return scenario1_config();
    if (name == "scenario2") return scenario2_config();
    throw ConfigError("unknown scenario '" + name + "'; valid names: " + join(scenario_names()));
}

Scenario instantiate(const ScenarioConfig& config, double load) {
    if (!(load > 0.0)) throw ConfigError("load must be positive");
    try {
        Topology topo(config.nodes, config.links, config.uncontrollable, config.bound);
        std::vector<FlowSpec> flows;
        for (const FlowConfig& f : config.flows) {
            topo.require_node(f.source);
            topo.require_node(f.destination);
            const double rate = f.scales_with_load ? f.rate * load : f.rate;
            flows.push_back({f.source, f.destination, ArrivalProcess(rate, config.bound)});
        }
        auto network = std::make_shared<const Network>(std::move(topo), std::move(flows),
                                                       config.forwarding);
        std::unique_ptr<UncontrollablePolicy> policy;
        if (config.policy.type == PolicyConfig::Type::kRandomChoice)
            policy = std::make_unique<RandomChoicePolicy>(*network, config.policy.rules,
                                                          config.policy.name);
        else
            policy = std::make_unique<RelayThresholdPolicy>(*network, config.policy.threshold);
        return Scenario{config.name, std::move(network), std::move(policy)};
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("scenario '" + config.name + "': " + e.what());
    }
}

Scenario build_scenario(const std::string& name, double load) {
    return instantiate(builtin_scenario(name), load);
}

ScenarioConfig parse_scenario(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scenario file is not valid JSON: ") + e.what());
    }
    ScenarioConfig c;
    c.name = j.value("name", std::string("custom"));
    const std::string where = "scenario '" + c.name + "'";
    c.nodes = get_field<int>(j, "nodes", where);
    if (c.nodes < 1) throw ConfigError(where + ": needs at least one node");
    c.bound = get_field<Packets>(j, "bound", where);
    try {
        c.forwarding = forwarding_from_string(j.value("forwarding", std::string("store_and_forward")));
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }

    for (const json& l : get_field<json>(j, "links", where))
        c.links.push_back({node_from_json(l, "from", c.nodes, where),
                           node_from_json(l, "to", c.nodes, where),
                           get_field<Packets>(l, "capacity", where)});
    std::sort(c.links.begin(), c.links.end(), [](const Link& a, const Link& b) {
        return a.src != b.src ? a.src < b.src : a.dst < b.dst;
    });

    std::vector<bool> uncontrollable(c.nodes, false);
    for (int id : get_field<std::vector<int>>(j, "uncontrollable", where)) {
        if (id < 1 || id > c.nodes) throw ConfigError(where + ": uncontrollable node out of range");
        uncontrollable[id - 1] = true;
    }
    if (j.contains("controllable"))
        for (int id : get_field<std::vector<int>>(j, "controllable", where)) {
            if (id < 1 || id > c.nodes) throw ConfigError(where + ": controllable node out of range");
            if (uncontrollable[id - 1])
                throw ConfigError(where + ": node " + std::to_string(id) +
                                  " listed as both controllable and uncontrollable");
        }
    for (NodeId i = 0; i < c.nodes; ++i)
        if (uncontrollable[i]) c.uncontrollable.push_back(i);

    for (const json& f : get_field<json>(j, "flows", where))
        c.flows.push_back({node_from_json(f, "source", c.nodes, where),
                           node_from_json(f, "destination", c.nodes, where),
                           get_field<double>(f, "rate", where), f.value("scales_with_load", true)});

    const json p = get_field<json>(j, "policy", where);
    const std::string type = get_field<std::string>(p, "type", where);
    c.policy.name = p.value("name", type);
    if (type == "random_choice") {
        c.policy.type = PolicyConfig::Type::kRandomChoice;
        for (const json& r : p.value("rules", json::array())) {
            RandomChoicePolicy::NodeRule rule;
            rule.node = node_from_json(r, "node", c.nodes, where);
            for (const json& o : r.value("options", json::array()))
                rule.options.push_back({node_from_json(o, "to", c.nodes, where),
                                        flow_from_json(o, "flow", c.flows.size(), where),
                                        get_field<double>(o, "probability", where)});
            c.policy.rules.push_back(std::move(rule));
        }
    } else if (type == "relay_threshold") {
        c.policy.type = PolicyConfig::Type::kRelayThreshold;
        RelayThresholdPolicy::Params& t = c.policy.threshold;
        t.relay_a = node_from_json(p, "relay_a", c.nodes, where);
        t.relay_b = node_from_json(p, "relay_b", c.nodes, where);
        t.sink = node_from_json(p, "sink", c.nodes, where);
        t.flow = flow_from_json(p, "flow", c.flows.size(), where);
        t.threshold = p.value("threshold", t.threshold);
        t.low_b = rates_from_json(p, "low_b", t.low_b, where);
        t.high_b_low_a = rates_from_json(p, "high_b_low_a", t.high_b_low_a, where);
        t.both_high = rates_from_json(p, "both_high", t.both_high, where);
    } else {
        throw ConfigError(where + ": unknown policy type '" + type +
                          "'; valid types: random_choice, relay_threshold");
    }
    return c;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

namespace {

json scenario_json(const ScenarioConfig& c) {
    json j;
    j["name"] = c.name;
    j["nodes"] = c.nodes;
    j["bound"] = c.bound;
    j["forwarding"] = to_string(c.forwarding);
    j["links"] = json::array();
    for (const Link& l : c.links)
        j["links"].push_back({{"from", l.src + 1}, {"to", l.dst + 1}, {"capacity", l.capacity}});
    j["uncontrollable"] = json::array();
    for (NodeId i : c.uncontrollable) j["uncontrollable"].push_back(i + 1);
    j["flows"] = json::array();
    for (const FlowConfig& f : c.flows)
        j["flows"].push_back({{"source", f.source + 1},
                              {"destination", f.destination + 1},
                              {"rate", f.rate},
                              {"scales_with_load", f.scales_with_load}});
    json p;
    p["name"] = c.policy.name;
    if (c.policy.type == PolicyConfig::Type::kRandomChoice) {
        p["type"] = "random_choice";
        p["rules"] = json::array();
        for (const auto& r : c.policy.rules) {
            json opts = json::array();
            for (const auto& o : r.options)
                opts.push_back({{"to", o.to + 1}, {"flow", o.flow + 1}, {"probability", o.probability}});
            p["rules"].push_back({{"node", r.node + 1}, {"options", opts}});
        }
    } else {
        const auto& t = c.policy.threshold;
        p["type"] = "relay_threshold";
        p["relay_a"] = t.relay_a + 1;
        p["relay_b"] = t.relay_b + 1;
        p["sink"] = t.sink + 1;
        p["flow"] = t.flow + 1;
        p["threshold"] = t.threshold;
        p["low_b"] = rates_to_json(t.low_b);
        p["high_b_low_a"] = rates_to_json(t.high_b_low_a);
        p["both_high"] = rates_to_json(t.both_high);
    }
    j["policy"] = p;
    return j;
}

}  // namespace

std::string scenario_to_json(const ScenarioConfig& config) { return scenario_json(config).dump(2); }

std::vector<std::string> algorithm_names() { return {"maxweight", "tmw", "tucrl"}; }

void ExperimentConfig::validate() const {
    if (!(load > 0.0)) throw ConfigError("load must be positive");
    if (horizon < 1) throw ConfigError("horizon must be at least 1 slot");
    if (replications < 1) throw ConfigError("replication count must be at least 1");
    if (stride < 1) throw ConfigError("sampling stride must be at least 1");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
        throw ConfigError("warm-up fraction must be in [0, 1)");
    const auto names = algorithm_names();
    if (std::find(names.begin(), names.end(), algorithm) == names.end())
        throw ConfigError("unknown algorithm '" + algorithm + "'; valid names: " + join(names));
    if (algorithm == "tucrl") {
        if (tucrl.truncation < 1) throw ConfigError("tucrl needs a truncation threshold V >= 1");
        if (tucrl.evi_max_iterations < 1) throw ConfigError("EVI iteration cap must be positive");
        if (!(tucrl.confidence_scale > 0.0)) throw ConfigError("confidence scale must be positive");
    }
}

MetricsSeries empty_series(const Network& network) {
    MetricsSeries s;
    for (NodeId i = 0; i < network.node_count(); ++i)
        for (FlowId k = 0; k < network.flow_count(); ++k)
            if (!network.is_destination(i, k))
                s.queue_columns.push_back("q_n" + std::to_string(i + 1) + "_f" + std::to_string(k + 1));
    const Topology& topo = network.topology();
    for (const Link& l : topo.links())
        if (!topo.is_controllable(l.src))
            for (FlowId k = 0; k < network.flow_count(); ++k)
                s.imagined_columns.push_back("g_n" + std::to_string(l.src + 1) + "_n" +
                                             std::to_string(l.dst + 1) + "_f" + std::to_string(k + 1));
    return s;
}

bool RunResult::conserved() const {
    return totals.arrivals == totals.delivered + final_queues.total() + totals.dropped;
}

RunResult run_once(const ExperimentConfig& config, std::uint64_t seed) {
    config.validate();
    Scenario sc = instantiate(config.scenario, config.load);
    const Network& net = *sc.network;
    const Topology& topo = net.topology();

    std::unique_ptr<Controller> controller;
    TmwController* tmw = nullptr;
    tucrl::TucrlController* learner = nullptr;
    if (config.algorithm == "maxweight") {
        controller = std::make_unique<MaxWeightController>(net);
    } else if (config.algorithm == "tmw") {
        auto c = std::make_unique<TmwController>(net, net.empty_state(), config.check_queue_bound);
        tmw = c.get();
        controller = std::move(c);
    } else {
        try {
            auto c = std::make_unique<tucrl::TucrlController>(net, config.tucrl);
            learner = c.get();
            controller = std::move(c);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("tucrl cannot run on scenario '" + sc.name + "': " + e.what());
        }
    }

    std::vector<std::pair<std::size_t, FlowId>> imagined_keys;
    for (std::size_t l = 0; l < topo.links().size(); ++l)
        if (!topo.is_controllable(topo.link(l).src))
            for (FlowId k = 0; k < net.flow_count(); ++k) imagined_keys.emplace_back(l, k);
    std::vector<std::pair<NodeId, FlowId>> queue_keys;
    for (NodeId i = 0; i < net.node_count(); ++i)
        for (FlowId k = 0; k < net.flow_count(); ++k)
            if (!net.is_destination(i, k)) queue_keys.emplace_back(i, k);

    Simulation sim(net, std::move(sc.policy), std::move(controller), seed);
    RunResult r;
    r.seed = seed;
    r.algorithm = config.algorithm;
    r.series = empty_series(net);
    r.delivered_by_flow.assign(net.flow_count(), 0);
    r.arrivals_by_flow.assign(net.flow_count(), 0);

    for (std::int64_t t = 1; t <= config.horizon; ++t) {
        const StepResult& res = sim.advance();
        for (FlowId k = 0; k < net.flow_count(); ++k) {
            r.delivered_by_flow[k] += res.delivered_by_flow[k];
            r.arrivals_by_flow[k] += sim.last_event().arrivals(net.flows()[k].source, k);
        }
        if (t % config.stride != 0 && t != config.horizon) continue;

        MetricsRow row;
        row.slot = t;
        const QueueState& q = sim.queues();
        row.total_queue = static_cast<double>(q.total());
        for (const auto& [i, k] : queue_keys) row.queues.push_back(static_cast<double>(q(i, k)));
        const Totals& tot = sim.totals();
        row.arrivals_cum = static_cast<double>(tot.arrivals);
        row.delivered_cum = static_cast<double>(tot.delivered);
        row.dropped_cum = static_cast<double>(tot.dropped);
        row.drop_fraction = tot.arrivals > 0 ? row.dropped_cum / row.arrivals_cum : 0.0;
        if (tmw != nullptr) {
            row.x_total = tmw->virtual_queues().x_total();
            row.y_abs_total = tmw->virtual_queues().y_abs_total();
            for (const auto& [l, k] : imagined_keys) row.imagined.push_back(tmw->imagined_share(l, k));
        } else {
            row.imagined.assign(imagined_keys.size(), 0.0);
        }
        r.series.rows.push_back(std::move(row));
    }

    r.totals = sim.totals();
    r.final_queues = sim.queues();
    if (tmw != nullptr) r.bound_violations = tmw->bound_violations();
    if (learner != nullptr) {
        r.episodes = learner->episodes();
        r.episode_bound = learner->episode_bound(config.horizon);
        r.truncation_violations = learner->truncation_violations();
    }
    return r;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult out;
    for (int rep = 0; rep < config.replications; ++rep)
        out.runs.push_back(run_once(config, config.seed + static_cast<std::uint64_t>(rep)));

    out.mean = out.runs.front().series;
    const double R = static_cast<double>(out.runs.size());
    for (std::size_t i = 0; i < out.mean.rows.size(); ++i) {
        MetricsRow& m = out.mean.rows[i];
        auto avg = [&](auto field) {
            double s = 0.0;
            for (const RunResult& run : out.runs) s += field(run.series.rows[i]);
            return s / R;
        };
        m.total_queue = avg([](const MetricsRow& x) { return x.total_queue; });
        m.arrivals_cum = avg([](const MetricsRow& x) { return x.arrivals_cum; });
        m.delivered_cum = avg([](const MetricsRow& x) { return x.delivered_cum; });
        m.dropped_cum = avg([](const MetricsRow& x) { return x.dropped_cum; });
        m.drop_fraction = avg([](const MetricsRow& x) { return x.drop_fraction; });
        m.x_total = avg([](const MetricsRow& x) { return x.x_total; });
        m.y_abs_total = avg([](const MetricsRow& x) { return x.y_abs_total; });
        for (std::size_t c = 0; c < m.queues.size(); ++c)
            m.queues[c] = avg([c](const MetricsRow& x) { return x.queues[c]; });
        for (std::size_t c = 0; c < m.imagined.size(); ++c)
            m.imagined[c] = avg([c](const MetricsRow& x) { return x.imagined[c]; });
    }
    return out;
}

double queue_slope(const MetricsSeries& series, std::int64_t from_slot) {
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const MetricsRow& r : series.rows) {
        if (r.slot <= from_slot) continue;
        const double x = static_cast<double>(r.slot);
        n += 1;
        sx += x;
        sy += r.total_queue;
        sxx += x * x;
        sxy += x * r.total_queue;
    }
    const double den = n * sxx - sx * sx;
    if (n < 2 || den == 0.0) return 0.0;
    return (n * sxy - sx * sy) / den;
}

double mean_queue(const MetricsSeries& series, std::int64_t from_slot) {
    double n = 0, s = 0;
    for (const MetricsRow& r : series.rows)
        if (r.slot > from_slot) {
            n += 1;
            s += r.total_queue;
        }
    return n > 0 ? s / n : 0.0;
}

namespace {

void put(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += ',';
    out += buf;
}

}  // namespace

std::string to_csv(const MetricsSeries& series) {
    std::string out = "slot,total_queue";
    for (const auto& c : series.queue_columns) out += "," + c;
    out += ",arrivals_cum,delivered_cum,dropped_cum,drop_fraction,x_total,y_abs_total";
    for (const auto& c : series.imagined_columns) out += "," + c;
    out += '\n';
    for (const MetricsRow& r : series.rows) {
        out += std::to_string(r.slot);
        put(out, r.total_queue);
        for (double v : r.queues) put(out, v);
        put(out, r.arrivals_cum);
        put(out, r.delivered_cum);
        put(out, r.dropped_cum);
        put(out, r.drop_fraction);
        put(out, r.x_total);
        put(out, r.y_abs_total);
        for (double v : r.imagined) put(out, v);
        out += '\n';
    }
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + path);
}

void emit_csv(const MetricsSeries& series, const std::string& path) {
    write_text(path, to_csv(series));
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != t.header.size())
            throw std::runtime_error("CSV row width differs from header");
        std::vector<double> row;
        for (const auto& c : cells) row.push_back(std::stod(c));
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::vector<SweepRow> load_sweep(const ExperimentConfig& base, const std::vector<double>& loads,
                                 const std::vector<std::string>& algorithms) {
    if (loads.empty()) throw ConfigError("load sweep needs at least one load");
    std::vector<SweepRow> rows;
    for (const std::string& algo : algorithms)
        for (double load : loads) {
            ExperimentConfig cfg = base;
            cfg.algorithm = algo;
            cfg.load = load;
            const ExperimentResult res = run_experiment(cfg);
            const auto warm =
                static_cast<std::int64_t>(cfg.warmup_fraction * static_cast<double>(cfg.horizon));
            SweepRow row;
            row.algorithm = algo;
            row.load = load;
            row.final_total_queue = res.mean.rows.back().total_queue;
            row.mean_total_queue = mean_queue(res.mean, warm);
            row.slope = queue_slope(res.mean, warm);
            row.drop_fraction = res.mean.rows.back().drop_fraction;
            rows.push_back(row);
        }
    return rows;
}

void emit_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::string out = "algorithm,load,final_total_queue,mean_total_queue,slope,drop_fraction\n";
    for (const SweepRow& r : rows) {
        out += r.algorithm;
        put(out, r.load);
        put(out, r.final_total_queue);
        put(out, r.mean_total_queue);
        put(out, r.slope);
        put(out, r.drop_fraction);
        out += '\n';
    }
    write_text(path, out);
}

std::string manifest(const ExperimentConfig& config) {
    json j;
    j["scenario"] = scenario_json(config.scenario);
    j["load"] = config.load;
    j["algorithm"] = config.algorithm;
    j["horizon"] = config.horizon;
    j["seed"] = config.seed;
    j["replications"] = config.replications;
    j["stride"] = config.stride;
    j["warmup_fraction"] = config.warmup_fraction;
    j["check_queue_bound"] = config.check_queue_bound;
    j["tucrl"] = {{"truncation", config.tucrl.truncation},
                  {"evi_max_iterations", config.tucrl.evi_max_iterations},
                  {"confidence_scale", config.tucrl.confidence_scale},
                  {"warm_start", config.tucrl.warm_start}};
    return j.dump(2) + "\n";
}

}  // namespace pcnet::harness
