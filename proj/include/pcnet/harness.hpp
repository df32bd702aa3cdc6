#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcnet/net_model.hpp"
#include "pcnet/policies.hpp"
#include "pcnet/simulation.hpp"
#include "pcnet/tucrl.hpp"

namespace pcnet::harness {

/// Invalid or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FlowConfig {
    NodeId source = 0;
    NodeId destination = 0;
    double rate = 0.0;
    /// When set the arrival mean is rate * load.
    bool scales_with_load = true;
    bool operator==(const FlowConfig&) const = default;
};

struct PolicyConfig {
    enum class Type { kRandomChoice, kRelayThreshold };
    Type type = Type::kRandomChoice;
    std::string name = "random_choice";
    std::vector<RandomChoicePolicy::NodeRule> rules;  // kRandomChoice
    RelayThresholdPolicy::Params threshold;           // kRelayThreshold
    bool operator==(const PolicyConfig&) const = default;
};

/// Network and uncontrollable behaviour, before the load multiplier is applied.
/// Node ids here are zero-based; the JSON form is one-based.
struct ScenarioConfig {
    std::string name;
    int nodes = 0;
    Packets bound = 1;
    Forwarding forwarding = Forwarding::kStoreAndForward;
    std::vector<Link> links;
    std::vector<NodeId> uncontrollable;
    std::vector<FlowConfig> flows;
    PolicyConfig policy;
    bool operator==(const ScenarioConfig&) const = default;
};

struct Scenario {
    std::string name;
    std::shared_ptr<const Network> network;
    std::unique_ptr<UncontrollablePolicy> policy;
};

/// Names accepted by builtin_scenario.
std::vector<std::string> scenario_names();
/// Bundled configuration; throws ConfigError listing the valid names.
ScenarioConfig builtin_scenario(const std::string& name);
/// Network and policy with arrival means scaled by `load`.
Scenario instantiate(const ScenarioConfig& config, double load);
Scenario build_scenario(const std::string& name, double load);

ScenarioConfig parse_scenario(const std::string& json_text);
ScenarioConfig load_scenario(const std::string& path);
std::string scenario_to_json(const ScenarioConfig& config);

struct ExperimentConfig {
    ScenarioConfig scenario;
    double load = 1.0;
    std::string algorithm = "maxweight";  // maxweight | tmw | tucrl
    tucrl::TucrlParams tucrl;
    std::int64_t horizon = 1000;
    std::uint64_t seed = 1;
    int replications = 1;
    std::int64_t stride = 1;
    double warmup_fraction = 0.1;
    /// Check the TMW queue bound every slot.
    bool check_queue_bound = true;
    std::string output;

    /// Throws ConfigError.
    void validate() const;
};

std::vector<std::string> algorithm_names();

/// One sampled slot. Counts are stored as doubles so replication means share
/// the type.
struct MetricsRow {
    std::int64_t slot = 0;
    double total_queue = 0.0;
    std::vector<double> queues;
    double arrivals_cum = 0.0;
    double delivered_cum = 0.0;
    double dropped_cum = 0.0;
    double drop_fraction = 0.0;
    double x_total = 0.0;
    double y_abs_total = 0.0;
    std::vector<double> imagined;
};

struct MetricsSeries {
    std::vector<std::string> queue_columns;     // q_n<i>_f<k>, one-based
    std::vector<std::string> imagined_columns;  // g_n<i>_n<j>_f<k>, one-based
    std::vector<MetricsRow> rows;
};

/// Column layout shared by every series of a network.
MetricsSeries empty_series(const Network& network);

struct RunResult {
    std::uint64_t seed = 0;
    std::string algorithm;
    MetricsSeries series;
    Totals totals;
    QueueState final_queues;
    std::vector<Packets> delivered_by_flow;
    std::vector<Packets> arrivals_by_flow;
    /// TMW: slots with a queue above its virtual bound.
    std::int64_t bound_violations = 0;
    /// TUCRL only.
    std::vector<tucrl::EpisodeRecord> episodes;
    double episode_bound = 0.0;
    std::int64_t truncation_violations = 0;

    /// arrivals == delivered + backlog + dropped.
    bool conserved() const;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
    MetricsSeries mean;
};

/// Runs one replication with the given seed.
RunResult run_once(const ExperimentConfig& config, std::uint64_t seed);
/// Replication r uses seed + r.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Least-squares slope of total_queue against slot over rows with
/// slot > from_slot.
double queue_slope(const MetricsSeries& series, std::int64_t from_slot = 0);
/// Mean total queue over rows with slot > from_slot.
double mean_queue(const MetricsSeries& series, std::int64_t from_slot = 0);

void emit_csv(const MetricsSeries& series, const std::string& path);
std::string to_csv(const MetricsSeries& series);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};
CsvTable parse_csv(const std::string& text);

struct SweepRow {
    std::string algorithm;
    double load = 0.0;
    double final_total_queue = 0.0;  ///< replication mean at slot T
    double mean_total_queue = 0.0;   ///< after warm-up
    double slope = 0.0;              ///< after warm-up
    double drop_fraction = 0.0;
};

std::vector<SweepRow> load_sweep(const ExperimentConfig& base, const std::vector<double>& loads,
                                 const std::vector<std::string>& algorithms);
void emit_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

/// Fully resolved config and seed as JSON text.
std::string manifest(const ExperimentConfig& config);
void write_text(const std::string& path, const std::string& text);

}  // namespace pcnet::harness
