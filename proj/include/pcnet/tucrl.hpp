#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcnet/net_model.hpp"
#include "pcnet/policies.hpp"
#include "pcnet/simulation.hpp"

namespace pcnet::tucrl {

/// Queue states with total backlog <= V - 1 over the non-destination
/// (node, flow) pairs. Destination rows are always empty and carry no
/// coordinate.
class TruncatedStateSpace {
public:
    /// Throws std::invalid_argument if V < 1 or the space exceeds `max_states`.
    TruncatedStateSpace(const Network& network, Packets V, std::size_t max_states = 200000);

    Packets truncation() const { return V_; }
    std::size_t size() const { return totals_.size(); }
    int dimension() const { return static_cast<int>(dims_.size()); }
    const std::vector<std::pair<NodeId, FlowId>>& dims() const { return dims_; }

    /// Index of q; throws std::out_of_range if q is not in the space.
    std::size_t index_of(const QueueState& q) const;
    QueueState state_at(std::size_t index) const;
    std::span<const Packets> coords(std::size_t index) const;
    Packets total(std::size_t index) const { return totals_[index]; }

    /// Dense V^m grid view used by neighbourhood searches. Cells outside the
    /// simplex map to npos.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t grid_size() const { return grid_to_state_.size(); }
    std::size_t grid_cell(std::size_t index) const { return state_to_grid_[index]; }
    std::size_t grid_state(std::size_t cell) const { return grid_to_state_[cell]; }

private:
    int node_count_ = 0;
    int flow_count_ = 0;
    Packets V_ = 0;
    std::vector<std::pair<NodeId, FlowId>> dims_;
    std::vector<Packets> coords_;  // size() * dimension()
    std::vector<Packets> totals_;
    std::vector<std::size_t> state_to_grid_;
    std::vector<std::size_t> grid_to_state_;
};

/// Joint controllable action set: product of per-node choices, first
/// controllable node varying slowest.
class ActionSpace {
public:
    explicit ActionSpace(const Network& network, std::size_t max_actions = 4096);

    std::size_t size() const { return size_; }
    RoutingAction action(std::size_t index) const;

private:
    const Topology* topo_;
    std::vector<std::vector<NodeChoice>> per_node_;
    std::size_t size_ = 1;
};

/// Visit and transition counts. n and n3 cover completed episodes only; the
/// running episode accumulates into v and a pending list folded in on rollover.
class MdpModel {
public:
    MdpModel(std::size_t states, std::size_t actions);

    std::size_t states() const { return states_; }
    std::size_t actions() const { return actions_; }
    std::uint64_t visits(std::size_t s, std::size_t a) const { return n_[s * actions_ + a]; }
    std::uint64_t episode_visits(std::size_t s, std::size_t a) const { return v_[s * actions_ + a]; }
    /// (next state, count), sorted by next state.
    const std::vector<std::pair<std::size_t, std::uint64_t>>& transitions(std::size_t s,
                                                                          std::size_t a) const {
        return n3_[s * actions_ + a];
    }

    void record(std::size_t s, std::size_t a, std::size_t next);
    /// Folds the running episode into n and n3 and starts episode + 1 at `slot`.
    void end_episode(std::int64_t slot);

    std::int64_t episode_start() const { return t_start_; }
    int episode() const { return episode_; }
    /// Pairs with n > 0.
    std::size_t visited_pairs() const { return visited_; }

private:
    std::size_t states_;
    std::size_t actions_;
    std::vector<std::uint64_t> n_;
    std::vector<std::uint32_t> v_;
    std::vector<std::vector<std::pair<std::size_t, std::uint64_t>>> n3_;
    std::vector<std::pair<std::size_t, std::size_t>> pending_;  // (pair, next)
    std::int64_t t_start_ = 0;
    int episode_ = 1;
    std::size_t visited_ = 0;
};

using SparseDistribution = std::vector<std::pair<std::size_t, double>>;

/// P^(.|s,a) = n3 / n as a sparse vector; empty when n = 0.
SparseDistribution estimate_transitions(const MdpModel& model, std::size_t s, std::size_t a);
/// Dense form over all states.
std::vector<double> estimate_transitions_dense(const MdpModel& model, std::size_t s, std::size_t a);

/// C = 2 (2ND + 1)^N.
double confidence_constant(int node_count, Packets bound);

/// min(2, sqrt(scale * C * log(2 |A| max(1, t) V) / max(1, n))). `scale` = 1
/// is the literal radius.
double confidence_radius(std::uint64_t n, std::int64_t t_episode, int node_count, Packets bound,
                         std::size_t action_count, Packets V, double scale = 1.0);

/// Minimiser of sum p w over the L1 ball of radius d around p_hat
/// intersected with the simplex. Throws std::invalid_argument for an empty
/// p_hat with d < 2.
std::vector<double> optimistic_distribution(std::span<const double> p_hat, double d,
                                            std::span<const double> values);

/// Sparse core: objective of the optimistic distribution whose added mass
/// goes to `best`. Uses `scratch` to avoid allocation.
double optimistic_value(const SparseDistribution& p_hat, double d, std::size_t best,
                        std::span<const double> values, SparseDistribution& scratch);

/// For every state, the lowest-value state in its reachable next-state set.
class Neighbourhoods {
public:
    virtual ~Neighbourhoods() = default;
    virtual void argmin(std::span<const double> values, std::span<std::size_t> out) const = 0;
};

/// Every state reachable from every state.
class AllStates final : public Neighbourhoods {
public:
    void argmin(std::span<const double> values, std::span<std::size_t> out) const override;
};

/// States whose every coordinate differs by at most `radius`. Ties go to the
/// lowest state index.
class GridBox final : public Neighbourhoods {
public:
    GridBox(const TruncatedStateSpace& space, Packets radius);
    void argmin(std::span<const double> values, std::span<std::size_t> out) const override;

private:
    const TruncatedStateSpace* space_;
    Packets radius_;
};

struct PairModel {
    SparseDistribution p_hat;
    double radius = 2.0;
};

struct PlanningProblem {
    std::size_t states = 0;
    std::size_t actions = 0;
    std::vector<double> cost;
    std::vector<PairModel> pairs;  // s * actions + a
    const Neighbourhoods* reachable = nullptr;
};

struct EviResult {
    std::vector<std::size_t> policy;
    double gain = 0.0;
    std::vector<double> value;
    std::size_t iterations = 0;
};

/// Extended value iteration. Stops once span(w_{j+1} - w_j) <= epsilon.
/// `initial` (optional) replaces w_0 = 0. Throws std::runtime_error with the
/// residual span once `max_iterations` is exceeded.
EviResult extended_value_iteration(const PlanningProblem& problem, double epsilon,
                                   std::size_t max_iterations = 100000,
                                   std::span<const double> initial = {});

/// True iff v(s,a) == max(1, n(s,a)).
bool episode_should_stop(const MdpModel& model, std::size_t s, std::size_t a);

struct Admission {
    NetworkEvent admitted;
    Packets dropped = 0;
};

/// Drops [sum(Q + a) - V + 1]^+ arrivals in (node, flow) order. An empty
/// event is admitted as is; otherwise a demand above the arrivals throws
/// std::logic_error.
Admission drop_packets(const QueueState& q, const NetworkEvent& event, Packets V);

/// Exact transition law of the truncated model: (s, a) -> sparse P(.|s,a).
struct TransitionTable {
    std::size_t states = 0;
    std::size_t actions = 0;
    std::vector<SparseDistribution> rows;  // s * actions + a
};

TransitionTable exact_transitions(const Network& network, const UncontrollablePolicy& policy,
                                  const TruncatedStateSpace& space, const ActionSpace& actions);

/// Per-state cost sum Q_ik.
std::vector<double> backlog_costs(const TruncatedStateSpace& space);

struct OracleResult {
    double gain = 0.0;
    std::vector<std::size_t> policy;
    std::vector<double> bias;
    std::size_t iterations = 0;
};

/// Relative value iteration on a known model. Each backup mixes in the
/// identity with weight `self_loop` so periodic chains still converge; the
/// gain and policies are unchanged by that transform. Assumes a single
/// optimal gain; multichain models exhaust the cap and throw.
OracleResult oracle_average_cost(const TransitionTable& table, std::span<const double> cost,
                                 double tolerance = 1e-6, std::size_t max_iterations = 1000000,
                                 double self_loop = 0.5);

/// Follows a fixed stationary policy over the truncated space, with the same
/// admission control as the learner.
class StationaryController final : public Controller {
public:
    StationaryController(const Network& network, Packets V, std::vector<std::size_t> policy);

    std::string name() const override { return "stationary"; }
    NetworkEvent admit(const QueueState& q, const NetworkEvent& event, Packets& dropped) override;
    RoutingAction decide(const QueueState& q, const NetworkEvent& event) override;

private:
    TruncatedStateSpace space_;
    std::vector<RoutingAction> actions_;
    std::vector<std::size_t> policy_;
};

struct EpisodeRecord {
    int episode = 0;
    std::int64_t start = 0;
    std::size_t visited_pairs = 0;
    double gain = 0.0;
    std::size_t iterations = 0;
};

struct TucrlParams {
    Packets truncation = 30;
    std::size_t evi_max_iterations = 100000;
    double confidence_scale = 1.0;
    bool warm_start = true;
    std::size_t max_states = 200000;
};

class TucrlController final : public Controller {
public:
    TucrlController(const Network& network, TucrlParams params);

    std::string name() const override { return "tucrl"; }
    NetworkEvent admit(const QueueState& q, const NetworkEvent& event, Packets& dropped) override;
    RoutingAction decide(const QueueState& q, const NetworkEvent& event) override;
    void observe(const QueueState& before, const NetworkEvent& admitted,
                 const StepResult& result) override;

    const TruncatedStateSpace& space() const { return space_; }
    const ActionSpace& action_space() const { return actions_; }
    const MdpModel& model() const { return model_; }
    const std::vector<EpisodeRecord>& episodes() const { return log_; }
    const TucrlParams& params() const { return params_; }

    /// 1 + |Q_V| |A| (log2 T + 1).
    double episode_bound(std::int64_t horizon) const;
    /// Slots in which the admitted backlog exceeded V - 1.
    std::int64_t truncation_violations() const { return truncation_violations_; }

private:
    void plan();

    const Network* network_;
    TucrlParams params_;
    TruncatedStateSpace space_;
    ActionSpace actions_;
    GridBox reachable_;
    MdpModel model_;
    std::vector<std::size_t> policy_;
    std::vector<double> value_;
    std::vector<EpisodeRecord> log_;
    std::vector<RoutingAction> action_cache_;
    bool need_plan_ = true;
    std::int64_t slot_ = 0;
    std::size_t current_state_ = 0;
    std::size_t current_action_ = 0;
    std::int64_t truncation_violations_ = 0;
};

}  // namespace pcnet::tucrl
