#include "pcnet/policies.hpp"

#include <cmath>
#include <stdexcept>

namespace pcnet {

namespace {

constexpr double kProbabilityTolerance = 1e-12;

void check_probability(double p) {
    if (!(p >= 0.0 && p <= 1.0 + kProbabilityTolerance))
        throw std::invalid_argument("probability outside [0, 1]");
}

Packets capacity_or_throw(const Topology& topo, NodeId from, NodeId to) {
    const auto link = topo.find_link(from, to);
    if (!link)
        throw std::invalid_argument("policy references missing link " + std::to_string(from + 1) +
                                    "->" + std::to_string(to + 1));
    return topo.link(*link).capacity;
}

}  // namespace

RoutingAction UncontrollablePolicy::act(const NetworkEvent& event, const QueueState& q) {
    const std::vector<ActionOutcome> dist = outcomes(event, q);
    if (dist.size() == 1) return dist.front().action;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng_);
    double acc = 0.0;
    for (const ActionOutcome& o : dist) {
        acc += o.probability;
        if (u < acc) return o.action;
    }
    return dist.back().action;
}

RandomChoicePolicy::RandomChoicePolicy(const Network& network, std::vector<NodeRule> rules,
                                       std::string name)
    : rules_(std::move(rules)), name_(std::move(name)) {
    const Topology& topo = network.topology();
    std::vector<bool> seen(topo.node_count(), false);
    for (const NodeRule& rule : rules_) {
        topo.require_node(rule.node);
        if (topo.is_controllable(rule.node))
            throw std::invalid_argument("random choice rule on controllable node " +
                                        std::to_string(rule.node + 1));
        if (seen[rule.node])
            throw std::invalid_argument("duplicate rule for node " + std::to_string(rule.node + 1));
        seen[rule.node] = true;

        std::vector<Branch> node_branches;
        double total = 0.0;
        for (const Option& opt : rule.options) {
            check_probability(opt.probability);
            if (opt.flow < 0 || opt.flow >= network.flow_count())
                throw std::invalid_argument("random choice rule names unknown flow");
            const Packets cap = capacity_or_throw(topo, rule.node, opt.to);
            total += opt.probability;
            if (opt.probability > 0.0)
                node_branches.push_back(
                    {opt.probability, Transmission{rule.node, opt.to, opt.flow, cap}});
        }
        if (total > 1.0 + kProbabilityTolerance)
            throw std::invalid_argument("option probabilities at node " +
                                        std::to_string(rule.node + 1) + " sum above 1");
        if (total < 1.0 - kProbabilityTolerance) node_branches.push_back({1.0 - total, std::nullopt});
        if (!node_branches.empty()) branches_.push_back(std::move(node_branches));
    }
}

std::unique_ptr<UncontrollablePolicy> RandomChoicePolicy::clone() const {
    return std::make_unique<RandomChoicePolicy>(*this);
}

std::vector<ActionOutcome> RandomChoicePolicy::outcomes(const NetworkEvent&,
                                                        const QueueState&) const {
    std::vector<ActionOutcome> out{ActionOutcome{1.0, {}}};
    for (const auto& node_branches : branches_) {
        std::vector<ActionOutcome> next;
        next.reserve(out.size() * node_branches.size());
        for (const ActionOutcome& partial : out)
            for (const Branch& b : node_branches) {
                ActionOutcome o{partial.probability * b.probability, partial.action};
                if (b.send) o.action.set(b.send->from, b.send->to, b.send->flow, b.send->rate);
                next.push_back(std::move(o));
            }
        out = std::move(next);
    }
    return out;
}

RelayThresholdPolicy::RelayThresholdPolicy(const Network& network, Params params)
    : params_(params) {
    const Topology& topo = network.topology();
    for (NodeId n : {params_.relay_a, params_.relay_b}) {
        topo.require_node(n);
        if (topo.is_controllable(n))
            throw std::invalid_argument("threshold relay " + std::to_string(n + 1) +
                                        " must be uncontrollable");
    }
    if (params_.relay_a == params_.relay_b)
        throw std::invalid_argument("threshold relays must differ");
    if (params_.flow < 0 || params_.flow >= network.flow_count())
        throw std::invalid_argument("threshold policy names unknown flow");
    for (const Rates& r : {params_.low_b, params_.high_b_low_a, params_.both_high}) {
        check_probability(r.a);
        check_probability(r.b);
    }
    capacity_a_ = capacity_or_throw(topo, params_.relay_a, params_.sink);
    capacity_b_ = capacity_or_throw(topo, params_.relay_b, params_.sink);
}

std::unique_ptr<UncontrollablePolicy> RelayThresholdPolicy::clone() const {
    return std::make_unique<RelayThresholdPolicy>(*this);
}

RelayThresholdPolicy::Rates RelayThresholdPolicy::rates(const QueueState& q) const {
    const Packets qa = q(params_.relay_a, params_.flow);
    const Packets qb = q(params_.relay_b, params_.flow);
    if (qb <= params_.threshold) return params_.low_b;
    if (qa <= params_.threshold) return params_.high_b_low_a;
    return params_.both_high;
}

std::vector<ActionOutcome> RelayThresholdPolicy::outcomes(const NetworkEvent&,
                                                          const QueueState& q) const {
    const Rates r = rates(q);
    std::vector<ActionOutcome> out;
    for (int send_a = 0; send_a < 2; ++send_a) {
        const double pa = send_a ? r.a : 1.0 - r.a;
        if (pa <= 0.0) continue;
        for (int send_b = 0; send_b < 2; ++send_b) {
            const double pb = send_b ? r.b : 1.0 - r.b;
            if (pb <= 0.0) continue;
            ActionOutcome o{pa * pb, {}};
            if (send_a) o.action.set(params_.relay_a, params_.sink, params_.flow, capacity_a_);
            if (send_b) o.action.set(params_.relay_b, params_.sink, params_.flow, capacity_b_);
            out.push_back(std::move(o));
        }
    }
    return out;
}

// Indices below are zero-based: index 1 is node 2, and so on.

std::unique_ptr<UncontrollablePolicy> fig2_policy(const Network& network) {
    return std::make_unique<RandomChoicePolicy>(
        network,
        std::vector<RandomChoicePolicy::NodeRule>{
            {1, {{2, 0, 1.0}}},
            {2, {}},
        },
        "fig2");
}

std::unique_ptr<UncontrollablePolicy> scenario1_policy(const Network& network) {
    return std::make_unique<RandomChoicePolicy>(
        network,
        std::vector<RandomChoicePolicy::NodeRule>{
            {1, {{2, 0, 0.5}, {4, 0, 0.5}}},
            {2, {{3, 0, 0.5}, {3, 1, 0.5}}},
        },
        "scenario1");
}

std::unique_ptr<UncontrollablePolicy> scenario2_policy(const Network& network) {
    RelayThresholdPolicy::Params params;
    params.relay_a = 1;
    params.relay_b = 2;
    params.sink = 3;
    params.flow = 0;
    return std::make_unique<RelayThresholdPolicy>(network, params);
}

}  // namespace pcnet
