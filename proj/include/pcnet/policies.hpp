#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pcnet/net_model.hpp"

namespace pcnet {

enum class PolicyKind { kOmegaOnly, kQueueDependent };

/// One possible uncontrollable action with its probability.
struct ActionOutcome {
    double probability = 0.0;
    RoutingAction action;
};

/// Behaviour of the uncontrollable nodes, pi_u. The decision rule is exposed
/// as an explicit outcome distribution so that exact transition models can be
/// built from it; act() samples that distribution from the policy's own rng.
class UncontrollablePolicy {
public:
    virtual ~UncontrollablePolicy() = default;

    virtual PolicyKind kind() const = 0;
    virtual std::string name() const = 0;
    virtual std::unique_ptr<UncontrollablePolicy> clone() const = 0;

    /// Outcome distribution of f^u given the slot's event and backlog. Every
    /// action covers uncontrollable nodes only. kOmegaOnly policies ignore `q`.
    virtual std::vector<ActionOutcome> outcomes(const NetworkEvent& event,
                                                const QueueState& q) const = 0;

    RoutingAction act(const NetworkEvent& event, const QueueState& q);

    void seed(std::uint64_t seed) { rng_ = make_rng(seed, kPolicyStream); }

    static constexpr std::uint64_t kPolicyStream = 0x9d1c;

private:
    Rng rng_ = make_rng(0, kPolicyStream);
};

/// Queue-agnostic randomised routing: every slot each listed node independently
/// picks one (neighbour, flow) option with the given probability and offers
/// full link capacity; leftover probability mass means idle. Nodes without an
/// entry hold everything they receive.
class RandomChoicePolicy final : public UncontrollablePolicy {
public:
    struct Option {
        NodeId to = 0;
        FlowId flow = 0;
        double probability = 0.0;
        bool operator==(const Option&) const = default;
    };
    struct NodeRule {
        NodeId node = 0;
        std::vector<Option> options;
        bool operator==(const NodeRule&) const = default;
    };

    RandomChoicePolicy(const Network& network, std::vector<NodeRule> rules,
                       std::string name = "random_choice");

    PolicyKind kind() const override { return PolicyKind::kOmegaOnly; }
    std::string name() const override { return name_; }
    std::unique_ptr<UncontrollablePolicy> clone() const override;
    std::vector<ActionOutcome> outcomes(const NetworkEvent& event,
                                        const QueueState& q) const override;

    const std::vector<NodeRule>& rules() const { return rules_; }

private:
    struct Branch {
        double probability;
        std::optional<Transmission> send;
    };
    std::vector<std::vector<Branch>> branches_;
    std::vector<NodeRule> rules_;
    std::string name_;
};

/// Two uncontrollable relays feeding one sink whose service rates switch on
/// backlog thresholds:
///   (mu_a, mu_b) = low_b            if Q_b <= threshold
///                = high_b_low_a     if Q_a <= threshold and Q_b > threshold
///                = both_high        otherwise
/// Cases are checked in that order. A fractional rate mu is realised as a
/// full-capacity offer with probability mu, independently per relay.
class RelayThresholdPolicy final : public UncontrollablePolicy {
public:
    struct Rates {
        double a = 0.0;
        double b = 0.0;
        bool operator==(const Rates&) const = default;
    };
    struct Params {
        NodeId relay_a = 0;
        NodeId relay_b = 0;
        NodeId sink = 0;
        FlowId flow = 0;
        Packets threshold = 10;
        Rates low_b{0.5, 0.0};
        Rates high_b_low_a{0.0, 1.0};
        Rates both_high{0.25, 0.25};
        bool operator==(const Params&) const = default;
    };

    RelayThresholdPolicy(const Network& network, Params params);

    PolicyKind kind() const override { return PolicyKind::kQueueDependent; }
    std::string name() const override { return "relay_threshold"; }
    std::unique_ptr<UncontrollablePolicy> clone() const override;
    std::vector<ActionOutcome> outcomes(const NetworkEvent& event,
                                        const QueueState& q) const override;

    /// The (mu_a, mu_b) case selected by the backlog.
    Rates rates(const QueueState& q) const;
    const Params& params() const { return params_; }

private:
    Params params_;
    Packets capacity_a_;
    Packets capacity_b_;
};

/// Node 2 relays everything to node 3 at full rate; node 3 holds every packet.
std::unique_ptr<UncontrollablePolicy> fig2_policy(const Network& network);
/// Node 2 routes to node 3 or node 5 with equal probability; node 3 serves
/// flow 1->4 or flow 6->4 with equal probability.
std::unique_ptr<UncontrollablePolicy> scenario1_policy(const Network& network);
/// Threshold-switched service at relays 2 and 3 toward node 4.
std::unique_ptr<UncontrollablePolicy> scenario2_policy(const Network& network);

}  // namespace pcnet
