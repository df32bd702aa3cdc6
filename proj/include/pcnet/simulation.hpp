#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pcnet/controllers.hpp"
#include "pcnet/net_model.hpp"
#include "pcnet/policies.hpp"

namespace pcnet {

/// Controllable-side decision maker plugged into a Simulation.
class Controller {
public:
    virtual ~Controller() = default;

    virtual std::string name() const = 0;

    /// Admission control. Returns the admitted event; `dropped` receives the
    /// number of shed packets. The default admits everything.
    virtual NetworkEvent admit(const QueueState& q, const NetworkEvent& event, Packets& dropped);

    /// f^c for this slot, covering controllable nodes only.
    virtual RoutingAction decide(const QueueState& q, const NetworkEvent& event) = 0;

    /// Called after the slot is resolved.
    virtual void observe(const QueueState& before, const NetworkEvent& admitted,
                         const StepResult& result);
};

class MaxWeightController final : public Controller {
public:
    explicit MaxWeightController(const Network& network) : network_(&network) {}

    std::string name() const override { return "maxweight"; }
    RoutingAction decide(const QueueState& q, const NetworkEvent& event) override;

private:
    const Network* network_;
};

class TmwController final : public Controller {
public:
    TmwController(const Network& network, const QueueState& q0, bool check_queue_bound);

    std::string name() const override { return "tmw"; }
    RoutingAction decide(const QueueState& q, const NetworkEvent& event) override;
    void observe(const QueueState& before, const NetworkEvent& admitted,
                 const StepResult& result) override;

    const VirtualQueues& virtual_queues() const { return vq_; }
    /// Slots in which some non-destination queue exceeded its virtual bound.
    std::int64_t bound_violations() const { return violations_; }
    /// Running mean of g_ijk / capacity(i, j) over elapsed slots, for each
    /// (link, flow) leaving an uncontrollable node; index link * K + flow.
    double imagined_share(std::size_t link, FlowId k) const;

private:
    const Network* network_;
    VirtualQueues vq_;
    TmwDecision last_;
    bool check_bound_;
    std::int64_t violations_ = 0;
    std::int64_t slots_ = 0;
    std::vector<double> imagined_sum_;
};

struct Totals {
    Packets arrivals = 0;   ///< exogenous arrivals offered to the network
    Packets delivered = 0;
    Packets dropped = 0;
};

/// One run: network, uncontrollable policy, controller and the random
/// streams. Arrivals and policy randomness come from independent streams.
class Simulation {
public:
    Simulation(const Network& network, std::unique_ptr<UncontrollablePolicy> policy,
               std::unique_ptr<Controller> controller, std::uint64_t seed);

    /// Advances one slot and returns the resolved step.
    const StepResult& advance();

    std::int64_t slot() const { return slot_; }
    const QueueState& queues() const { return q_; }
    const Totals& totals() const { return totals_; }
    const Network& network() const { return *network_; }
    Controller& controller() { return *controller_; }
    const Controller& controller() const { return *controller_; }
    const UncontrollablePolicy& policy() const { return *policy_; }
    const StepResult& last_step() const { return last_; }
    /// Arrivals sampled this slot, before admission control.
    const NetworkEvent& last_event() const { return last_event_; }
    Packets last_arrivals() const { return last_arrivals_; }
    Packets last_dropped() const { return last_dropped_; }

private:
    const Network* network_;
    std::unique_ptr<UncontrollablePolicy> policy_;
    std::unique_ptr<Controller> controller_;
    Rng arrival_rng_;
    QueueState q_;
    std::int64_t slot_ = 0;
    Totals totals_;
    StepResult last_;
    NetworkEvent last_event_;
    Packets last_arrivals_ = 0;
    Packets last_dropped_ = 0;
};

}  // namespace pcnet
