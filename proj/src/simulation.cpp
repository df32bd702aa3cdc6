#include "pcnet/simulation.hpp"

#include <stdexcept>

namespace pcnet {

NetworkEvent Controller::admit(const QueueState&, const NetworkEvent& event, Packets& dropped) {
    dropped = 0;
    return event;
}

void Controller::observe(const QueueState&, const NetworkEvent&, const StepResult&) {}

RoutingAction MaxWeightController::decide(const QueueState& q, const NetworkEvent&) {
    return maxweight_decide(*network_, q);
}

TmwController::TmwController(const Network& network, const QueueState& q0, bool check_queue_bound)
    : network_(&network),
      vq_(VirtualQueues::initial(network, q0)),
      check_bound_(check_queue_bound),
      imagined_sum_(network.topology().links().size() * network.flow_count(), 0.0) {}

RoutingAction TmwController::decide(const QueueState& q, const NetworkEvent& event) {
    last_ = tmw_decide(*network_, vq_);
    last_.controllable = queue_respecting(*network_, last_.controllable, q, event);
    return last_.controllable;
}

void TmwController::observe(const QueueState&, const NetworkEvent& admitted,
                            const StepResult& result) {
    const Topology& topo = network_->topology();
    RoutingAction actual_u;
    for (const Transmission& e : result.actual.entries())
        if (!topo.is_controllable(e.from)) actual_u.set(e.from, e.to, e.flow, e.rate);

    tmw_update(*network_, vq_, last_, actual_u, admitted);

    const int K = network_->flow_count();
    for (const Transmission& e : last_.imagined.entries()) {
        const std::size_t l = *topo.find_link(e.from, e.to);
        imagined_sum_[l * K + e.flow] +=
            static_cast<double>(e.rate) / static_cast<double>(topo.link(l).capacity);
    }
    ++slots_;
    if (check_bound_ && tmw_bound_violations(*network_, vq_, result.next) > 0) ++violations_;
}

double TmwController::imagined_share(std::size_t link, FlowId k) const {
    if (slots_ == 0) return 0.0;
    return imagined_sum_[link * network_->flow_count() + k] / static_cast<double>(slots_);
}

namespace {
constexpr std::uint64_t kArrivalStream = 0xa771;
}

Simulation::Simulation(const Network& network, std::unique_ptr<UncontrollablePolicy> policy,
                       std::unique_ptr<Controller> controller, std::uint64_t seed)
    : network_(&network),
      policy_(std::move(policy)),
      controller_(std::move(controller)),
      arrival_rng_(make_rng(seed, kArrivalStream)),
      q_(network.empty_state()) {
    if (!policy_ || !controller_) throw std::invalid_argument("simulation needs a policy and a controller");
    policy_->seed(seed);
}

const StepResult& Simulation::advance() {
    last_event_ = sample_arrivals(*network_, arrival_rng_);
    const NetworkEvent& event = last_event_;
    last_arrivals_ = event.arrivals.total();

    Packets dropped = 0;
    const NetworkEvent admitted = controller_->admit(q_, event, dropped);
    const RoutingAction fc = controller_->decide(q_, admitted);
    const RoutingAction fu = policy_->act(admitted, q_);

    last_ = step(*network_, q_, fc, fu, admitted);
    controller_->observe(q_, admitted, last_);
    q_ = last_.next;

    last_dropped_ = dropped;
    totals_.arrivals += last_arrivals_;
    totals_.dropped += dropped;
    totals_.delivered += last_.delivered;
    ++slot_;
    return last_;
}

}  // namespace pcnet
