#include "pcnet/controllers.hpp"

#include <algorithm>
#include <cmath>

namespace pcnet {

namespace {

// Picks the full-capacity (link, flow) with the largest positive
// capacity * weight, lowest index on ties. Links are sorted by dst, so scanning
// in (link, flow) order realises lowest-(j, k) tie-breaking.
template <class WeightFn>
void best_choice_for(const Network& network, NodeId node, WeightFn weight,
                     RoutingAction& action) {
    const Topology& topo = network.topology();
    double best = 0.0;
    const Link* best_link = nullptr;
    FlowId best_flow = 0;
    for (std::size_t l : topo.out_links(node)) {
        const Link& link = topo.link(l);
        for (FlowId k = 0; k < network.flow_count(); ++k) {
            const double w = static_cast<double>(link.capacity) * weight(l, k);
            if (w > best) {
                best = w;
                best_link = &link;
                best_flow = k;
            }
        }
    }
    if (best_link != nullptr) action.set(node, best_link->dst, best_flow, best_link->capacity);
}

}  // namespace

RoutingAction maxweight_decide(const Network& network, const QueueState& q) {
    const Topology& topo = network.topology();
    RoutingAction action;
    for (NodeId i : topo.controllable_nodes()) {
        best_choice_for(
            network, i,
            [&](std::size_t l, FlowId k) {
                const NodeId j = topo.link(l).dst;
                return static_cast<double>(q(i, k) - q(j, k));
            },
            action);
    }
    return action;
}

VirtualQueues VirtualQueues::initial(const Network& network, const QueueState& q0) {
    VirtualQueues vq;
    vq.x = NodeFlowMatrix<double>(network.node_count(), network.flow_count());
    for (NodeId i = 0; i < network.node_count(); ++i)
        for (FlowId k = 0; k < network.flow_count(); ++k)
            vq.x(i, k) = static_cast<double>(q0(i, k));
    vq.y.assign(network.topology().links().size() * network.flow_count(), 0.0);
    return vq;
}

double VirtualQueues::y_abs_total() const {
    double sum = 0.0;
    for (double v : y) sum += std::abs(v);
    return sum;
}

double tmw_weight(const Network& network, const VirtualQueues& vq, std::size_t link, FlowId k) {
    const Link& l = network.topology().link(link);
    return vq.x(l.src, k) - vq.x(l.dst, k) - vq.y_at(link, k, network.flow_count());
}

TmwDecision tmw_decide(const Network& network, const VirtualQueues& vq) {
    const Topology& topo = network.topology();
    TmwDecision d;
    for (NodeId i = 0; i < topo.node_count(); ++i) {
        RoutingAction& target = topo.is_controllable(i) ? d.controllable : d.imagined;
        best_choice_for(
            network, i, [&](std::size_t l, FlowId k) { return tmw_weight(network, vq, l, k); },
            target);
    }
    return d;
}

double tmw_objective(const Network& network, const VirtualQueues& vq, const RoutingAction& g) {
    const Topology& topo = network.topology();
    double sum = 0.0;
    for (const Transmission& e : g.entries()) {
        const auto link = topo.find_link(e.from, e.to);
        sum += static_cast<double>(e.rate) * tmw_weight(network, vq, *link, e.flow);
    }
    return sum;
}

void tmw_update(const Network& network, VirtualQueues& vq, const TmwDecision& g,
                const RoutingAction& actual_uncontrollable, const NetworkEvent& event) {
    const Topology& topo = network.topology();
    const int K = network.flow_count();

    NodeFlowMatrix<double> drift(network.node_count(), K);
    for (NodeId i = 0; i < network.node_count(); ++i)
        for (FlowId k = 0; k < K; ++k) drift(i, k) = static_cast<double>(event.arrivals(i, k));
    for (const RoutingAction* part : {&g.controllable, &g.imagined})
        for (const Transmission& e : part->entries()) {
            drift(e.from, e.flow) -= static_cast<double>(e.rate);
            drift(e.to, e.flow) += static_cast<double>(e.rate);
        }
    for (NodeId i = 0; i < network.node_count(); ++i)
        for (FlowId k = 0; k < K; ++k)
            vq.x(i, k) = network.is_destination(i, k) ? 0.0 : std::max(0.0, vq.x(i, k) + drift(i, k));

    for (NodeId i : topo.uncontrollable_nodes())
        for (std::size_t l : topo.out_links(i)) {
            const NodeId j = topo.link(l).dst;
            for (FlowId k = 0; k < K; ++k) {
                const double delta = static_cast<double>(g.imagined.offered(i, j, k)) -
                                     static_cast<double>(actual_uncontrollable.offered(i, j, k));
                vq.y_at(l, k, K) += delta;
            }
        }
}

NodeFlowMatrix<double> tmw_queue_bound(const Network& network, const VirtualQueues& vq) {
    const Topology& topo = network.topology();
    const int K = network.flow_count();
    NodeFlowMatrix<double> bound = vq.x;
    for (std::size_t l = 0; l < topo.links().size(); ++l) {
        const Link& link = topo.link(l);
        for (FlowId k = 0; k < K; ++k) {
            const double y = vq.y_at(l, k, K);
            bound(link.src, k) += y;
            if (!topo.is_controllable(link.src)) bound(link.dst, k) -= y;
        }
    }
    return bound;
}

int tmw_bound_violations(const Network& network, const VirtualQueues& vq, const QueueState& q,
                         double tolerance) {
    const NodeFlowMatrix<double> bound = tmw_queue_bound(network, vq);
    int violations = 0;
    for (NodeId i = 0; i < network.node_count(); ++i)
        for (FlowId k = 0; k < network.flow_count(); ++k)
            if (!network.is_destination(i, k) &&
                static_cast<double>(q(i, k)) > bound(i, k) + tolerance)
                ++violations;
    return violations;
}

RoutingAction queue_respecting(const Network& network, const RoutingAction& offered,
                               const QueueState& q, const NetworkEvent& event) {
    RoutingAction out;
    for (const Transmission& e : offered.entries()) {
        Packets on_hand = q(e.from, e.flow);
        if (network.forwarding() == Forwarding::kCutThrough)
            on_hand += event.arrivals(e.from, e.flow);
        out.set(e.from, e.to, e.flow, std::min(e.rate, on_hand));
    }
    return out;
}

}  // namespace pcnet
