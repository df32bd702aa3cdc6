#include "pcnet/net_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pcnet {

Topology::Topology(int node_count, std::vector<Link> links, std::vector<NodeId> uncontrollable,
                   Packets bound)
    : node_count_(node_count), bound_(bound), links_(std::move(links)) {
    if (node_count_ <= 0) throw std::invalid_argument("topology needs at least one node");
    if (bound_ <= 0) throw std::invalid_argument("bound D must be positive");

    std::sort(links_.begin(), links_.end(), [](const Link& a, const Link& b) {
        return a.src != b.src ? a.src < b.src : a.dst < b.dst;
    });
    out_links_.assign(node_count_, {});
    for (std::size_t l = 0; l < links_.size(); ++l) {
        const Link& link = links_[l];
        require_node(link.src);
        require_node(link.dst);
        if (link.src == link.dst)
            throw std::invalid_argument("self-loop link at node " + std::to_string(link.src + 1));
        if (link.capacity < 0 || link.capacity > bound_)
            throw std::invalid_argument("link capacity outside [0, D] on " +
                                        std::to_string(link.src + 1) + "->" +
                                        std::to_string(link.dst + 1));
        if (l > 0 && links_[l - 1].src == link.src && links_[l - 1].dst == link.dst)
            throw std::invalid_argument("duplicate link " + std::to_string(link.src + 1) + "->" +
                                        std::to_string(link.dst + 1));
        out_links_[link.src].push_back(l);
    }

    controllable_mask_.assign(node_count_, true);
    for (NodeId u : uncontrollable) {
        require_node(u);
        if (!controllable_mask_[u])
            throw std::invalid_argument("node " + std::to_string(u + 1) +
                                        " listed twice as uncontrollable");
        controllable_mask_[u] = false;
    }
    for (NodeId i = 0; i < node_count_; ++i)
        (controllable_mask_[i] ? controllable_ : uncontrollable_).push_back(i);
}

const std::vector<std::size_t>& Topology::out_links(NodeId node) const {
    require_node(node);
    return out_links_[node];
}

std::optional<std::size_t> Topology::find_link(NodeId src, NodeId dst) const {
    if (src < 0 || src >= node_count_) return std::nullopt;
    for (std::size_t l : out_links_[src])
        if (links_[l].dst == dst) return l;
    return std::nullopt;
}

bool Topology::is_controllable(NodeId node) const {
    require_node(node);
    return controllable_mask_[node];
}

void Topology::require_node(NodeId node) const {
    if (node < 0 || node >= node_count_)
        throw std::out_of_range("unknown node " + std::to_string(node + 1));
}

ArrivalProcess::ArrivalProcess(double rate, Packets bound) : rate_(rate), bound_(bound) {
    if (bound_ <= 0) throw std::invalid_argument("arrival bound D must be positive");
    if (!(rate_ >= 0.0)) throw std::invalid_argument("arrival rate must be nonnegative");
    if (rate_ > static_cast<double>(bound_))
        throw std::invalid_argument("arrival rate " + std::to_string(rate_) +
                                    " exceeds bound D=" + std::to_string(bound_));
}

Packets ArrivalProcess::sample(Rng& rng) const {
    if (rate_ == 0.0) return 0;
    if (rate_ == static_cast<double>(bound_)) return bound_;
    std::binomial_distribution<Packets> dist(bound_, rate_ / static_cast<double>(bound_));
    return dist(rng);
}

std::vector<double> ArrivalProcess::pmf() const {
    const double p = rate_ / static_cast<double>(bound_);
    std::vector<double> out(static_cast<std::size_t>(bound_) + 1, 0.0);
    if (p <= 0.0) {
        out.front() = 1.0;
        return out;
    }
    if (p >= 1.0) {
        out.back() = 1.0;
        return out;
    }
    const double n = static_cast<double>(bound_);
    for (Packets x = 0; x <= bound_; ++x) {
        const double xd = static_cast<double>(x);
        const double log_choose = std::lgamma(n + 1) - std::lgamma(xd + 1) - std::lgamma(n - xd + 1);
        out[x] = std::exp(log_choose + xd * std::log(p) + (n - xd) * std::log1p(-p));
    }
    return out;
}

void RoutingAction::set(NodeId from, NodeId to, FlowId flow, Packets rate) {
    if (rate < 0) throw std::invalid_argument("negative offered rate");
    if (rate == 0) return;
    if (entry_for(from) != nullptr)
        throw std::invalid_argument("node " + std::to_string(from + 1) +
                                    " already transmits in this slot");
    entries_.push_back({from, to, flow, rate});
}

Packets RoutingAction::offered(NodeId from, NodeId to, FlowId flow) const {
    const Transmission* e = entry_for(from);
    return (e != nullptr && e->to == to && e->flow == flow) ? e->rate : 0;
}

const Transmission* RoutingAction::entry_for(NodeId from) const {
    for (const Transmission& e : entries_)
        if (e.from == from) return &e;
    return nullptr;
}

void RoutingAction::merge(const RoutingAction& other) {
    for (const Transmission& e : other.entries_) set(e.from, e.to, e.flow, e.rate);
}

void RoutingAction::validate(const Topology& topology, int flow_count) const {
    for (const Transmission& e : entries_) {
        const auto link = topology.find_link(e.from, e.to);
        if (!link)
            throw std::invalid_argument("offered rate on missing link " +
                                        std::to_string(e.from + 1) + "->" +
                                        std::to_string(e.to + 1));
        if (e.rate > topology.link(*link).capacity)
            throw std::invalid_argument("offered rate exceeds capacity on " +
                                        std::to_string(e.from + 1) + "->" +
                                        std::to_string(e.to + 1));
        if (e.flow < 0 || e.flow >= flow_count)
            throw std::invalid_argument("unknown flow " + std::to_string(e.flow));
    }
}

std::string to_string(Forwarding mode) {
    return mode == Forwarding::kCutThrough ? "cut_through" : "store_and_forward";
}

Forwarding forwarding_from_string(const std::string& name) {
    if (name == "cut_through") return Forwarding::kCutThrough;
    if (name == "store_and_forward") return Forwarding::kStoreAndForward;
    throw std::invalid_argument("unknown forwarding mode '" + name +
                                "' (expected store_and_forward or cut_through)");
}

Network::Network(Topology topology, std::vector<FlowSpec> flows, Forwarding forwarding)
    : topology_(std::move(topology)), flows_(std::move(flows)), forwarding_(forwarding) {
    for (std::size_t k = 0; k < flows_.size(); ++k) {
        const FlowSpec& f = flows_[k];
        topology_.require_node(f.source);
        topology_.require_node(f.destination);
        if (f.source == f.destination)
            throw std::invalid_argument("flow " + std::to_string(k + 1) +
                                        " has identical source and destination");
        if (f.arrival.bound() > topology_.bound())
            throw std::invalid_argument("flow " + std::to_string(k + 1) +
                                        " arrival bound exceeds D");
    }
}

std::vector<NodeChoice> enumerate_node_actions(const Topology& topology, NodeId node,
                                               int flow_count) {
    std::vector<NodeChoice> choices{NodeChoice{}};
    for (std::size_t l : topology.out_links(node))
        for (FlowId k = 0; k < flow_count; ++k) choices.push_back({l, k});
    return choices;
}

void apply_choice(const Topology& topology, NodeId node, const NodeChoice& choice,
                  RoutingAction& action) {
    if (choice.idle()) return;
    const Link& link = topology.link(*choice.link);
    if (link.src != node) throw std::invalid_argument("choice link does not leave node");
    action.set(node, link.dst, choice.flow, link.capacity);
}

RoutingAction actual_transmissions(const QueueState& q, const RoutingAction& offered) {
    RoutingAction out;
    for (const Transmission& e : offered.entries())
        out.set(e.from, e.to, e.flow, std::min(e.rate, q(e.from, e.flow)));
    return out;
}

RoutingAction actual_transmissions(const Network& network, const QueueState& q,
                                   const NetworkEvent& event, const RoutingAction& offered) {
    const auto& entries = offered.entries();
    std::vector<Packets> sent(entries.size(), 0);

    auto available_base = [&](const Transmission& e) -> Packets {
        if (network.is_destination(e.from, e.flow)) return 0;
        Packets base = q(e.from, e.flow);
        if (network.forwarding() == Forwarding::kCutThrough)
            base += event.arrivals(e.from, e.flow);
        return base;
    };
    for (std::size_t n = 0; n < entries.size(); ++n)
        sent[n] = std::min(entries[n].rate, available_base(entries[n]));

    if (network.forwarding() == Forwarding::kCutThrough) {
        // Monotone iteration from the store-and-forward point; each pass can
        // only raise entries bounded by their offered rate, so it terminates.
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::size_t n = 0; n < entries.size(); ++n) {
                const Transmission& e = entries[n];
                if (network.is_destination(e.from, e.flow)) continue;
                Packets inflow = 0;
                for (std::size_t m = 0; m < entries.size(); ++m)
                    if (entries[m].to == e.from && entries[m].flow == e.flow) inflow += sent[m];
                const Packets now = std::min(e.rate, available_base(e) + inflow);
                if (now != sent[n]) {
                    sent[n] = now;
                    changed = true;
                }
            }
        }
    }

    RoutingAction out;
    for (std::size_t n = 0; n < entries.size(); ++n)
        out.set(entries[n].from, entries[n].to, entries[n].flow, sent[n]);
    return out;
}

StepResult step(const Network& network, const QueueState& q, const RoutingAction& controllable,
                const RoutingAction& uncontrollable, const NetworkEvent& event) {
    const Topology& topo = network.topology();
    for (const Transmission& e : controllable.entries())
        if (!topo.is_controllable(e.from))
            throw std::invalid_argument("controllable action covers uncontrollable node " +
                                        std::to_string(e.from + 1));
    for (const Transmission& e : uncontrollable.entries())
        if (topo.is_controllable(e.from))
            throw std::invalid_argument("uncontrollable action covers controllable node " +
                                        std::to_string(e.from + 1));

    RoutingAction offered = controllable;
    offered.merge(uncontrollable);
    offered.validate(topo, network.flow_count());

    StepResult result;
    result.actual = actual_transmissions(network, q, event, offered);
    result.next = q;
    result.delivered_by_flow.assign(network.flow_count(), 0);
    for (NodeId i = 0; i < network.node_count(); ++i)
        for (FlowId k = 0; k < network.flow_count(); ++k)
            result.next(i, k) += event.arrivals(i, k);
    for (const Transmission& e : result.actual.entries()) {
        result.next(e.from, e.flow) -= e.rate;
        result.next(e.to, e.flow) += e.rate;
    }
    for (FlowId k = 0; k < network.flow_count(); ++k) {
        const NodeId dest = network.flows()[k].destination;
        result.delivered_by_flow[k] = result.next(dest, k);
        result.delivered += result.next(dest, k);
        result.next(dest, k) = 0;
    }
    for (Packets v : result.next.values())
        if (v < 0) throw std::logic_error("queue went negative");
    return result;
}

NetworkEvent sample_arrivals(const Network& network, Rng& rng) {
    NetworkEvent event = network.empty_event();
    for (FlowId k = 0; k < network.flow_count(); ++k) {
        const FlowSpec& flow = network.flows()[k];
        event.arrivals(flow.source, k) = flow.arrival.sample(rng);
    }
    return event;
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

}  // namespace pcnet
