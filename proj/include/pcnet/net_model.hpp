#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace pcnet {

/// Zero-based node index. Config files and CSV labels use one-based ids.
using NodeId = int;
/// Zero-based flow (commodity) index.
using FlowId = int;
/// Packet counts and integer rates.
using Packets = std::int64_t;

using Rng = std::mt19937_64;

struct Link {
    NodeId src = 0;
    NodeId dst = 0;
    Packets capacity = 0;

    bool operator==(const Link&) const = default;
};

/// Directed graph with integer link capacities and a controllable /
/// uncontrollable node partition. Immutable after construction.
class Topology {
public:
    /// Every node not listed in `uncontrollable` is controllable. Links are
    /// stored sorted by (src, dst); that order is the "link order" used for
    /// action enumeration and tie-breaking.
    Topology(int node_count, std::vector<Link> links, std::vector<NodeId> uncontrollable,
             Packets bound);

    int node_count() const { return node_count_; }
    Packets bound() const { return bound_; }

    const std::vector<Link>& links() const { return links_; }
    const Link& link(std::size_t index) const { return links_.at(index); }
    /// Indices into links() of the links leaving `node`, in ascending dst order.
    const std::vector<std::size_t>& out_links(NodeId node) const;
    std::optional<std::size_t> find_link(NodeId src, NodeId dst) const;

    bool is_controllable(NodeId node) const;
    const std::vector<NodeId>& controllable_nodes() const { return controllable_; }
    const std::vector<NodeId>& uncontrollable_nodes() const { return uncontrollable_; }

    void require_node(NodeId node) const;

private:
    int node_count_;
    Packets bound_;
    std::vector<Link> links_;
    std::vector<std::vector<std::size_t>> out_links_;
    std::vector<bool> controllable_mask_;
    std::vector<NodeId> controllable_;
    std::vector<NodeId> uncontrollable_;
};

/// Per-slot exogenous arrivals: Binomial(bound, rate / bound), so the mean is
/// `rate` and the support is [0, bound].
class ArrivalProcess {
public:
    ArrivalProcess(double rate, Packets bound);

    double rate() const { return rate_; }
    Packets bound() const { return bound_; }

    Packets sample(Rng& rng) const;
    /// pmf()[x] = P(arrivals == x), x in [0, bound].
    std::vector<double> pmf() const;

private:
    double rate_;
    Packets bound_;
};

struct FlowSpec {
    NodeId source = 0;
    NodeId destination = 0;
    ArrivalProcess arrival{0.0, 1};
};

/// N x K matrix indexed by (node, flow).
template <class T>
class NodeFlowMatrix {
public:
    NodeFlowMatrix() = default;
    NodeFlowMatrix(int nodes, int flows, T fill = T{})
        : nodes_(nodes), flows_(flows), data_(static_cast<std::size_t>(nodes) * flows, fill) {}

    int nodes() const { return nodes_; }
    int flows() const { return flows_; }

    T& operator()(NodeId i, FlowId k) { return data_[index(i, k)]; }
    const T& operator()(NodeId i, FlowId k) const { return data_[index(i, k)]; }

    std::span<const T> values() const { return data_; }
    std::span<T> values() { return data_; }

    T total() const {
        T sum{};
        for (const T& v : data_) sum += v;
        return sum;
    }

    bool operator==(const NodeFlowMatrix&) const = default;

private:
    std::size_t index(NodeId i, FlowId k) const {
        return static_cast<std::size_t>(i) * flows_ + k;
    }

    int nodes_ = 0;
    int flows_ = 0;
    std::vector<T> data_;
};

using QueueState = NodeFlowMatrix<Packets>;

/// The slot's network event. Only the arrival component is modelled; link
/// capacities are fixed.
struct NetworkEvent {
    NodeFlowMatrix<Packets> arrivals;
};

struct Transmission {
    NodeId from = 0;
    NodeId to = 0;
    FlowId flow = 0;
    Packets rate = 0;

    bool operator==(const Transmission&) const = default;
};

/// Sparse offered-rate assignment f_ijk. Holds at most one positive entry per
/// transmitting node (one neighbour, one flow per slot).
class RoutingAction {
public:
    RoutingAction() = default;

    /// Adds f_{from,to,flow} = rate. Zero rates are ignored. Throws if `from`
    /// already transmits in this action.
    void set(NodeId from, NodeId to, FlowId flow, Packets rate);

    Packets offered(NodeId from, NodeId to, FlowId flow) const;
    const Transmission* entry_for(NodeId from) const;
    const std::vector<Transmission>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }

    /// Appends every entry of `other`; node coverage must not overlap.
    void merge(const RoutingAction& other);

    /// Throws unless every entry lies on an existing link within capacity and
    /// refers to a valid flow.
    void validate(const Topology& topology, int flow_count) const;

    bool operator==(const RoutingAction&) const = default;

private:
    std::vector<Transmission> entries_;
};

/// How a slot's transmissions may draw on packets.
enum class Forwarding {
    /// Only the beginning-of-slot backlog can be sent: f~ = min(f, Q).
    kStoreAndForward,
    /// Packets arriving during the slot (exogenous or relayed) may be sent on
    /// in the same slot. Resolved as the least fixed point of
    /// f~ = min(f, Q + a + inflow).
    kCutThrough,
};

std::string to_string(Forwarding mode);
Forwarding forwarding_from_string(const std::string& name);

/// Topology plus flows: everything needed to advance the queues.
class Network {
public:
    Network(Topology topology, std::vector<FlowSpec> flows,
            Forwarding forwarding = Forwarding::kStoreAndForward);

    const Topology& topology() const { return topology_; }
    const std::vector<FlowSpec>& flows() const { return flows_; }
    int node_count() const { return topology_.node_count(); }
    int flow_count() const { return static_cast<int>(flows_.size()); }
    Forwarding forwarding() const { return forwarding_; }

    bool is_destination(NodeId node, FlowId flow) const {
        return flows_[flow].destination == node;
    }

    QueueState empty_state() const { return QueueState(node_count(), flow_count()); }
    NetworkEvent empty_event() const { return {NodeFlowMatrix<Packets>(node_count(), flow_count())}; }

private:
    Topology topology_;
    std::vector<FlowSpec> flows_;
    Forwarding forwarding_;
};

/// One per-node action choice: idle, or send `flow` over link `link` at full
/// capacity.
struct NodeChoice {
    std::optional<std::size_t> link;
    FlowId flow = 0;

    bool idle() const { return !link.has_value(); }
    bool operator==(const NodeChoice&) const = default;
};

/// Idle first, then one choice per (outgoing link, flow) in (link, flow) order.
std::vector<NodeChoice> enumerate_node_actions(const Topology& topology, NodeId node,
                                               int flow_count);

/// Adds the transmission described by `choice` for `node` to `action`.
void apply_choice(const Topology& topology, NodeId node, const NodeChoice& choice,
                  RoutingAction& action);

/// f~_ijk = min(f_ijk, q[i][k]). The scheduling constraint leaves at most one
/// outgoing entry per node, so no backlog splitting is needed.
RoutingAction actual_transmissions(const QueueState& q, const RoutingAction& offered);

/// Forwarding-aware actuals; `kStoreAndForward` reduces to the overload above.
/// Destination rows never forward.
RoutingAction actual_transmissions(const Network& network, const QueueState& q,
                                   const NetworkEvent& event, const RoutingAction& offered);

struct StepResult {
    QueueState next;
    RoutingAction actual;
    Packets delivered = 0;
    /// Per-flow deliveries this slot.
    std::vector<Packets> delivered_by_flow;
};

/// Q(t+1) = Q + a + sum_j f~_jik - sum_j f~_ijk, with destination rows
/// absorbing (and counting) deliveries.
StepResult step(const Network& network, const QueueState& q, const RoutingAction& controllable,
                const RoutingAction& uncontrollable, const NetworkEvent& event);

/// Draws one slot of arrivals at every flow source.
NetworkEvent sample_arrivals(const Network& network, Rng& rng);

/// Seeds an independent generator for (seed, stream).
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace pcnet
