#pragma once

#include <vector>

#include "pcnet/net_model.hpp"

namespace pcnet {

/// BackPressure / MaxWeight for the controllable nodes: each node sends the
/// (neighbour, flow) maximising capacity * (Q_ik - Q_jk) at full capacity,
/// idling when the best weight is <= 0. Ties go to the lowest (j, k).
RoutingAction maxweight_decide(const Network& network, const QueueState& q);

/// Tracking-MaxWeight virtual queues. x is the emulated backlog; y is the
/// signed imagined-minus-actual transmission tracker, one entry per
/// (link, flow), and stays zero on links leaving controllable nodes.
struct VirtualQueues {
    NodeFlowMatrix<double> x;
    std::vector<double> y;  // index link * flow_count + flow

    /// X(0) = Q(0), Y(0) = 0.
    static VirtualQueues initial(const Network& network, const QueueState& q0);

    double& y_at(std::size_t link, FlowId k, int flow_count) { return y[link * flow_count + k]; }
    double y_at(std::size_t link, FlowId k, int flow_count) const {
        return y[link * flow_count + k];
    }

    double x_total() const { return x.total(); }
    double y_abs_total() const;
};

struct TmwDecision {
    RoutingAction controllable;
    RoutingAction imagined;  ///< g^u: the imagined uncontrollable action
};

/// W_ijk = X_ik - X_jk - Y_ijk.
double tmw_weight(const Network& network, const VirtualQueues& vq, std::size_t link, FlowId k);

/// Maximises sum g_ijk * W_ijk over the joint action set. The objective is
/// separable across nodes under the one-neighbour constraint, so every node
/// (controllable or not) takes its own full-capacity argmax, idling if <= 0.
TmwDecision tmw_decide(const Network& network, const VirtualQueues& vq);

/// sum g_ijk * W_ijk for a joint action.
double tmw_objective(const Network& network, const VirtualQueues& vq, const RoutingAction& g);

/// X_ik <- [X_ik + a_ik + sum_j g_jik - sum_j g_ijk]^+ using offered g, and
/// Y_ijk <- Y_ijk + g_ijk - f~_ijk for uncontrollable i. `actual_uncontrollable`
/// holds the realised transmissions of the true uncontrollable action.
void tmw_update(const Network& network, VirtualQueues& vq, const TmwDecision& g,
                const RoutingAction& actual_uncontrollable, const NetworkEvent& event);

/// Right-hand side of the queue bound X_ik + sum_j Y_ijk - sum_{j in U} Y_jik.
NodeFlowMatrix<double> tmw_queue_bound(const Network& network, const VirtualQueues& vq);

/// Number of non-destination (i, k) with Q_ik > bound_ik + tolerance.
int tmw_bound_violations(const Network& network, const VirtualQueues& vq, const QueueState& q,
                         double tolerance = 1e-9);

/// Clips controllable offers to the backlog guaranteed to be on hand when the
/// slot starts: Q_ik, plus this slot's exogenous arrivals under cut-through.
RoutingAction queue_respecting(const Network& network, const RoutingAction& offered,
                               const QueueState& q, const NetworkEvent& event);

}  // namespace pcnet
