#include "pcnet/tucrl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace pcnet::tucrl {

namespace {

constexpr std::size_t kMaxGridCells = 50'000'000;

}  // namespace

TruncatedStateSpace::TruncatedStateSpace(const Network& network, Packets V, std::size_t max_states)
    : node_count_(network.node_count()), flow_count_(network.flow_count()), V_(V) {
    if (V < 1) throw std::invalid_argument("truncation threshold must be at least 1");
    for (NodeId i = 0; i < node_count_; ++i)
        for (FlowId k = 0; k < flow_count_; ++k)
            if (!network.is_destination(i, k)) dims_.emplace_back(i, k);

    const int m = dimension();
    std::size_t cells = 1;
    for (int d = 0; d < m; ++d) {
        if (cells > kMaxGridCells / static_cast<std::size_t>(V))
            throw std::invalid_argument("truncated state space too large: " + std::to_string(m) +
                                        " queues at V = " + std::to_string(V));
        cells *= static_cast<std::size_t>(V);
    }

    grid_to_state_.assign(cells, npos);
    std::vector<Packets> c(m, 0);
    for (std::size_t cell = 0; cell < cells; ++cell) {
        Packets sum = 0;
        for (Packets x : c) sum += x;
        if (sum <= V - 1) {
            if (totals_.size() >= max_states)
                throw std::invalid_argument("truncated state space exceeds " +
                                            std::to_string(max_states) + " states at V = " +
                                            std::to_string(V));
            grid_to_state_[cell] = totals_.size();
            state_to_grid_.push_back(cell);
            totals_.push_back(sum);
            coords_.insert(coords_.end(), c.begin(), c.end());
        }
        for (int d = 0; d < m; ++d) {
            if (++c[d] < V) break;
            c[d] = 0;
        }
    }
}

std::size_t TruncatedStateSpace::index_of(const QueueState& q) const {
    std::size_t cell = 0;
    std::size_t stride = 1;
    Packets sum = 0;
    for (const auto& [i, k] : dims_) {
        const Packets x = q(i, k);
        if (x < 0 || x > V_ - 1) throw std::out_of_range("queue state outside truncated space");
        sum += x;
        cell += static_cast<std::size_t>(x) * stride;
        stride *= static_cast<std::size_t>(V_);
    }
    const std::size_t s = sum <= V_ - 1 ? grid_to_state_[cell] : npos;
    if (s == npos) throw std::out_of_range("queue state outside truncated space");
    if (q.total() != sum) throw std::out_of_range("destination backlog is not representable");
    return s;
}

QueueState TruncatedStateSpace::state_at(std::size_t index) const {
    QueueState q(node_count_, flow_count_);
    const auto c = coords(index);
    for (std::size_t d = 0; d < dims_.size(); ++d) q(dims_[d].first, dims_[d].second) = c[d];
    return q;
}

std::span<const Packets> TruncatedStateSpace::coords(std::size_t index) const {
    return std::span<const Packets>(coords_).subspan(index * dims_.size(), dims_.size());
}

ActionSpace::ActionSpace(const Network& network, std::size_t max_actions)
    : topo_(&network.topology()) {
    for (NodeId i : topo_->controllable_nodes()) {
        per_node_.push_back(enumerate_node_actions(*topo_, i, network.flow_count()));
        size_ *= per_node_.back().size();
        if (size_ > max_actions)
            throw std::invalid_argument("controllable action space exceeds " +
                                        std::to_string(max_actions) + " joint actions");
    }
}

RoutingAction ActionSpace::action(std::size_t index) const {
    if (index >= size_) throw std::out_of_range("action index out of range");
    RoutingAction out;
    const auto& nodes = topo_->controllable_nodes();
    for (std::size_t n = per_node_.size(); n-- > 0;) {
        const auto& choices = per_node_[n];
        apply_choice(*topo_, nodes[n], choices[index % choices.size()], out);
        index /= choices.size();
    }
    return out;
}

MdpModel::MdpModel(std::size_t states, std::size_t actions)
    : states_(states),
      actions_(actions),
      n_(states * actions, 0),
      v_(states * actions, 0),
      n3_(states * actions) {}

void MdpModel::record(std::size_t s, std::size_t a, std::size_t next) {
    if (s >= states_ || a >= actions_ || next >= states_)
        throw std::out_of_range("state or action outside the model");
    const std::size_t idx = s * actions_ + a;
    ++v_[idx];
    pending_.emplace_back(idx, next);
}

void MdpModel::end_episode(std::int64_t slot) {
    for (const auto& [idx, next] : pending_) {
        if (n_[idx]++ == 0) ++visited_;
        auto& row = n3_[idx];
        auto it = std::lower_bound(row.begin(), row.end(), next,
                                   [](const auto& e, std::size_t s) { return e.first < s; });
        if (it != row.end() && it->first == next)
            ++it->second;
        else
            row.insert(it, {next, 1});
        v_[idx] = 0;
    }
    pending_.clear();
    t_start_ = slot;
    ++episode_;
}

SparseDistribution estimate_transitions(const MdpModel& model, std::size_t s, std::size_t a) {
    SparseDistribution out;
    const std::uint64_t n = model.visits(s, a);
    if (n == 0) return out;
    const auto& row = model.transitions(s, a);
    out.reserve(row.size());
    for (const auto& [next, count] : row)
        out.emplace_back(next, static_cast<double>(count) / static_cast<double>(n));
    return out;
}

std::vector<double> estimate_transitions_dense(const MdpModel& model, std::size_t s,
                                               std::size_t a) {
    std::vector<double> out(model.states(), 0.0);
    for (const auto& [next, p] : estimate_transitions(model, s, a)) out[next] = p;
    return out;
}

double confidence_constant(int node_count, Packets bound) {
    return 2.0 * std::pow(2.0 * node_count * static_cast<double>(bound) + 1.0, node_count);
}

double confidence_radius(std::uint64_t n, std::int64_t t_episode, int node_count, Packets bound,
                         std::size_t action_count, Packets V, double scale) {
    const double t = static_cast<double>(std::max<std::int64_t>(1, t_episode));
    const double log_term =
        std::log(2.0 * static_cast<double>(action_count) * t * static_cast<double>(V));
    const double r = std::sqrt(scale * confidence_constant(node_count, bound) * log_term /
                               static_cast<double>(std::max<std::uint64_t>(1, n)));
    return std::min(2.0, r);
}

namespace {

// Moves up to d/2 mass onto `best` and strips the surplus from the highest
// values first. `p` holds the estimate on entry and the optimistic law on exit.
double optimistic_fill(SparseDistribution& p, double d, std::size_t best,
                       std::span<const double> values) {
    auto it = std::find_if(p.begin(), p.end(), [&](const auto& e) { return e.first == best; });
    if (it == p.end()) {
        p.emplace_back(best, 0.0);
        it = std::prev(p.end());
    }
    std::iter_swap(it, std::prev(p.end()));
    auto& target = p.back();
    target.second = std::min(1.0, target.second + d / 2.0);

    double sum = 0.0;
    for (const auto& e : p) sum += e.second;
    if (sum < 1.0 - 1e-9)
        throw std::invalid_argument("optimistic distribution needs radius 2 for an empty estimate");

    std::sort(p.begin(), std::prev(p.end()), [&](const auto& x, const auto& y) {
        const double vx = values[x.first];
        const double vy = values[y.first];
        return vx != vy ? vx > vy : x.first > y.first;
    });
    double excess = sum - 1.0;
    double objective = target.second * values[best];
    for (auto e = p.begin(); e != std::prev(p.end()); ++e) {
        if (excess > 0.0) {
            const double take = std::min(e->second, excess);
            e->second -= take;
            excess -= take;
        }
        objective += e->second * values[e->first];
    }
    return objective;
}

}  // namespace

std::vector<double> optimistic_distribution(std::span<const double> p_hat, double d,
                                            std::span<const double> values) {
    if (p_hat.size() != values.size() || values.empty())
        throw std::invalid_argument("estimate and values must have the same nonzero length");
    if (!(d >= 0.0 && d <= 2.0)) throw std::invalid_argument("radius outside [0, 2]");
    const std::size_t best =
        static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
    SparseDistribution p;
    for (std::size_t s = 0; s < p_hat.size(); ++s)
        if (p_hat[s] > 0.0) p.emplace_back(s, p_hat[s]);
    optimistic_fill(p, d, best, values);
    std::vector<double> out(p_hat.size(), 0.0);
    for (const auto& [s, mass] : p) out[s] = mass;
    return out;
}

double optimistic_value(const SparseDistribution& p_hat, double d, std::size_t best,
                        std::span<const double> values, SparseDistribution& scratch) {
    if (p_hat.empty() || d >= 2.0) {
        if (p_hat.empty() && d < 2.0)
            throw std::invalid_argument(
                "optimistic distribution needs radius 2 for an empty estimate");
        return values[best];
    }
    scratch.assign(p_hat.begin(), p_hat.end());
    return optimistic_fill(scratch, d, best, values);
}

void AllStates::argmin(std::span<const double> values, std::span<std::size_t> out) const {
    const std::size_t best =
        static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
    std::fill(out.begin(), out.end(), best);
}

GridBox::GridBox(const TruncatedStateSpace& space, Packets radius)
    : space_(&space), radius_(radius) {
    if (radius < 0) throw std::invalid_argument("neighbourhood radius must be nonnegative");
}

namespace {

struct Keyed {
    double value;
    std::size_t state;
    bool operator<(const Keyed& o) const {
        return value != o.value ? value < o.value : state < o.state;
    }
};

}  // namespace

void GridBox::argmin(std::span<const double> values, std::span<std::size_t> out) const {
    const TruncatedStateSpace& sp = *space_;
    const std::size_t cells = sp.grid_size();
    const std::size_t V = static_cast<std::size_t>(sp.truncation());
    const Keyed empty{std::numeric_limits<double>::infinity(), TruncatedStateSpace::npos};

    std::vector<Keyed> grid(cells, empty);
    for (std::size_t s = 0; s < sp.size(); ++s) grid[sp.grid_cell(s)] = Keyed{values[s], s};

    // Separable box minimum: one 1-D window pass per axis over the full grid.
    std::vector<Keyed> line(V);
    const std::size_t r = static_cast<std::size_t>(radius_);
    std::size_t stride = 1;
    for (int d = 0; d < sp.dimension(); ++d) {
        const std::size_t block = stride * V;
        for (std::size_t base = 0; base < cells; base += block)
            for (std::size_t off = 0; off < stride; ++off) {
                const std::size_t start = base + off;
                for (std::size_t p = 0; p < V; ++p) line[p] = grid[start + p * stride];
                for (std::size_t p = 0; p < V; ++p) {
                    const std::size_t lo = p >= r ? p - r : 0;
                    const std::size_t hi = std::min(V - 1, p + r);
                    Keyed m = line[lo];
                    for (std::size_t q = lo + 1; q <= hi; ++q)
                        if (line[q] < m) m = line[q];
                    grid[start + p * stride] = m;
                }
            }
        stride = block;
    }
    for (std::size_t s = 0; s < sp.size(); ++s) out[s] = grid[sp.grid_cell(s)].state;
}

EviResult extended_value_iteration(const PlanningProblem& problem, double epsilon,
                                   std::size_t max_iterations, std::span<const double> initial) {
    const std::size_t S = problem.states;
    const std::size_t A = problem.actions;
    if (S == 0 || A == 0) throw std::invalid_argument("empty planning problem");
    if (problem.cost.size() != S || problem.pairs.size() != S * A)
        throw std::invalid_argument("planning tables do not match the state/action counts");
    if (!initial.empty() && initial.size() != S)
        throw std::invalid_argument("initial values do not match the state count");
    AllStates everywhere;
    const Neighbourhoods& reachable =
        problem.reachable != nullptr ? *problem.reachable : static_cast<const Neighbourhoods&>(everywhere);

    std::vector<double> w(S, 0.0);
    if (!initial.empty()) std::copy(initial.begin(), initial.end(), w.begin());
    std::vector<double> next(S);
    std::vector<std::size_t> best(S);
    std::vector<std::size_t> policy(S, 0);
    SparseDistribution scratch;
    double span = std::numeric_limits<double>::infinity();

    for (std::size_t it = 1; it <= max_iterations; ++it) {
        reachable.argmin(w, best);
        for (std::size_t s = 0; s < S; ++s) {
            double q_best = std::numeric_limits<double>::infinity();
            std::size_t a_best = 0;
            for (std::size_t a = 0; a < A; ++a) {
                const PairModel& m = problem.pairs[s * A + a];
                const double q = problem.cost[s] + optimistic_value(m.p_hat, m.radius, best[s], w, scratch);
                if (q < q_best) {
                    q_best = q;
                    a_best = a;
                }
            }
            next[s] = q_best;
            policy[s] = a_best;
        }

        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        double floor = lo;
        for (std::size_t s = 0; s < S; ++s) {
            const double diff = next[s] - w[s];
            lo = std::min(lo, diff);
            hi = std::max(hi, diff);
            floor = std::min(floor, next[s]);
        }
        span = hi - lo;
        for (std::size_t s = 0; s < S; ++s) w[s] = next[s] - floor;
        if (span <= epsilon) {
            EviResult result;
            result.policy = std::move(policy);
            result.gain = std::max(0.0, 0.5 * (hi + lo));
            result.value = std::move(w);
            result.iterations = it;
            return result;
        }
    }
    throw std::runtime_error("extended value iteration hit the cap of " +
                             std::to_string(max_iterations) + " iterations; residual span " +
                             std::to_string(span));
}

bool episode_should_stop(const MdpModel& model, std::size_t s, std::size_t a) {
    return model.episode_visits(s, a) == std::max<std::uint64_t>(1, model.visits(s, a));
}

Admission drop_packets(const QueueState& q, const NetworkEvent& event, Packets V) {
    Admission out{event, 0};
    const Packets arrivals = event.arrivals.total();
    if (arrivals == 0) return out;
    Packets excess = std::max<Packets>(0, q.total() + arrivals - V + 1);
    if (excess > arrivals)
        throw std::logic_error("backlog already exceeds the truncation threshold");
    out.dropped = excess;
    for (NodeId i = 0; i < q.nodes() && excess > 0; ++i)
        for (FlowId k = 0; k < q.flows() && excess > 0; ++k) {
            const Packets take = std::min(out.admitted.arrivals(i, k), excess);
            out.admitted.arrivals(i, k) -= take;
            excess -= take;
        }
    return out;
}

TransitionTable exact_transitions(const Network& network, const UncontrollablePolicy& policy,
                                  const TruncatedStateSpace& space, const ActionSpace& actions) {
    // Joint arrival law: product of per-flow binomial pmfs.
    std::vector<std::pair<NetworkEvent, double>> events{{network.empty_event(), 1.0}};
    for (FlowId k = 0; k < network.flow_count(); ++k) {
        const FlowSpec& flow = network.flows()[k];
        const std::vector<double> pmf = flow.arrival.pmf();
        std::vector<std::pair<NetworkEvent, double>> grown;
        for (const auto& [ev, p] : events)
            for (std::size_t x = 0; x < pmf.size(); ++x) {
                if (pmf[x] <= 0.0) continue;
                NetworkEvent e = ev;
                e.arrivals(flow.source, k) += static_cast<Packets>(x);
                grown.emplace_back(std::move(e), p * pmf[x]);
            }
        events = std::move(grown);
        if (events.size() > 100000)
            throw std::invalid_argument("arrival law too large to enumerate exactly");
    }

    std::vector<RoutingAction> joint(actions.size());
    for (std::size_t a = 0; a < actions.size(); ++a) joint[a] = actions.action(a);

    TransitionTable table;
    table.states = space.size();
    table.actions = actions.size();
    table.rows.resize(table.states * table.actions);
    std::vector<std::map<std::size_t, double>> acc(table.actions);
    for (std::size_t s = 0; s < space.size(); ++s) {
        const QueueState q = space.state_at(s);
        for (auto& m : acc) m.clear();
        for (const auto& [ev, p_ev] : events) {
            const Admission adm = drop_packets(q, ev, space.truncation());
            for (const ActionOutcome& o : policy.outcomes(adm.admitted, q)) {
                if (o.probability <= 0.0) continue;
                for (std::size_t a = 0; a < table.actions; ++a) {
                    const StepResult r = step(network, q, joint[a], o.action, adm.admitted);
                    acc[a][space.index_of(r.next)] += p_ev * o.probability;
                }
            }
        }
        for (std::size_t a = 0; a < table.actions; ++a)
            table.rows[s * table.actions + a].assign(acc[a].begin(), acc[a].end());
    }
    return table;
}

std::vector<double> backlog_costs(const TruncatedStateSpace& space) {
    std::vector<double> cost(space.size());
    for (std::size_t s = 0; s < space.size(); ++s) cost[s] = static_cast<double>(space.total(s));
    return cost;
}

OracleResult oracle_average_cost(const TransitionTable& table, std::span<const double> cost,
                                 double tolerance, std::size_t max_iterations, double self_loop) {
    const std::size_t S = table.states;
    const std::size_t A = table.actions;
    if (S == 0 || A == 0 || cost.size() != S || table.rows.size() != S * A)
        throw std::invalid_argument("transition table does not match the costs");
    if (!(self_loop >= 0.0 && self_loop < 1.0))
        throw std::invalid_argument("self-loop weight must be in [0, 1)");

    std::vector<double> h(S, 0.0);
    std::vector<double> next(S);
    std::vector<std::size_t> policy(S, 0);
    double span = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        for (std::size_t s = 0; s < S; ++s) {
            double q_best = std::numeric_limits<double>::infinity();
            std::size_t a_best = 0;
            for (std::size_t a = 0; a < A; ++a) {
                double expect = 0.0;
                for (const auto& [t, p] : table.rows[s * A + a]) expect += p * h[t];
                const double q = cost[s] + self_loop * h[s] + (1.0 - self_loop) * expect;
                if (q < q_best) {
                    q_best = q;
                    a_best = a;
                }
            }
            next[s] = q_best;
            policy[s] = a_best;
        }
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t s = 0; s < S; ++s) {
            lo = std::min(lo, next[s] - h[s]);
            hi = std::max(hi, next[s] - h[s]);
        }
        span = hi - lo;
        const double anchor = next[0];
        for (std::size_t s = 0; s < S; ++s) h[s] = next[s] - anchor;
        if (span <= tolerance) {
            OracleResult r;
            r.gain = 0.5 * (hi + lo);
            r.policy = std::move(policy);
            r.bias = std::move(h);
            r.iterations = it;
            return r;
        }
    }
    throw std::runtime_error("relative value iteration did not converge within " +
                             std::to_string(max_iterations) + " iterations; residual span " +
                             std::to_string(span) +
                             " (a persistent span usually means the model is multichain, so no "
                             "single optimal gain exists)");
}

StationaryController::StationaryController(const Network& network, Packets V,
                                           std::vector<std::size_t> policy)
    : space_(network, V), policy_(std::move(policy)) {
    if (policy_.size() != space_.size())
        throw std::invalid_argument("stationary policy does not cover the truncated space");
    const ActionSpace actions(network);
    for (std::size_t a = 0; a < actions.size(); ++a) actions_.push_back(actions.action(a));
    for (std::size_t a : policy_)
        if (a >= actions_.size()) throw std::invalid_argument("stationary policy action out of range");
}

NetworkEvent StationaryController::admit(const QueueState& q, const NetworkEvent& event,
                                         Packets& dropped) {
    Admission adm = drop_packets(q, event, space_.truncation());
    dropped = adm.dropped;
    return std::move(adm.admitted);
}

RoutingAction StationaryController::decide(const QueueState& q, const NetworkEvent&) {
    return actions_[policy_[space_.index_of(q)]];
}

TucrlController::TucrlController(const Network& network, TucrlParams params)
    : network_(&network),
      params_(params),
      space_(network, params.truncation, params.max_states),
      actions_(network),
      reachable_(space_, (network.node_count() + 1) * network.topology().bound()),
      model_(space_.size(), actions_.size()) {
    if (params_.confidence_scale <= 0.0)
        throw std::invalid_argument("confidence scale must be positive");
    action_cache_.reserve(actions_.size());
    for (std::size_t a = 0; a < actions_.size(); ++a) action_cache_.push_back(actions_.action(a));
}

NetworkEvent TucrlController::admit(const QueueState& q, const NetworkEvent& event,
                                    Packets& dropped) {
    Admission adm = drop_packets(q, event, params_.truncation);
    dropped = adm.dropped;
    if (q.total() + adm.admitted.arrivals.total() > params_.truncation - 1) ++truncation_violations_;
    return std::move(adm.admitted);
}

void TucrlController::plan() {
    const std::int64_t t = std::max<std::int64_t>(1, model_.episode_start());
    PlanningProblem problem;
    problem.states = space_.size();
    problem.actions = actions_.size();
    problem.cost = backlog_costs(space_);
    problem.pairs.resize(problem.states * problem.actions);
    problem.reachable = &reachable_;
    const int N = network_->node_count();
    const Packets D = network_->topology().bound();
    for (std::size_t s = 0; s < problem.states; ++s)
        for (std::size_t a = 0; a < problem.actions; ++a) {
            PairModel& m = problem.pairs[s * problem.actions + a];
            const std::uint64_t n = model_.visits(s, a);
            if (n == 0) continue;
            m.p_hat = estimate_transitions(model_, s, a);
            m.radius = confidence_radius(n, t, N, D, actions_.size(), params_.truncation,
                                         params_.confidence_scale);
        }

    const std::span<const double> init =
        params_.warm_start ? std::span<const double>(value_) : std::span<const double>();
    EviResult r = extended_value_iteration(problem, 1.0 / std::sqrt(static_cast<double>(t)),
                                           params_.evi_max_iterations, init);
    policy_ = std::move(r.policy);
    value_ = std::move(r.value);
    log_.push_back({model_.episode(), model_.episode_start(), model_.visited_pairs(), r.gain,
                    r.iterations});
    need_plan_ = false;
}

RoutingAction TucrlController::decide(const QueueState& q, const NetworkEvent&) {
    if (need_plan_) plan();
    current_state_ = space_.index_of(q);
    current_action_ = policy_[current_state_];
    return action_cache_[current_action_];
}

void TucrlController::observe(const QueueState&, const NetworkEvent&, const StepResult& result) {
    const std::size_t next = space_.index_of(result.next);
    model_.record(current_state_, current_action_, next);
    ++slot_;
    if (episode_should_stop(model_, current_state_, current_action_)) {
        model_.end_episode(slot_);
        need_plan_ = true;
    }
}

double TucrlController::episode_bound(std::int64_t horizon) const {
    const double T = static_cast<double>(std::max<std::int64_t>(1, horizon));
    return 1.0 + static_cast<double>(space_.size()) * static_cast<double>(actions_.size()) *
                     (std::log2(T) + 1.0);
}

}  // namespace pcnet::tucrl
