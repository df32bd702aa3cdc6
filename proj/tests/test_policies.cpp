#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "pcnet/controllers.hpp"
#include "pcnet/harness.hpp"
#include "pcnet/policies.hpp"

using namespace pcnet;

namespace {

bool feasible(const Network& net, const RoutingAction& f) {
    const Topology& topo = net.topology();
    for (const Transmission& e : f.entries()) {
        if (topo.is_controllable(e.from)) return false;
        const auto choices = enumerate_node_actions(topo, e.from, net.flow_count());
        const bool listed = std::any_of(choices.begin(), choices.end(), [&](const NodeChoice& c) {
            return !c.idle() && topo.link(*c.link).dst == e.to && c.flow == e.flow &&
                   topo.link(*c.link).capacity == e.rate;
        });
        if (!listed) return false;
    }
    return true;
}

QueueState random_state(const Network& net, Rng& rng) {
    std::uniform_int_distribution<Packets> d(0, 30);
    QueueState q = net.empty_state();
    for (NodeId i = 0; i < net.node_count(); ++i)
        for (FlowId k = 0; k < net.flow_count(); ++k)
            if (!net.is_destination(i, k)) q(i, k) = d(rng);
    return q;
}

}  // namespace

TEST_CASE("fig2 policy: node 2 relays at full rate, node 3 holds") {
    harness::Scenario sc = harness::build_scenario("fig2", 1.0);
    const Network& net = *sc.network;
    CHECK(sc.policy->kind() == PolicyKind::kOmegaOnly);
    Rng rng = make_rng(3, 3);
    for (int t = 0; t < 50; ++t) {
        const QueueState q = random_state(net, rng);
        const RoutingAction f = sc.policy->act(net.empty_event(), q);
        CHECK(f.offered(1, 2, 0) == 40);
        CHECK(f.offered(2, 3, 0) == 0);
        CHECK(f.entries().size() == 1);
    }
}

TEST_CASE("fig2 under MaxWeight: node 2 always empty, node 3 grows about 20 per slot") {
    harness::Scenario sc = harness::build_scenario("fig2", 1.0);
    const Network& net = *sc.network;
    Rng rng = make_rng(1, 1);
    QueueState q = net.empty_state();
    const int T = 1000;
    for (int t = 0; t < T; ++t) {
        const NetworkEvent ev = sample_arrivals(net, rng);
        q = step(net, q, maxweight_decide(net, q), sc.policy->act(ev, q), ev).next;
        REQUIRE(q(1, 0) == 0);
    }
    CHECK(std::abs(static_cast<double>(q(2, 0)) / T - 20.0) < 0.5);
}

TEST_CASE("scenario1 policy splits evenly") {
    harness::Scenario sc = harness::build_scenario("scenario1", 1.0);
    const Network& net = *sc.network;
    sc.policy->seed(17);
    const int n = 100000;
    int to3 = 0, serve_f1 = 0;
    const QueueState q = net.empty_state();
    for (int t = 0; t < n; ++t) {
        const RoutingAction f = sc.policy->act(net.empty_event(), q);
        const Transmission* e2 = f.entry_for(1);
        const Transmission* e3 = f.entry_for(2);
        REQUIRE(e2 != nullptr);
        REQUIRE(e3 != nullptr);
        REQUIRE(e2->rate == 40);
        if (e2->to == 2) ++to3;
        if (e3->flow == 0) ++serve_f1;
        REQUIRE(feasible(net, f));
    }
    CHECK(std::abs(static_cast<double>(to3) / n - 0.5) < 0.01);
    CHECK(std::abs(static_cast<double>(serve_f1) / n - 0.5) < 0.01);
}

TEST_CASE("scenario1: empty node 2 still offers, actuals are zero") {
    harness::Scenario sc = harness::build_scenario("scenario1", 1.0);
    const Network& net = *sc.network;
    const QueueState q = net.empty_state();
    const RoutingAction f = sc.policy->act(net.empty_event(), q);
    const Transmission* e2 = f.entry_for(1);
    REQUIRE(e2 != nullptr);
    CHECK(e2->rate > 0);
    const RoutingAction actual = actual_transmissions(q, f);
    CHECK(actual.entries().empty());
}

TEST_CASE("scenario2 case table") {
    harness::Scenario sc = harness::build_scenario("scenario2", 0.95);
    const Network& net = *sc.network;
    const auto& policy = dynamic_cast<const RelayThresholdPolicy&>(*sc.policy);
    CHECK(policy.kind() == PolicyKind::kQueueDependent);
    auto rates = [&](Packets q2, Packets q3) {
        QueueState q = net.empty_state();
        q(1, 0) = q2;
        q(2, 0) = q3;
        return policy.rates(q);
    };
    CHECK(rates(5, 8) == RelayThresholdPolicy::Rates{0.5, 0.0});
    CHECK(rates(5, 15) == RelayThresholdPolicy::Rates{0.0, 1.0});
    CHECK(rates(15, 15) == RelayThresholdPolicy::Rates{0.25, 0.25});
    CHECK(rates(15, 10) == RelayThresholdPolicy::Rates{0.5, 0.0});
    CHECK(rates(10, 11) == RelayThresholdPolicy::Rates{0.0, 1.0});

    QueueState q = net.empty_state();
    q(1, 0) = 15;
    q(2, 0) = 15;
    const auto outs = policy.outcomes(net.empty_event(), q);
    CHECK(outs.size() == 4);
    double mass = 0.0;
    for (const auto& o : outs) {
        mass += o.probability;
        CHECK(feasible(net, o.action));
    }
    CHECK(mass == doctest::Approx(1.0));

    // Bernoulli realisation: empirical service share at relay 2 is 0.5.
    q(2, 0) = 3;
    sc.policy->seed(4);
    int sends = 0;
    const int n = 100000;
    for (int t = 0; t < n; ++t) sends += sc.policy->act(net.empty_event(), q).offered(1, 3, 0) > 0;
    CHECK(std::abs(static_cast<double>(sends) / n - 0.5) < 0.01);
}

TEST_CASE("omega-only policies ignore the queue state") {
    for (const std::string name : {"fig2", "scenario1"}) {
        harness::Scenario sc = harness::build_scenario(name, 1.0);
        const Network& net = *sc.network;
        Rng rng = make_rng(9, 9);
        for (int trial = 0; trial < 200; ++trial) {
            auto a = sc.policy->clone();
            auto b = sc.policy->clone();
            a->seed(static_cast<std::uint64_t>(trial));
            b->seed(static_cast<std::uint64_t>(trial));
            const NetworkEvent ev = sample_arrivals(net, rng);
            for (int t = 0; t < 5; ++t)
                REQUIRE(a->act(ev, random_state(net, rng)) == b->act(ev, random_state(net, rng)));
        }
    }
}

TEST_CASE("policy outputs are feasible and reproducible") {
    for (const std::string name : {"fig2", "scenario1", "scenario2"}) {
        harness::Scenario sc = harness::build_scenario(name, 0.9);
        const Network& net = *sc.network;
        auto a = sc.policy->clone();
        auto b = sc.policy->clone();
        a->seed(21);
        b->seed(21);
        Rng rng = make_rng(2, 2);
        for (int t = 0; t < 500; ++t) {
            const QueueState q = random_state(net, rng);
            const RoutingAction fa = a->act(net.empty_event(), q);
            REQUIRE(feasible(net, fa));
            REQUIRE(fa == b->act(net.empty_event(), q));
        }
    }
}

TEST_CASE("random choice validation") {
    const Network net(Topology(3, {{0, 1, 1}, {1, 2, 1}}, {1}, 1), {{0, 2, ArrivalProcess(0.5, 1)}});
    using R = RandomChoicePolicy;
    CHECK_THROWS(R(net, {{0, {{1, 0, 1.0}}}}));                  // controllable node
    CHECK_THROWS(R(net, {{1, {{2, 0, 0.7}, {2, 0, 0.6}}}}));      // mass above 1
    CHECK_THROWS(R(net, {{1, {{0, 0, 0.5}}}}));                  // no such link
    CHECK_THROWS(R(net, {{1, {{2, 0, 0.5}}}, {1, {}}}));          // duplicate node
    CHECK_NOTHROW(R(net, {{1, {{2, 0, 0.25}}}}));
    const R idle_heavy(net, {{1, {{2, 0, 0.25}}}});
    CHECK(idle_heavy.outcomes(net.empty_event(), net.empty_state()).size() == 2);
}
