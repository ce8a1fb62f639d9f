#include "castle/ioalergia.hpp"
#include "oracles/oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace castle;
using castle::oracles::sym;
using Catch::Approx;

namespace {

ObservationTrace trace(std::initializer_list<std::pair<std::uint32_t, const char*>> steps) {
    ObservationTrace t;
    t.initial = ObservationSymbol::init();
    for (auto [a, s] : steps) t.steps.emplace_back(ActionId{a}, sym(s));
    return t;
}

/// Conditional successor distribution at the model state reached by `prefix`.
std::map<std::string, double> successor_dist(const LabeledMdp& m, const ObservationTrace& t, std::size_t prefix_len,
                                             ActionId a) {
    StateId at = LabeledMdp::initial;
    for (std::size_t i = 0; i < prefix_len; ++i) {
        const auto* b = m.states[at].find(t.steps[i].first);
        REQUIRE(b);
        bool found = false;
        for (const auto& tr : b->successors)
            if (m.states[tr.target].label == t.steps[i].second) {
                at = tr.target;
                found = true;
            }
        REQUIRE(found);
    }
    std::map<std::string, double> out;
    if (const auto* b = m.states[at].find(a))
        for (const auto& tr : b->successors) out[m.states[tr.target].label.str()] += tr.probability;
    return out;
}

} // namespace

TEST_CASE("prefix tree of a small trace set", "[ioalergia]") {
    const std::vector<ObservationTrace> ts{
        trace({{0, "c0"}, {1, "c1"}}),
        trace({{0, "c0"}, {0, "c0"}}),
        trace({{1, "c1"}}),
    };
    const auto t = build_fpta(ts);
    REQUIRE(t.nodes.size() == 5);
    CHECK(t.action_count == 2);
    REQUIRE(t.symbols.size() == 3);
    CHECK(t.symbols[0].str() == "c0");
    CHECK(t.symbols[1].str() == "c1");
    CHECK(t.symbols[2].str() == "init");

    const auto& root = t.nodes[Fpta::root];
    CHECK(t.label(Fpta::root).is_init());
    CHECK(root.total(ActionId{0}) == 2);
    CHECK(root.total(ActionId{1}) == 1);
    REQUIRE(root.edges.size() == 2);
    CHECK(root.edges[0].count == 2);

    const auto c0 = t.walk({{ActionId{0}, sym("c0")}});
    const auto c1 = t.walk({{ActionId{1}, sym("c1")}});
    const auto c0c0 = t.walk({{ActionId{0}, sym("c0")}, {ActionId{0}, sym("c0")}});
    const auto c0c1 = t.walk({{ActionId{0}, sym("c0")}, {ActionId{1}, sym("c1")}});
    REQUIRE((c0 && c1 && c0c0 && c0c1));
    CHECK(t.nodes[*c0].rank == 1);
    CHECK(t.nodes[*c1].rank == 2);
    CHECK(t.nodes[*c0c0].rank == 3);
    CHECK(t.nodes[*c0c1].rank == 4);
    CHECK(t.nodes[*c0].total(ActionId{0}) == 1);
    CHECK(t.nodes[*c0c1].edges.empty());
    CHECK_FALSE(t.walk({{ActionId{1}, sym("c0")}}));
    CHECK_FALSE(t.walk({{ActionId{0}, sym("c7")}}));

    CHECK(build_fpta(ts, 4).action_count == 4);
    ObservationTrace wrong;
    wrong.initial = sym("c0");
    CHECK_THROWS_AS(build_fpta({wrong}), std::invalid_argument);
}

TEST_CASE("hoeffding bound", "[ioalergia]") {
    // eps = 0.005, n1 = n2 = 1000: sqrt(ln(400) / 2) * 2 / sqrt(1000) = 0.10947
    CHECK_FALSE(hoeffding_compatible(700, 1000, 500, 1000, 0.005));
    CHECK_FALSE(hoeffding_compatible(610, 1000, 500, 1000, 0.005));
    CHECK(hoeffding_compatible(609, 1000, 500, 1000, 0.005));
    CHECK(hoeffding_compatible(600, 1000, 500, 1000, 0.005));
    // single samples: bound 3.46, anything goes
    CHECK(hoeffding_compatible(1, 1, 0, 1, 0.005));
    CHECK(hoeffding_compatible(300, 1000, 300, 1000, 0.005));
    CHECK(hoeffding_compatible(5, 10, 0, 0, 0.005));
    // eps = 2 gives a zero bound, so even equal frequencies fail the strict test
    CHECK_FALSE(hoeffding_compatible(3, 10, 3, 10, 2.0));
}

TEST_CASE("compatibility of prefix tree nodes", "[ioalergia]") {
    // two c0 nodes reached by different actions, each with 500 outgoing traces
    auto make = [](int left_c0, int right_c0) {
        std::vector<ObservationTrace> ts;
        for (int i = 0; i < 500; ++i) ts.push_back(trace({{0, "c0"}, {0, i < left_c0 ? "c0" : "c1"}}));
        for (int i = 0; i < 500; ++i) ts.push_back(trace({{1, "c0"}, {0, i < right_c0 ? "c0" : "c1"}}));
        ts.push_back(trace({{2, "c1"}}));
        return build_fpta(ts);
    };
    {
        const auto t = make(350, 350);
        const auto x = *t.walk({{ActionId{0}, sym("c0")}});
        const auto y = *t.walk({{ActionId{1}, sym("c0")}});
        const auto z = *t.walk({{ActionId{2}, sym("c1")}});
        CHECK(compatible(t, x, y, 0.005));
        CHECK(compatible(t, x, x, 0.005));
        CHECK(compatible(t, Fpta::root, Fpta::root, 0.005));
        CHECK_FALSE(compatible(t, x, z, 0.005)); // labels differ
        CHECK_FALSE(compatible(t, x, y, 2.0));
    }
    {
        const auto t = make(350, 150);
        const auto x = *t.walk({{ActionId{0}, sym("c0")}});
        const auto y = *t.walk({{ActionId{1}, sym("c0")}});
        CHECK_FALSE(compatible(t, x, y, 0.005));
    }
}

TEST_CASE("compatibility looks into the subtrees", "[ioalergia]") {
    // same first-level frequencies, different second-level behaviour
    std::vector<ObservationTrace> ts;
    for (int i = 0; i < 400; ++i) ts.push_back(trace({{0, "c0"}, {0, "c1"}, {0, i < 300 ? "c0" : "c1"}}));
    for (int i = 0; i < 400; ++i) ts.push_back(trace({{1, "c0"}, {0, "c1"}, {0, i < 100 ? "c0" : "c1"}}));
    const auto t = build_fpta(ts);
    const auto x = *t.walk({{ActionId{0}, sym("c0")}});
    const auto y = *t.walk({{ActionId{1}, sym("c0")}});
    CHECK_FALSE(compatible(t, x, y, 0.005));
}

TEST_CASE("a repeated single symbol folds into a self loop", "[ioalergia]") {
    std::vector<ObservationTrace> ts;
    for (int len = 1; len <= 20; ++len)
        for (int r = 0; r < 5; ++r) {
            ObservationTrace t;
            t.initial = ObservationSymbol::init();
            for (int i = 0; i < len; ++i) t.steps.emplace_back(ActionId{0}, sym("c0"));
            ts.push_back(t);
        }
    const auto m = learn_mdp(ts);
    REQUIRE(m.size() <= 2);
    REQUIRE(m.size() == 2);
    CHECK(m.states[0].label.is_init());
    CHECK(oracles::prob(m, 0, 0, 1) == 1.0);
    CHECK(oracles::prob(m, 1, 0, 1) == 1.0);
}

TEST_CASE("a single trace is learned as a chain", "[ioalergia]") {
    const auto m = learn_mdp({trace({{0, "c0"}, {1, "c1"}, {0, "c2__goal"}})});
    REQUIRE(m.size() == 4);
    CHECK(m.states[1].label.str() == "c0");
    CHECK(m.states[3].label.str() == "c2__goal");
    CHECK(oracles::prob(m, 0, 0, 1) == 1.0);
    CHECK(oracles::prob(m, 1, 1, 2) == 1.0);
    CHECK(oracles::prob(m, 2, 0, 3) == 1.0);
    CHECK(m.states[3].actions.empty());
}

TEST_CASE("learned states always come in order of their access sequence", "[ioalergia]") {
    const auto m = learn_mdp({trace({{1, "c1"}}), trace({{0, "c0"}})});
    REQUIRE(m.size() == 3);
    CHECK(m.states[1].label.str() == "c0");
    CHECK(m.states[2].label.str() == "c1");
}

TEST_CASE("a three state generator is recovered", "[ioalergia]") {
    const auto gen = oracles::three_state_generator();
    const auto ts = oracles::sample_traces(gen, 20000, 12, 17);
    LearnStats stats;
    const auto m = learn_mdp(ts, LearnOptions{}, &stats);
    CHECK(stats.fpta_nodes > m.size());
    const auto iso = oracles::isomorphism(m, gen.mdp);
    REQUIRE(iso);
    for (StateId s = 0; s < m.size(); ++s)
        for (std::uint32_t a = 0; a < 2; ++a)
            for (StateId t = 0; t < m.size(); ++t)
                CHECK(oracles::prob(m, s, a, t) == Approx(oracles::prob(gen.mdp, (*iso)[s], a, (*iso)[t])).margin(0.03));
    CHECK_NOTHROW(validate(m));
    CHECK(learn_mdp(ts) == m);
}

TEST_CASE("without merges the model reproduces the observed frequencies", "[ioalergia]") {
    // A zero Hoeffding bound rejects every pair of nodes that share an action
    // with data. With a single action that leaves only merges of leaves, so
    // every observed prefix keeps its empirical next-step distribution.
    const auto gen = oracles::three_state_generator();
    const std::vector<std::uint32_t> only_a0{0, 0, 0};
    for (unsigned seed : {1u, 2u, 3u}) {
        const auto ts = oracles::sample_traces(gen, 300, 6, seed, &only_a0);
        LearnStats stats;
        const auto m = learn_mdp(ts, LearnOptions{2.0, 0}, &stats);
        const auto e = oracles::empirical_mdp(ts, 1);
        CHECK(m.size() <= stats.fpta_nodes);
        CHECK(e.size() == stats.fpta_nodes);
        for (const auto& t : ts)
            for (std::size_t i = 0; i < t.steps.size(); ++i) {
                const auto a = t.steps[i].first;
                const auto got = successor_dist(m, t, i, a);
                const auto want = successor_dist(e, t, i, a);
                REQUIRE(got.size() == want.size());
                for (const auto& [label, p] : want) REQUIRE(got.at(label) == Approx(p).margin(1e-12));
            }
    }

    // with several actions, nodes with disjoint action sets still merge
    const auto ts = oracles::sample_traces(gen, 300, 6, 4);
    LearnStats stats;
    const auto m = learn_mdp(ts, LearnOptions{2.0, 0}, &stats);
    CHECK(m.size() < stats.fpta_nodes);
    CHECK_NOTHROW(validate(m));
}

TEST_CASE("learning preconditions", "[ioalergia]") {
    CHECK_THROWS_AS(learn_mdp({}), std::invalid_argument);
    CHECK_THROWS_AS(learn_mdp({trace({{0, "c0"}})}, 0.0), std::invalid_argument);
    const auto m = learn_mdp({trace({})});
    CHECK(m.size() == 1);
    CHECK(m.states[0].label.is_init());
}
