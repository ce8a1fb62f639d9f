#pragma once

// Brute-force reference implementations for the tests. Nothing here calls the
// production algorithm it is compared against; only the plain data types
// (LabeledMdp, ObservationTrace, ...) are shared.

#include "castle/envsim.hpp"
#include "castle/mdp.hpp"
#include "castle/preprocess.hpp"
#include "castle/traj.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace castle::oracles {

inline ObservationSymbol sym(const std::string& s) { return ObservationSymbol::parse(s); }

// ---------------------------------------------------------------------------
// nearest centroid

inline std::size_t nearest_scan(const std::vector<std::vector<double>>& centroids, const std::vector<double>& p) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        double d = 0;
        for (std::size_t i = 0; i < p.size(); ++i) d += (centroids[c][i] - p[i]) * (centroids[c][i] - p[i]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// standard normal upper tail, composite Simpson on the density

inline double upper_tail(double z) {
    const double lo = z, hi = 12.0;
    if (lo >= hi) return 0.0;
    const int n = 200000;
    const double h = (hi - lo) / n;
    auto f = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
    double s = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// ---------------------------------------------------------------------------
// empirical tree MDP

/// Tree-shaped MDP with one state per distinct trace prefix and the observed
/// conditional frequencies. States are numbered in order of first appearance.
inline LabeledMdp empirical_mdp(const std::vector<ObservationTrace>& traces, std::size_t action_count) {
    std::map<std::string, std::size_t> node;
    std::vector<std::string> label;
    std::map<std::size_t, std::map<std::uint32_t, std::map<std::size_t, std::uint64_t>>> counts;
    node["init"] = 0;
    label.push_back("init");
    for (const auto& t : traces) {
        std::string key = "init";
        std::size_t at = 0;
        for (const auto& [a, s] : t.steps) {
            key += "|" + std::to_string(a.value) + ":" + s.str();
            auto it = node.find(key);
            if (it == node.end()) {
                it = node.emplace(key, label.size()).first;
                label.push_back(s.str());
            }
            counts[at][a.value][it->second] += 1;
            at = it->second;
        }
    }
    LabeledMdp m;
    m.action_count = action_count;
    m.states.resize(label.size());
    for (std::size_t i = 0; i < label.size(); ++i) m.states[i].label = sym(label[i]);
    for (const auto& [s, acts] : counts)
        for (const auto& [a, succ] : acts) {
            std::uint64_t total = 0;
            for (const auto& [t, n] : succ) total += n;
            ActionBranch b{ActionId{a}, {}};
            for (const auto& [t, n] : succ) b.successors.push_back({t, double(n) / double(total), n});
            m.states[s].actions.push_back(b);
        }
    return m;
}

// ---------------------------------------------------------------------------
// max reachability by policy enumeration

/// Pmax(F goal) per state: tries every deterministic memoryless policy and
/// solves its linear system exactly. Only for tiny models.
inline std::vector<double> reach_by_enumeration(const LabeledMdp& m) {
    const std::size_t n = m.size();
    std::vector<double> best(n, 0.0);
    std::vector<std::size_t> pick(n, 0);
    while (true) {
        // states that reach goal with positive probability under this policy
        std::vector<char> live(n, 0);
        for (std::size_t s = 0; s < n; ++s) live[s] = m.states[s].label.is_goal();
        for (bool grew = true; grew;) {
            grew = false;
            for (std::size_t s = 0; s < n; ++s) {
                if (live[s] || m.states[s].label.is_bad() || m.states[s].actions.empty()) continue;
                for (const auto& t : m.states[s].actions[pick[s]].successors)
                    if (live[t.target]) {
                        live[s] = 1;
                        grew = true;
                        break;
                    }
            }
        }
        Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
        for (std::size_t s = 0; s < n; ++s) {
            if (m.states[s].label.is_goal()) {
                b[s] = 1.0;
                continue;
            }
            if (!live[s]) continue;
            for (const auto& t : m.states[s].actions[pick[s]].successors) A(s, t.target) -= t.probability;
        }
        Eigen::VectorXd v = A.fullPivLu().solve(b);
        for (std::size_t s = 0; s < n; ++s) best[s] = std::max(best[s], v[s]);

        std::size_t s = 0;
        for (; s < n; ++s) {
            if (m.states[s].actions.empty()) continue;
            if (++pick[s] < m.states[s].actions.size()) break;
            pick[s] = 0;
        }
        if (s == n) break;
    }
    return best;
}

/// s0 -a-> {goal 0.4, bad 0.6}; s0 -b-> {s0 0.9, bad 0.1}. v(s0) = max(0.4, 0.9 v(s0)) = 0.4.
inline LabeledMdp hand_mdp() {
    LabeledMdp m;
    m.action_count = 2;
    m.states.resize(3);
    m.states[0].label = sym("init");
    m.states[1].label = sym("c0__goal");
    m.states[2].label = sym("bad__c1");
    m.states[0].actions = {{ActionId{0}, {{1, 0.4, 0}, {2, 0.6, 0}}}, {ActionId{1}, {{0, 0.9, 0}, {2, 0.1, 0}}}};
    return m;
}

// ---------------------------------------------------------------------------
// generator MDPs

struct GeneratorMdp {
    LabeledMdp mdp;
};

/// init, c0, c1; two actions; every branch is 0.7/0.3.
inline GeneratorMdp three_state_generator() {
    LabeledMdp m;
    m.action_count = 2;
    m.states.resize(3);
    m.states[0].label = sym("init");
    m.states[1].label = sym("c0");
    m.states[2].label = sym("c1");
    m.states[0].actions = {{ActionId{0}, {{1, 0.7, 0}, {2, 0.3, 0}}}, {ActionId{1}, {{1, 0.3, 0}, {2, 0.7, 0}}}};
    m.states[1].actions = {{ActionId{0}, {{1, 0.7, 0}, {2, 0.3, 0}}}, {ActionId{1}, {{1, 0.3, 0}, {2, 0.7, 0}}}};
    m.states[2].actions = {{ActionId{0}, {{1, 0.3, 0}, {2, 0.7, 0}}}, {ActionId{1}, {{1, 0.7, 0}, {2, 0.3, 0}}}};
    return {m};
}

/// Simulates `gen` with uniformly random actions (or `policy` when given) for
/// up to `max_len` steps; a trace also ends in a state without actions.
inline std::vector<ObservationTrace> sample_traces(const GeneratorMdp& gen, std::size_t count, std::size_t max_len,
                                                   unsigned seed,
                                                   const std::vector<std::uint32_t>* policy = nullptr) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ObservationTrace> out;
    for (std::size_t i = 0; i < count; ++i) {
        ObservationTrace t;
        t.initial = gen.mdp.states[0].label;
        std::size_t s = 0;
        while (t.steps.size() < max_len && !gen.mdp.states[s].actions.empty()) {
            const auto& acts = gen.mdp.states[s].actions;
            const auto& b = policy ? acts.at((*policy)[s]) : acts[std::size_t(u(rng) * acts.size()) % acts.size()];
            double r = u(rng);
            std::size_t next = b.successors.back().target;
            for (const auto& tr : b.successors) {
                if (r < tr.probability) {
                    next = tr.target;
                    break;
                }
                r -= tr.probability;
            }
            t.steps.emplace_back(b.action, gen.mdp.states[next].label);
            s = next;
        }
        out.push_back(std::move(t));
    }
    return out;
}

/// State bijection learned -> generator, matching labels and successor labels
/// from the initial states on; nullopt if the structures differ.
inline std::optional<std::vector<std::size_t>> isomorphism(const LabeledMdp& learned, const LabeledMdp& gen) {
    if (learned.size() != gen.size()) return std::nullopt;
    std::vector<std::optional<std::size_t>> map(learned.size());
    std::vector<char> used(gen.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> todo{{0, 0}};
    map[0] = 0;
    used[0] = 1;
    while (!todo.empty()) {
        auto [l, g] = todo.back();
        todo.pop_back();
        const auto& ls = learned.states[l];
        const auto& gs = gen.states[g];
        if (ls.label != gs.label || ls.actions.size() != gs.actions.size()) return std::nullopt;
        for (std::size_t i = 0; i < ls.actions.size(); ++i) {
            if (ls.actions[i].action != gs.actions[i].action) return std::nullopt;
            if (ls.actions[i].successors.size() != gs.actions[i].successors.size()) return std::nullopt;
            for (const auto& lt : ls.actions[i].successors) {
                std::optional<std::size_t> match;
                for (const auto& gt : gs.actions[i].successors)
                    if (gen.states[gt.target].label == learned.states[lt.target].label) match = gt.target;
                if (!match) return std::nullopt;
                if (map[lt.target]) {
                    if (*map[lt.target] != *match) return std::nullopt;
                } else {
                    if (used[*match]) return std::nullopt;
                    map[lt.target] = *match;
                    used[*match] = 1;
                    todo.emplace_back(lt.target, *match);
                }
            }
        }
    }
    std::vector<std::size_t> out;
    for (auto& x : map) {
        if (!x) return std::nullopt;
        out.push_back(*x);
    }
    return out;
}

/// Probability of `to` after action `a` in state `from`, 0 if absent.
inline double prob(const LabeledMdp& m, std::size_t from, std::uint32_t a, std::size_t to) {
    const auto* b = m.states[from].find(ActionId{a});
    if (!b) return 0.0;
    for (const auto& t : b->successors)
        if (t.target == to) return t.probability;
    return 0.0;
}

// ---------------------------------------------------------------------------
// a concrete environment that is exactly a known chain MDP

/// Position 0..length on a line; action 1 moves right, action 0 stays. The
/// goal is position `length`; the time limit is 3 * length.
class ChainEnv final : public Environment {
public:
    explicit ChainEnv(std::size_t length) : length_(length) {
        task_.goal = [this](const EnvState& s, std::size_t) { return s[0] >= double(length_); };
        task_.bad = [this](const EnvState& s, std::size_t i) { return i >= 3 * length_ && s[0] < double(length_); };
        task_.time_limit = 3 * length_;
    }
    std::string_view name() const override { return "chain"; }
    std::size_t dimension() const override { return 1; }
    std::size_t action_count() const override { return 2; }
    const TaskSpec& task() const override { return task_; }

protected:
    EnvState do_reset(Rng&) override { return {0.0}; }
    std::pair<EnvState, double> do_step(ActionId a) override { return {EnvState{state()[0] + a.value}, -1.0}; }

private:
    std::size_t length_;
    TaskSpec task_;
};

/// Identity cluster model with one centroid per chain position.
inline ClusterModel chain_clusters(std::size_t length) {
    ClusterModel c;
    c.input_dim = 1;
    c.lambdas = {1.0};
    c.mean = {0.0};
    c.stddev = {1.0};
    c.kept = {0};
    c.centroids = Points(1);
    for (std::size_t i = 0; i <= length; ++i) c.centroids.push_back(std::vector<double>{double(i)});
    return c;
}

/// The chain's true MDP. State 0 is init (position 0 at step 0), state i + 1
/// is position i; action 0 stays, action 1 moves right.
inline LabeledMdp chain_mdp(std::size_t length) {
    LabeledMdp m;
    m.action_count = 2;
    m.states.resize(length + 2);
    m.states[0].label = sym("init");
    for (std::size_t i = 0; i <= length; ++i)
        m.states[i + 1].label = ObservationSymbol::from_labels(
            i == length ? std::vector<std::string>{"c" + std::to_string(i), "goal"}
                        : std::vector<std::string>{"c" + std::to_string(i)});
    m.states[0].actions = {{ActionId{0}, {{1, 1.0, 1}}}, {ActionId{1}, {{2, 1.0, 1}}}};
    for (std::size_t i = 1; i <= length; ++i)
        m.states[i].actions = {{ActionId{0}, {{i, 1.0, 1}}}, {ActionId{1}, {{i + 1, 1.0, 1}}}};
    return m;
}

} // namespace castle::oracles
