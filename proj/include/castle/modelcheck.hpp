#pragma once

#include "castle/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace castle {

/// Maximal probabilities of eventually reaching a goal-labeled state.
struct ReachTable {
    /// Per state: (action, Pmax(F goal | state, action)) for each available action.
    std::vector<std::vector<std::pair<ActionId, double>>> action_values;
    /// Per state: max over actions (1 for goal states, 0 for bad or action-less states).
    std::vector<double> values;
    std::size_t sweeps = 0;
    bool converged = false;
};

struct ValueIterationOptions {
    double tolerance = 1e-9;
    std::size_t max_sweeps = 100000;
};

/// Value iteration from the goal indicator. Goal states are absorbing with
/// value 1, bad states absorbing with value 0; iterates increase towards the
/// least fixed point.
inline ReachTable reach_probabilities(const LabeledMdp& m, const ValueIterationOptions& opt = {}) {
    const std::size_t n = m.size();
    std::vector<char> goal(n), bad(n);
    for (StateId s = 0; s < n; ++s) {
        goal[s] = m.states[s].label.is_goal();
        bad[s] = !goal[s] && m.states[s].label.is_bad();
    }

    auto q_value = [&](const ActionBranch& b, const std::vector<double>& v) {
        double sum = 0.0;
        for (const auto& t : b.successors) sum += t.probability * v[t.target];
        return std::min(sum, 1.0);
    };

    ReachTable rt;
    std::vector<double> v(n, 0.0), next(n, 0.0);
    for (StateId s = 0; s < n; ++s) v[s] = goal[s] ? 1.0 : 0.0;

    for (rt.sweeps = 1; rt.sweeps <= opt.max_sweeps; ++rt.sweeps) {
        double delta = 0.0;
        for (StateId s = 0; s < n; ++s) {
            if (goal[s] || bad[s]) {
                next[s] = v[s];
                continue;
            }
            double best = 0.0;
            for (const auto& b : m.states[s].actions) best = std::max(best, q_value(b, v));
            next[s] = best;
            delta = std::max(delta, std::abs(best - v[s]));
        }
        v.swap(next);
        if (delta < opt.tolerance) {
            rt.converged = true;
            break;
        }
    }
    rt.sweeps = std::min(rt.sweeps, opt.max_sweeps);

    rt.values = v;
    rt.action_values.resize(n);
    for (StateId s = 0; s < n; ++s)
        for (const auto& b : m.states[s].actions) {
            const double q = goal[s] ? 1.0 : bad[s] ? 0.0 : q_value(b, v);
            rt.action_values[s].emplace_back(b.action, q);
        }
    return rt;
}

/// Deterministic memoryless policy; states without actions have no choice.
struct Policy {
    std::vector<std::optional<ActionId>> choice;

    std::size_t size() const noexcept { return choice.size(); }
    friend bool operator==(const Policy&, const Policy&) = default;
};

/// Per-state argmax; ties go to the lowest action id.
inline Policy extract_policy(const ReachTable& rt) {
    Policy p;
    p.choice.resize(rt.action_values.size());
    for (std::size_t s = 0; s < rt.action_values.size(); ++s) {
        std::optional<std::pair<ActionId, double>> best;
        for (const auto& [a, q] : rt.action_values[s])
            if (!best || q > best->second || (q == best->second && a < best->first)) best = std::pair{a, q};
        if (best) p.choice[s] = best->first;
    }
    return p;
}

enum class TieBreak {
    lowest_action, ///< exact argmax, lowest action id among equal values
    most_observed, ///< among near-maximal actions, the one seen most often in the data
};

struct PolicyOptions {
    TieBreak tie_break = TieBreak::most_observed;
    /// Actions within this distance of the state's best value count as tied.
    /// Matches the value iteration tolerance: smaller differences are noise.
    double tolerance = 1e-9;
    /// Among tied actions keep those with a successor closer to a goal state
    /// (in steps along tied actions). A plain argmax policy may cycle forever
    /// between states whose value is 1; this one reaches the goal with the
    /// maximal probability on the model itself.
    bool goal_progress = false;
};

inline std::string_view to_string(TieBreak t) { return t == TieBreak::lowest_action ? "lowest-action" : "most-observed"; }

inline TieBreak parse_tie_break(std::string_view text) {
    if (text == "lowest-action") return TieBreak::lowest_action;
    if (text == "most-observed") return TieBreak::most_observed;
    throw std::invalid_argument("unknown tie-break '" + std::string(text) + "', expected lowest-action or most-observed");
}

/// Steps to the nearest goal state using only the given actions; SIZE_MAX if unreachable.
inline std::vector<std::size_t> goal_distances(const LabeledMdp& m, const std::vector<std::vector<std::size_t>>& allowed) {
    constexpr auto inf = std::numeric_limits<std::size_t>::max();
    std::vector<std::vector<StateId>> preds(m.size());
    std::vector<std::size_t> dist(m.size(), inf);
    std::vector<StateId> queue;
    for (StateId s = 0; s < m.size(); ++s) {
        if (m.states[s].label.is_goal()) {
            dist[s] = 0;
            queue.push_back(s);
            continue;
        }
        if (m.states[s].label.is_bad()) continue;
        for (auto i : allowed[s])
            for (const auto& t : m.states[s].actions[i].successors) preds[t.target].push_back(s);
    }
    for (std::size_t head = 0; head < queue.size(); ++head)
        for (auto s : preds[queue[head]])
            if (dist[s] == inf) {
                dist[s] = dist[queue[head]] + 1;
                queue.push_back(s);
            }
    return dist;
}

/// Policy with an explicit tie rule. With `most_observed`, ties on
/// transition counts go to the lowest action id; hand-built models without
/// counts therefore fall back to the lowest tied action.
inline Policy extract_policy(const LabeledMdp& m, const ReachTable& rt, const PolicyOptions& opt = {}) {
    if (rt.action_values.size() != m.size()) throw std::invalid_argument("extract_policy: table does not match the model");
    if (opt.tie_break == TieBreak::lowest_action && !opt.goal_progress) return extract_policy(rt);

    // indices of the near-maximal actions per state
    std::vector<std::vector<std::size_t>> tied(m.size());
    for (StateId s = 0; s < m.size(); ++s) {
        const auto& qs = rt.action_values[s];
        if (qs.size() != m.states[s].actions.size()) throw std::invalid_argument("extract_policy: table does not match the model");
        double top = -1.0;
        for (const auto& aq : qs) top = std::max(top, aq.second);
        for (std::size_t i = 0; i < qs.size(); ++i)
            if (qs[i].second >= top - opt.tolerance) tied[s].push_back(i);
    }
    if (opt.goal_progress) {
        const auto dist = goal_distances(m, tied);
        for (StateId s = 0; s < m.size(); ++s) {
            if (dist[s] == 0 || dist[s] == std::numeric_limits<std::size_t>::max()) continue;
            std::erase_if(tied[s], [&](std::size_t i) {
                const auto& succ = m.states[s].actions[i].successors;
                return std::none_of(succ.begin(), succ.end(), [&](const Transition& t) { return dist[t.target] + 1 == dist[s]; });
            });
        }
    }

    Policy p;
    p.choice.resize(m.size());
    for (StateId s = 0; s < m.size(); ++s) {
        std::uint64_t best = 0;
        for (auto i : tied[s]) {
            const auto& b = m.states[s].actions[i];
            std::uint64_t seen = 0;
            if (opt.tie_break == TieBreak::most_observed)
                for (const auto& t : b.successors) seen += t.count;
            if (!p.choice[s] || seen > best || (seen == best && b.action < *p.choice[s])) {
                best = seen;
                p.choice[s] = b.action;
            }
        }
    }
    return p;
}

inline bool has_goal_state(const LabeledMdp& m) {
    return std::any_of(m.states.begin(), m.states.end(), [](const MdpState& s) { return s.label.is_goal(); });
}

inline nlohmann::json to_json(const Policy& p, const LabeledMdp& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (StateId s = 0; s < p.size(); ++s)
        rows.push_back({{"state", s},
                        {"label", m.states.at(s).label.str()},
                        {"action", p.choice[s] ? nlohmann::json(p.choice[s]->value) : nlohmann::json(nullptr)}});
    return {{"format", "castle-policy/1"}, {"choices", std::move(rows)}};
}

inline Policy policy_from_json(const nlohmann::json& j) {
    Policy p;
    for (const auto& row : j.at("choices")) {
        const auto& a = row.at("action");
        p.choice.push_back(a.is_null() ? std::nullopt : std::optional<ActionId>(ActionId{a.get<std::uint32_t>()}));
    }
    return p;
}

/// CSV table "state,label,action" (action empty for states without choices).
inline std::string policy_table(const Policy& p, const LabeledMdp& m) {
    std::string out = "state,label,action\n";
    for (StateId s = 0; s < p.size(); ++s) {
        out += std::to_string(s) + "," + m.states.at(s).label.str() + ",";
        if (p.choice[s]) out += std::to_string(p.choice[s]->value);
        out += "\n";
    }
    return out;
}

} // namespace castle
