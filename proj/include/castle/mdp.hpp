#pragma once

#include "castle/traj.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace castle {

using StateId = std::size_t;

struct Transition {
    StateId target = 0;
    double probability = 0.0;
    std::uint64_t count = 0; ///< supporting observations; 0 for hand-built models

    friend bool operator==(const Transition&, const Transition&) = default;
};

struct ActionBranch {
    ActionId action;
    std::vector<Transition> successors;

    friend bool operator==(const ActionBranch&, const ActionBranch&) = default;
};

struct MdpState {
    ObservationSymbol label;
    std::vector<ActionBranch> actions; ///< sorted by action id

    const ActionBranch* find(ActionId a) const noexcept {
        for (const auto& b : actions)
            if (b.action == a) return &b;
        return nullptr;
    }

    friend bool operator==(const MdpState&, const MdpState&) = default;
};

/// Finite deterministic labeled MDP. State 0 is the initial state.
struct LabeledMdp {
    std::size_t action_count = 0;
    std::vector<MdpState> states;

    static constexpr StateId initial = 0;

    std::size_t size() const noexcept { return states.size(); }

    friend bool operator==(const LabeledMdp&, const LabeledMdp&) = default;
};

/// Integer-count transition, normalised by make_mdp.
struct CountedEdge {
    StateId source;
    ActionId action;
    StateId target;
    std::uint64_t count;
};

/// Builds an MDP by normalising per-(state, action) counts.
inline LabeledMdp make_mdp(std::vector<ObservationSymbol> labels, std::size_t action_count,
                           const std::vector<CountedEdge>& edges) {
    LabeledMdp m;
    m.action_count = action_count;
    m.states.resize(labels.size());
    for (std::size_t s = 0; s < labels.size(); ++s) m.states[s].label = std::move(labels[s]);
    for (const auto& e : edges) {
        if (e.source >= m.size() || e.target >= m.size()) throw std::out_of_range("make_mdp: state out of range");
        if (e.count == 0) continue;
        auto& acts = m.states[e.source].actions;
        auto it = std::lower_bound(acts.begin(), acts.end(), e.action,
                                   [](const ActionBranch& b, ActionId a) { return b.action < a; });
        if (it == acts.end() || it->action != e.action) it = acts.insert(it, ActionBranch{e.action, {}});
        auto& succ = it->successors;
        auto t = std::find_if(succ.begin(), succ.end(), [&](const Transition& x) { return x.target == e.target; });
        if (t == succ.end())
            succ.push_back({e.target, 0.0, e.count});
        else
            t->count += e.count;
    }
    for (auto& st : m.states)
        for (auto& b : st.actions) {
            std::uint64_t total = 0;
            for (const auto& t : b.successors) total += t.count;
            for (auto& t : b.successors)
                t.probability = static_cast<double>(t.count) / static_cast<double>(total);
            std::sort(b.successors.begin(), b.successors.end(),
                      [](const Transition& a, const Transition& c) { return a.target < c.target; });
        }
    return m;
}

/// Throws std::logic_error when a structural invariant is violated:
/// distributions sum to 1, successor labels are pairwise distinct per
/// (state, action), and exactly one state (state 0) is labeled init.
inline void validate(const LabeledMdp& m, double tol = 1e-9) {
    if (m.states.empty()) throw std::logic_error("mdp: no states");
    std::size_t inits = 0;
    for (StateId s = 0; s < m.size(); ++s) {
        const auto& st = m.states[s];
        inits += st.label.is_init();
        for (std::size_t i = 0; i < st.actions.size(); ++i) {
            const auto& b = st.actions[i];
            if (b.action.value >= m.action_count) throw std::logic_error("mdp: action id out of range");
            if (i && !(st.actions[i - 1].action < b.action)) throw std::logic_error("mdp: actions not sorted/unique");
            if (b.successors.empty()) throw std::logic_error("mdp: empty successor distribution");
            double sum = 0.0;
            for (std::size_t x = 0; x < b.successors.size(); ++x) {
                const auto& t = b.successors[x];
                if (t.target >= m.size()) throw std::logic_error("mdp: successor out of range");
                if (!(t.probability > 0.0) || t.probability > 1.0) throw std::logic_error("mdp: bad probability");
                sum += t.probability;
                for (std::size_t y = 0; y < x; ++y)
                    if (m.states[b.successors[y].target].label == m.states[t.target].label)
                        throw std::logic_error("mdp: nondeterministic successors for state " + std::to_string(s));
            }
            if (std::abs(sum - 1.0) > tol) throw std::logic_error("mdp: distribution does not sum to 1");
        }
    }
    if (inits != 1 || !m.states[LabeledMdp::initial].label.is_init())
        throw std::logic_error("mdp: expected exactly one init state at index 0");
}

/// Largest cluster id used in any label, or nullopt if none.
inline std::optional<std::size_t> max_cluster(const LabeledMdp& m) {
    std::optional<std::size_t> best;
    for (const auto& st : m.states)
        for (auto c : st.label.clusters()) best = best ? std::max(*best, c) : c;
    return best;
}

// ---------------------------------------------------------------------------
// Exports

namespace detail {
inline std::string fmt_prob(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", p);
    return buf;
}
} // namespace detail

inline std::string to_dot(const LabeledMdp& m) {
    std::ostringstream out;
    out << "digraph learned_mdp {\n";
    for (StateId s = 0; s < m.size(); ++s) {
        const auto& label = m.states[s].label;
        out << "  s" << s << " [label=\"" << label.str() << "\"";
        if (label.is_goal()) out << ", shape=doublecircle";
        if (label.is_bad()) out << ", color=red";
        out << "];\n";
    }
    out << "  __start [shape=none, label=\"\"];\n  __start -> s0;\n";
    for (StateId s = 0; s < m.size(); ++s)
        for (const auto& b : m.states[s].actions)
            for (const auto& t : b.successors) {
                char p[32];
                std::snprintf(p, sizeof p, "%.3f", t.probability);
                out << "  s" << s << " -> s" << t.target << " [label=\"a" << b.action.value << " : " << p << "\"];\n";
            }
    out << "}\n";
    return out.str();
}

/// PRISM-language MDP. States are an integer variable; the labels "init_obs",
/// "goal" and "bad" mark the corresponding observation sets.
inline std::string to_prism(const LabeledMdp& m) {
    std::ostringstream out;
    out << "mdp\n\nmodule learned\n";
    out << "  s : [0.." << (m.size() ? m.size() - 1 : 0) << "] init " << LabeledMdp::initial << ";\n\n";
    for (StateId s = 0; s < m.size(); ++s) {
        const auto& st = m.states[s];
        if (st.actions.empty()) out << "  [] s=" << s << " -> 1:(s'=" << s << ");\n";
        for (const auto& b : st.actions) {
            out << "  [a" << b.action.value << "] s=" << s << " -> ";
            for (std::size_t i = 0; i < b.successors.size(); ++i) {
                if (i) out << " + ";
                out << detail::fmt_prob(b.successors[i].probability) << ":(s'=" << b.successors[i].target << ")";
            }
            out << ";\n";
        }
    }
    out << "endmodule\n\n";
    auto label_decl = [&](const char* name, auto pred) {
        out << "label \"" << name << "\" = ";
        bool any = false;
        for (StateId s = 0; s < m.size(); ++s)
            if (pred(m.states[s].label)) {
                out << (any ? " | " : "") << "s=" << s;
                any = true;
            }
        out << (any ? "" : "false") << ";\n";
    };
    label_decl("init_obs", [](const ObservationSymbol& l) { return l.is_init(); });
    label_decl("goal", [](const ObservationSymbol& l) { return l.is_goal(); });
    label_decl("bad", [](const ObservationSymbol& l) { return l.is_bad(); });
    return out.str();
}

inline std::string prism_properties() { return "Pmax=? [ F \"goal\" ]\n"; }

inline nlohmann::json to_json(const LabeledMdp& m) {
    nlohmann::json states = nlohmann::json::array();
    for (const auto& st : m.states) {
        nlohmann::json acts = nlohmann::json::array();
        for (const auto& b : st.actions) {
            nlohmann::json succ = nlohmann::json::array();
            for (const auto& t : b.successors) succ.push_back({t.target, t.probability, t.count});
            acts.push_back({{"action", b.action.value}, {"successors", std::move(succ)}});
        }
        states.push_back({{"label", st.label.str()}, {"actions", std::move(acts)}});
    }
    return {{"format", "castle-mdp/1"}, {"action_count", m.action_count}, {"states", std::move(states)}};
}

inline LabeledMdp mdp_from_json(const nlohmann::json& j) {
    LabeledMdp m;
    m.action_count = j.at("action_count").get<std::size_t>();
    for (const auto& sj : j.at("states")) {
        MdpState st;
        st.label = ObservationSymbol::parse(sj.at("label").get<std::string>());
        for (const auto& aj : sj.at("actions")) {
            ActionBranch b{ActionId{aj.at("action").get<std::uint32_t>()}, {}};
            for (const auto& t : aj.at("successors"))
                b.successors.push_back({t.at(0).get<StateId>(), t.at(1).get<double>(), t.at(2).get<std::uint64_t>()});
            st.actions.push_back(std::move(b));
        }
        m.states.push_back(std::move(st));
    }
    validate(m);
    return m;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline void save_mdp(const std::string& path, const LabeledMdp& m) { write_text_file(path, to_json(m).dump(1) + "\n"); }

inline LabeledMdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    return mdp_from_json(nlohmann::json::parse(in));
}

} // namespace castle
