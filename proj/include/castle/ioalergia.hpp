#pragma once

// Passive learning of deterministic labeled MDPs from observation traces:
// frequency prefix tree, Hoeffding compatibility test, red-blue state
// merging with count folding, and final normalisation.

#include "castle/mdp.hpp"
#include "castle/traj.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

namespace castle {

using SymbolId = std::uint32_t;
using NodeId = std::uint32_t;

struct FptaEdge {
    ActionId action;
    SymbolId symbol;
    NodeId child;
    std::uint64_t count;
};

struct FptaNode {
    SymbolId symbol = 0;
    std::uint32_t rank = 0;       ///< position in shortlex order of the access sequence
    std::vector<FptaEdge> edges;  ///< sorted by (action, symbol)

    /// Number of traces leaving this node with action `a`.
    std::uint64_t total(ActionId a) const noexcept {
        std::uint64_t n = 0;
        for (const auto& e : edges)
            if (e.action == a) n += e.count;
        return n;
    }

    const FptaEdge* find(ActionId a, SymbolId s) const noexcept {
        for (const auto& e : edges)
            if (e.action == a && e.symbol == s) return &e;
        return nullptr;
    }
};

/// Frequency prefix tree over observation traces. Symbol ids follow the
/// lexicographic order of the symbol strings; node 0 is the root.
struct Fpta {
    std::vector<ObservationSymbol> symbols;
    std::vector<FptaNode> nodes;
    std::size_t action_count = 0;

    static constexpr NodeId root = 0;

    std::optional<SymbolId> symbol_id(const ObservationSymbol& s) const {
        auto it = std::lower_bound(symbols.begin(), symbols.end(), s);
        if (it == symbols.end() || *it != s) return std::nullopt;
        return static_cast<SymbolId>(it - symbols.begin());
    }

    const ObservationSymbol& label(NodeId n) const { return symbols[nodes[n].symbol]; }

    /// Follows (action, symbol) steps from the root; nullopt if the prefix is absent.
    std::optional<NodeId> walk(const std::vector<std::pair<ActionId, ObservationSymbol>>& prefix) const {
        NodeId at = root;
        for (const auto& [a, s] : prefix) {
            auto id = symbol_id(s);
            if (!id) return std::nullopt;
            const auto* e = nodes[at].find(a, *id);
            if (!e) return std::nullopt;
            at = e->child;
        }
        return at;
    }
};

inline Fpta build_fpta(const std::vector<ObservationTrace>& traces, std::size_t action_count = 0) {
    Fpta t;
    {
        std::unordered_map<std::string, int> seen;
        seen.emplace(ObservationSymbol::init().str(), 0);
        for (const auto& tr : traces) {
            if (!tr.initial.is_init())
                throw std::invalid_argument("build_fpta: trace does not start with {init} but '" + tr.initial.str() + "'");
            for (const auto& [a, s] : tr.steps) {
                if (seen.try_emplace(s.str(), 0).second) t.symbols.push_back(s);
                action_count = std::max<std::size_t>(action_count, a.value + 1);
            }
        }
        t.symbols.push_back(ObservationSymbol::init());
        std::sort(t.symbols.begin(), t.symbols.end());
        t.symbols.erase(std::unique(t.symbols.begin(), t.symbols.end()), t.symbols.end());
    }
    t.action_count = action_count;

    std::unordered_map<std::string, SymbolId> ids;
    ids.reserve(t.symbols.size());
    for (SymbolId i = 0; i < t.symbols.size(); ++i) ids.emplace(t.symbols[i].str(), i);

    t.nodes.push_back(FptaNode{ids.at(ObservationSymbol::init().str()), 0, {}});
    for (const auto& tr : traces) {
        NodeId at = Fpta::root;
        for (const auto& [a, s] : tr.steps) {
            const SymbolId sym = ids.at(s.str());
            auto& edges = t.nodes[at].edges;
            auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{a, sym}, [](const FptaEdge& e, const auto& key) {
                return std::pair{e.action, e.symbol} < key;
            });
            if (it != edges.end() && it->action == a && it->symbol == sym) {
                ++it->count;
                at = it->child;
            } else {
                const auto child = static_cast<NodeId>(t.nodes.size());
                edges.insert(it, FptaEdge{a, sym, child, 1});
                t.nodes.push_back(FptaNode{sym, 0, {}}); // may reallocate; `edges` is not used past this point
                at = child;
            }
        }
    }

    // Breadth-first over sorted edges enumerates access sequences in shortlex order.
    std::vector<NodeId> queue{Fpta::root};
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const NodeId n = queue[head];
        t.nodes[n].rank = static_cast<std::uint32_t>(head);
        for (const auto& e : t.nodes[n].edges) queue.push_back(e.child);
    }
    return t;
}

/// |f1/n1 - f2/n2| < sqrt(ln(2/eps)/2) * (1/sqrt(n1) + 1/sqrt(n2)); vacuously true if n1 or n2 is 0.
inline bool hoeffding_compatible(std::uint64_t f1, std::uint64_t n1, std::uint64_t f2, std::uint64_t n2, double epsilon) {
    if (n1 == 0 || n2 == 0) return true;
    const double bound = std::sqrt(0.5 * std::log(2.0 / epsilon)) *
                         (1.0 / std::sqrt(static_cast<double>(n1)) + 1.0 / std::sqrt(static_cast<double>(n2)));
    const double diff = std::abs(static_cast<double>(f1) / static_cast<double>(n1) -
                                 static_cast<double>(f2) / static_cast<double>(n2));
    return diff < bound;
}

namespace detail {

/// Recursion follows common edges only. A node without outgoing edges is
/// compatible with any node of the same label.
inline bool compatible_nodes(const std::vector<FptaNode>& nodes, NodeId a, NodeId b, double epsilon) {
    const auto& na = nodes[a];
    const auto& nb = nodes[b];
    if (na.symbol != nb.symbol) return false;

    const auto& ea = na.edges;
    const auto& eb = nb.edges;
    std::size_t i = 0, j = 0;
    while (i < ea.size() && j < eb.size()) {
        const ActionId act = std::min(ea[i].action, eb[j].action);
        std::size_t ie = i, je = j;
        std::uint64_t n1 = 0, n2 = 0;
        while (ie < ea.size() && ea[ie].action == act) n1 += ea[ie++].count;
        while (je < eb.size() && eb[je].action == act) n2 += eb[je++].count;
        if (n1 && n2) {
            std::size_t x = i, y = j;
            while (x < ie || y < je) {
                if (y >= je || (x < ie && ea[x].symbol < eb[y].symbol)) {
                    if (!hoeffding_compatible(ea[x].count, n1, 0, n2, epsilon)) return false;
                    ++x;
                } else if (x >= ie || eb[y].symbol < ea[x].symbol) {
                    if (!hoeffding_compatible(0, n1, eb[y].count, n2, epsilon)) return false;
                    ++y;
                } else {
                    if (!hoeffding_compatible(ea[x].count, n1, eb[y].count, n2, epsilon)) return false;
                    ++x;
                    ++y;
                }
            }
        }
        i = ie;
        j = je;
    }

    i = 0;
    j = 0;
    while (i < ea.size() && j < eb.size()) {
        const auto ka = std::pair{ea[i].action, ea[i].symbol};
        const auto kb = std::pair{eb[j].action, eb[j].symbol};
        if (ka < kb) {
            ++i;
        } else if (kb < ka) {
            ++j;
        } else {
            if (!compatible_nodes(nodes, ea[i].child, eb[j].child, epsilon)) return false;
            ++i;
            ++j;
        }
    }
    return true;
}

} // namespace detail

/// Equal labels, Hoeffding-compatible successor frequencies for every shared
/// action, and recursively compatible successors.
inline bool compatible(const Fpta& t, NodeId a, NodeId b, double epsilon) {
    return detail::compatible_nodes(t.nodes, a, b, epsilon);
}

struct LearnOptions {
    double epsilon = 0.005;
    std::size_t action_count = 0; ///< 0: infer from the traces
};

struct LearnStats {
    std::size_t fpta_nodes = 0;
    std::size_t merges = 0;
    std::size_t promotions = 0;
};

namespace detail {

class RedBlueMerger {
public:
    RedBlueMerger(Fpta tree, double epsilon)
        : t_(std::move(tree)), eps_(epsilon), status_(t_.nodes.size(), Status::tree),
          parent_(t_.nodes.size(), 0), queued_(t_.nodes.size(), 0) {
        edges_.reserve(t_.nodes.size());
        for (NodeId n = 0; n < t_.nodes.size(); ++n) {
            edges_.push_back(t_.nodes[n].edges);
            for (const auto& e : t_.nodes[n].edges) parent_[e.child] = n;
        }
    }

    LabeledMdp run(LearnStats* stats) {
        if (stats) stats->fpta_nodes = t_.nodes.size();
        promote(Fpta::root);
        while (!blue_.empty()) {
            const NodeId b = blue_.top().second;
            blue_.pop();
            queued_[b] = 0;
            if (status_[b] != Status::tree) continue;
            bool merged = false;
            for (NodeId r : red_by_symbol_[t_.nodes[b].symbol]) {
                if (compatible_nodes(t_.nodes, r, b, eps_)) {
                    merge(r, b);
                    merged = true;
                    break;
                }
            }
            if (merged) {
                if (stats) ++stats->merges;
            } else {
                promote(b);
                if (stats) ++stats->promotions;
            }
        }
        return to_mdp();
    }

private:
    enum class Status : std::uint8_t { tree, red, dead };
    using Entry = std::pair<std::uint32_t, NodeId>;

    void enqueue(NodeId n) {
        if (status_[n] == Status::tree && !queued_[n]) {
            queued_[n] = 1;
            blue_.emplace(t_.nodes[n].rank, n);
        }
    }

    void promote(NodeId n) {
        status_[n] = Status::red;
        auto& bucket = red_by_symbol_[t_.nodes[n].symbol];
        bucket.insert(std::upper_bound(bucket.begin(), bucket.end(), n,
                                       [&](NodeId x, NodeId y) { return t_.nodes[x].rank < t_.nodes[y].rank; }),
                      n);
        red_.push_back(n);
        for (const auto& e : edges_[n]) enqueue(e.child);
    }

    void merge(NodeId red, NodeId blue) {
        for (auto& e : edges_[parent_[blue]])
            if (e.child == blue) e.child = red;
        fold(red, blue);
    }

    void fold(NodeId into, NodeId from) {
        status_[from] = Status::dead;
        const std::size_t n = edges_[from].size();
        for (std::size_t i = 0; i < n; ++i) {
            const FptaEdge e = edges_[from][i];
            auto& target = edges_[into];
            auto it = std::lower_bound(target.begin(), target.end(), std::pair{e.action, e.symbol},
                                       [](const FptaEdge& x, const auto& key) { return std::pair{x.action, x.symbol} < key; });
            if (it != target.end() && it->action == e.action && it->symbol == e.symbol) {
                it->count += e.count;
                const NodeId next = it->child;
                fold(next, e.child);
            } else {
                target.insert(it, e);
                parent_[e.child] = into;
                if (status_[into] == Status::red) enqueue(e.child);
            }
        }
    }

    LabeledMdp to_mdp() const {
        std::vector<NodeId> reds = red_;
        std::sort(reds.begin(), reds.end(), [&](NodeId a, NodeId b) { return t_.nodes[a].rank < t_.nodes[b].rank; });
        std::unordered_map<NodeId, StateId> index;
        std::vector<ObservationSymbol> labels;
        for (auto n : reds) {
            index.emplace(n, labels.size());
            labels.push_back(t_.symbols[t_.nodes[n].symbol]);
        }
        std::vector<CountedEdge> edges;
        for (auto n : reds)
            for (const auto& e : edges_[n]) {
                auto it = index.find(e.child);
                if (it == index.end()) throw std::logic_error("ioalergia: edge from a red node to a non-red node");
                edges.push_back({index.at(n), e.action, it->second, e.count});
            }
        return make_mdp(std::move(labels), t_.action_count, edges);
    }

    const Fpta t_; ///< untouched tree; compatibility is always judged on it
    std::vector<std::vector<FptaEdge>> edges_; ///< merged and folded edges
    double eps_;
    std::vector<Status> status_;
    std::vector<NodeId> parent_;
    std::vector<char> queued_;
    std::vector<NodeId> red_;
    std::unordered_map<SymbolId, std::vector<NodeId>> red_by_symbol_;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> blue_;
};

} // namespace detail

/// Learns a deterministic labeled MDP. Blue nodes are processed in shortlex
/// order of their access sequence and merged into the first compatible red
/// node (red nodes also in shortlex order); otherwise promoted. The test
/// compares the subtrees of the original prefix tree, while merged counts are
/// folded separately and only used for the final probabilities.
inline LabeledMdp learn_mdp(const std::vector<ObservationTrace>& traces, const LearnOptions& opt = {},
                            LearnStats* stats = nullptr) {
    if (traces.empty()) throw std::invalid_argument("learn_mdp: no traces");
    if (!(opt.epsilon > 0.0)) throw std::invalid_argument("learn_mdp: epsilon must be positive");
    detail::RedBlueMerger merger(build_fpta(traces, opt.action_count), opt.epsilon);
    auto mdp = merger.run(stats);
    validate(mdp);
    return mdp;
}

inline LabeledMdp learn_mdp(const std::vector<ObservationTrace>& traces, double epsilon) {
    return learn_mdp(traces, LearnOptions{epsilon, 0});
}

} // namespace castle
