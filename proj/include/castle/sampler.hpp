#pragma once

// Episode sampling with a policy computed on a learned MDP. The learned model
// is run alongside the environment as a belief over its states; each step the
// belief moves along P_a and is reweighted by how close the reached concrete
// state is to the cluster of each successor.

#include "castle/envsim.hpp"
#include "castle/mdp.hpp"
#include "castle/modelcheck.hpp"
#include "castle/preprocess.hpp"
#include "castle/rng.hpp"
#include "castle/traj.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <vector>

namespace castle {

struct BeliefEntry {
    StateId state;
    double probability;

    friend bool operator==(const BeliefEntry&, const BeliefEntry&) = default;
};

/// Distribution over learned-model states, sorted by state id.
struct Belief {
    std::vector<BeliefEntry> support;

    static Belief point(StateId s) { return Belief{{{s, 1.0}}}; }

    bool empty() const noexcept { return support.empty(); }
    std::size_t size() const noexcept { return support.size(); }
    double total() const noexcept {
        double t = 0.0;
        for (const auto& e : support) t += e.probability;
        return t;
    }

    friend bool operator==(const Belief&, const Belief&) = default;
};

/// Probability of each action = belief mass of the states choosing it.
/// Mass on states without a policy choice is ignored; if no state has a
/// choice the result is all zeros.
inline std::vector<double> action_distribution(const Belief& b, const Policy& policy, std::size_t action_count) {
    std::vector<double> dist(action_count, 0.0);
    double mass = 0.0;
    for (const auto& e : b.support) {
        const auto& choice = policy.choice.at(e.state);
        if (!choice) continue;
        dist.at(choice->value) += e.probability;
        mass += e.probability;
    }
    if (mass > 0.0)
        for (auto& p : dist) p /= mass;
    return dist;
}

/// Per-cluster weight 1 - Phi((d_k - mean) / stddev) with mean and population
/// stddev taken over all centroid distances. All weights are 1/2 when the
/// distances are identical.
inline std::vector<double> distance_weights(const std::vector<double>& dists) {
    const auto n = static_cast<double>(dists.size());
    const double mean = std::accumulate(dists.begin(), dists.end(), 0.0) / n;
    double var = 0.0;
    for (double d : dists) var += (d - mean) * (d - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> w(dists.size(), 0.5);
    if (sd > 0.0)
        for (std::size_t k = 0; k < dists.size(); ++k) w[k] = 0.5 * std::erfc((dists[k] - mean) / (sd * std::numbers::sqrt2));
    return w;
}

struct SampledEpisode {
    Trajectory trajectory;
    double reward = 0.0;
    std::size_t recoveries = 0;     ///< belief re-initialisations after the support emptied
    bool random_fallback = false;   ///< no model state matched; rest of the episode used random actions
};

/// Called after every belief update with the step index (1-based).
using BeliefObserver = std::function<void(std::size_t step, const Belief&)>;

class BeliefSampler {
public:
    BeliefSampler(const LabeledMdp& mdp, const Policy& policy, const ClusterModel& clusters, std::size_t belief_size)
        : mdp_(&mdp), policy_(&policy), clusters_(&clusters), belief_size_(belief_size), state_cluster_(mdp.size()) {
        if (belief_size == 0) throw std::invalid_argument("belief size must be positive");
        if (policy.size() != mdp.size()) throw std::invalid_argument("policy does not match the model");
        for (StateId s = 0; s < mdp.size(); ++s) {
            state_cluster_[s] = mdp.states[s].label.cluster();
            if (state_cluster_[s] && *state_cluster_[s] >= clusters.k())
                throw std::invalid_argument("model label " + mdp.states[s].label.str() +
                                            " refers to a cluster beyond k = " + std::to_string(clusters.k()));
        }
    }

    std::size_t belief_size() const noexcept { return belief_size_; }

    /// One belief update after taking `act` and observing centroid distances
    /// `dists`. Returns an empty belief if no successor received weight.
    Belief update(const Belief& b, ActionId act, const std::vector<double>& dists) const {
        const auto weights = distance_weights(dists);
        std::vector<BeliefEntry> next;
        for (const auto& e : b.support) {
            const auto* branch = mdp_->states[e.state].find(act);
            if (!branch) continue;
            for (const auto& t : branch->successors) {
                const auto& k = state_cluster_[t.target];
                if (!k) throw std::logic_error("successor state '" + mdp_->states[t.target].label.str() +
                                               "' carries no single cluster label");
                next.push_back({t.target, e.probability * weights[*k]});
            }
        }
        std::sort(next.begin(), next.end(), [](const auto& x, const auto& y) { return x.state < y.state; });
        std::vector<BeliefEntry> merged;
        for (const auto& e : next) {
            if (!merged.empty() && merged.back().state == e.state)
                merged.back().probability += e.probability;
            else
                merged.push_back(e);
        }
        std::erase_if(merged, [](const BeliefEntry& e) { return !(e.probability > 0.0); });

        // keep the b_n largest, lower state id first among equals
        std::stable_sort(merged.begin(), merged.end(),
                         [](const auto& x, const auto& y) { return x.probability > y.probability; });
        if (merged.size() > belief_size_) merged.resize(belief_size_);
        std::sort(merged.begin(), merged.end(), [](const auto& x, const auto& y) { return x.state < y.state; });

        double sum = 0.0;
        for (const auto& e : merged) sum += e.probability;
        for (auto& e : merged) e.probability /= sum;
        return Belief{std::move(merged)};
    }

    /// Uniform belief over (at most b_n, lowest ids first) model states labeled
    /// with cluster `k`; empty if none.
    Belief reinitialise(std::size_t k) const {
        Belief b;
        for (StateId s = 0; s < mdp_->size() && b.support.size() < belief_size_; ++s)
            if (state_cluster_[s] == k) b.support.push_back({s, 0.0});
        for (auto& e : b.support) e.probability = 1.0 / static_cast<double>(b.support.size());
        return b;
    }

    SampledEpisode sample(Environment& env, std::uint64_t seed, const BeliefObserver& observe = {}) const {
        if (env.dimension() != clusters_->input_dim)
            throw std::invalid_argument("cluster model does not match the environment dimension");
        Rng rng(derive_seed(seed, {2}));
        SampledEpisode ep;
        ep.trajectory.env = std::string(env.name());
        ep.trajectory.seed = seed;
        ep.trajectory.initial = env.reset(seed);

        Belief belief = Belief::point(LabeledMdp::initial);
        std::uniform_int_distribution<std::uint32_t> any(0, static_cast<std::uint32_t>(env.action_count() - 1));
        while (true) {
            ActionId act{0};
            const auto ba = ep.random_fallback ? std::vector<double>{}
                                               : action_distribution(belief, *policy_, env.action_count());
            if (std::any_of(ba.begin(), ba.end(), [](double p) { return p > 0.0; })) {
                std::discrete_distribution<std::uint32_t> pick(ba.begin(), ba.end());
                act = ActionId{pick(rng)};
            } else {
                act = ActionId{any(rng)};
            }

            const auto out = env.step(act);
            ep.reward += out.reward;
            ep.trajectory.steps.push_back({act, out.next_state});
            if (out.terminal_kind != TerminalKind::none) {
                ep.trajectory.terminal = out.terminal_kind;
                return ep;
            }
            if (ep.random_fallback) continue;

            const auto dists = clusters_->centroid_distances(out.next_state);
            belief = update(belief, act, dists);
            if (belief.empty()) {
                ++ep.recoveries;
                const auto k = static_cast<std::size_t>(std::min_element(dists.begin(), dists.end()) - dists.begin());
                belief = reinitialise(k);
                if (belief.empty()) ep.random_fallback = true;
            }
            if (observe) observe(out.step_index, belief);
        }
    }

private:
    const LabeledMdp* mdp_;
    const Policy* policy_;
    const ClusterModel* clusters_;
    std::size_t belief_size_;
    std::vector<std::optional<std::size_t>> state_cluster_;
};

inline SampledEpisode sample_episode(Environment& env, const LabeledMdp& mdp, const Policy& policy,
                                     const ClusterModel& clusters, std::size_t belief_size, std::uint64_t seed) {
    return BeliefSampler(mdp, policy, clusters, belief_size).sample(env, seed);
}

} // namespace castle
