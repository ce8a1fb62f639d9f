#pragma once

// Model refinement loop: learn -> model check -> sample with the belief
// sampler -> append traces -> relearn.

#include "castle/envsim.hpp"
#include "castle/ioalergia.hpp"
#include "castle/log.hpp"
#include "castle/modelcheck.hpp"
#include "castle/preprocess.hpp"
#include "castle/rng.hpp"
#include "castle/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace castle {

struct LoopConfig {
    std::size_t iterations = 25;
    std::size_t episodes_per_iteration = 50;
    double epsilon = 0.005;
    std::size_t belief_size = 4;
    PolicyOptions policy;
    std::optional<std::size_t> goal_stop_count;
    std::uint64_t seed = 0;
};

struct IterationReport {
    std::size_t iteration = 0;
    double mean_reward = 0.0;
    double std_reward = 0.0;
    double goal_fraction = 0.0;
    std::size_t model_states = 0;
    double seconds = 0.0;
};

struct EpisodeStats {
    double mean_reward = 0.0;
    double std_reward = 0.0;
    double goal_fraction = 0.0;
    std::size_t goals = 0;
};

inline EpisodeStats summarise(const std::vector<SampledEpisode>& eps) {
    EpisodeStats s;
    if (eps.empty()) return s;
    const auto n = static_cast<double>(eps.size());
    for (const auto& e : eps) {
        s.mean_reward += e.reward;
        s.goals += e.trajectory.terminal == TerminalKind::goal;
    }
    s.mean_reward /= n;
    for (const auto& e : eps) s.std_reward += (e.reward - s.mean_reward) * (e.reward - s.mean_reward);
    s.std_reward = std::sqrt(s.std_reward / n);
    s.goal_fraction = static_cast<double>(s.goals) / n;
    return s;
}

/// Model + policy pair as produced in one iteration.
struct PolicyModel {
    LabeledMdp model;
    Policy policy;
};

inline PolicyModel solve(LabeledMdp model, const PolicyOptions& opt = {}) {
    if (!has_goal_state(model)) warn("learned model has no goal state; policy is arbitrary");
    Policy policy = extract_policy(model, reach_probabilities(model), opt);
    return {std::move(model), std::move(policy)};
}

struct FinetuneResult {
    PolicyModel final;                    ///< learned from every collected trace
    std::optional<std::size_t> best_iteration;
    PolicyModel best;                     ///< policy of the iteration with the highest mean reward
    std::vector<IterationReport> reports;
    std::vector<ObservationTrace> traces; ///< the grown trace multiset
    std::size_t timesteps = 0;            ///< total steps over all traces
};

using IterationCallback = std::function<void(const IterationReport&)>;

inline std::size_t count_timesteps(const std::vector<ObservationTrace>& traces) {
    std::size_t n = 0;
    for (const auto& t : traces) n += t.steps.size();
    return n;
}

/// Runs the refinement loop. The cluster model stays frozen throughout.
inline FinetuneResult run_finetune(Environment& env, const std::vector<Trajectory>& demos, const ClusterModel& clusters,
                                   const LoopConfig& config, const IterationCallback& on_iteration = {}) {
    if (config.episodes_per_iteration == 0 && config.iterations > 0)
        throw std::invalid_argument("finetune: episodes per iteration must be positive");
    if (config.belief_size == 0) throw std::invalid_argument("finetune: belief size must be positive");
    if (std::none_of(demos.begin(), demos.end(), [](const Trajectory& t) { return t.terminal == TerminalKind::goal; }))
        throw std::invalid_argument("finetune: demonstrations contain no goal-reaching trajectory");

    const LearnOptions learn{config.epsilon, env.action_count()};
    FinetuneResult res;
    res.traces = abstract_trajectories(clusters, env.task(), demos);

    double best_reward = -std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= config.iterations; ++it) {
        const auto start = std::chrono::steady_clock::now();
        auto current = solve(learn_mdp(res.traces, learn), config.policy);
        const BeliefSampler sampler(current.model, current.policy, clusters, config.belief_size);

        std::vector<SampledEpisode> episodes;
        episodes.reserve(config.episodes_per_iteration);
        for (std::size_t e = 0; e < config.episodes_per_iteration; ++e)
            episodes.push_back(sampler.sample(env, derive_seed(config.seed, {it, e})));
        for (const auto& ep : episodes) res.traces.push_back(abstract_trajectory(clusters, env.task(), ep.trajectory));

        const auto stats = summarise(episodes);
        IterationReport report;
        report.iteration = it;
        report.mean_reward = stats.mean_reward;
        report.std_reward = stats.std_reward;
        report.goal_fraction = stats.goal_fraction;
        report.model_states = current.model.size();
        report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        res.reports.push_back(report);
        if (on_iteration) on_iteration(report);

        if (stats.mean_reward > best_reward) {
            best_reward = stats.mean_reward;
            res.best_iteration = it;
            res.best = std::move(current);
        }
        if (config.goal_stop_count && stats.goals >= *config.goal_stop_count) break;
    }

    res.final = solve(learn_mdp(res.traces, learn), config.policy);
    if (!res.best_iteration) res.best = res.final;
    res.timesteps = count_timesteps(res.traces);
    return res;
}

inline constexpr std::string_view metrics_header = "iteration,mean_reward,std_reward,goal_fraction,model_states,seconds";

/// Iteration metrics as CSV. With `wall_clock` false the seconds column is
/// written as 0 so that repeated runs produce identical files.
inline std::string metrics_csv(const std::vector<IterationReport>& reports, bool wall_clock = true) {
    std::string out(metrics_header);
    out += '\n';
    char buf[256];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%zu,%.3f\n", r.iteration, r.mean_reward, r.std_reward,
                      r.goal_fraction, r.model_states, wall_clock ? r.seconds : 0.0);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalSummary {
    std::size_t episodes = 0;
    double mean_reward = 0.0;
    double std_reward = 0.0;
    double goal_fraction = 0.0;
    std::optional<double> relaxed_goal_fraction; ///< goal within the task's relaxed step budget
    std::optional<double> solved_fraction;       ///< episode length >= the task's solved length
    double mean_length = 0.0;
};

inline EvalSummary evaluate_policy(Environment& env, const LabeledMdp& model, const Policy& policy,
                                   const ClusterModel& clusters, std::size_t belief_size, std::size_t episodes,
                                   std::uint64_t seed) {
    if (episodes == 0) throw std::invalid_argument("evaluation needs at least one episode");
    const BeliefSampler sampler(model, policy, clusters, belief_size);
    std::vector<SampledEpisode> eps;
    eps.reserve(episodes);
    for (std::size_t e = 0; e < episodes; ++e) eps.push_back(sampler.sample(env, derive_seed(seed, {0xE7A1u, e})));

    const auto stats = summarise(eps);
    EvalSummary s;
    s.episodes = episodes;
    s.mean_reward = stats.mean_reward;
    s.std_reward = stats.std_reward;
    s.goal_fraction = stats.goal_fraction;
    const auto& task = env.task();
    std::size_t relaxed = 0, solved = 0;
    for (const auto& e : eps) {
        s.mean_length += static_cast<double>(e.trajectory.length());
        if (task.relaxed_goal_steps && e.trajectory.terminal == TerminalKind::goal &&
            e.trajectory.length() <= *task.relaxed_goal_steps)
            ++relaxed;
        if (task.solved_length && e.trajectory.length() >= *task.solved_length) ++solved;
    }
    s.mean_length /= static_cast<double>(episodes);
    if (task.relaxed_goal_steps) s.relaxed_goal_fraction = static_cast<double>(relaxed) / static_cast<double>(episodes);
    if (task.solved_length) s.solved_fraction = static_cast<double>(solved) / static_cast<double>(episodes);
    return s;
}

inline nlohmann::json to_json(const EvalSummary& s) {
    nlohmann::json j = {{"episodes", s.episodes},
                        {"mean_reward", s.mean_reward},
                        {"std_reward", s.std_reward},
                        {"goal_fraction", s.goal_fraction},
                        {"mean_length", s.mean_length}};
    if (s.relaxed_goal_fraction) j["relaxed_goal_fraction"] = *s.relaxed_goal_fraction;
    if (s.solved_fraction) j["solved_fraction"] = *s.solved_fraction;
    return j;
}

} // namespace castle
