#pragma once

#include "castle/envsim.hpp"
#include "castle/rng.hpp"
#include "castle/traj.hpp"

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace castle {

struct DemoConfig {
    std::size_t episode_count = 2500;
    std::uint64_t seed = 0;
    /// Probability of replacing the scripted action by a uniformly random one.
    double controller_noise = 0.1;
    /// Minimum fraction of goal-reaching demonstrations.
    double min_goal_fraction = 0.05;
};

using Controller = std::function<ActionId(const EnvState&)>;

/// Mountain Car: accelerate in the direction of motion.
inline ActionId mountain_car_controller(const EnvState& s) { return ActionId{s[1] >= 0.0 ? 2u : 0u}; }

/// CartPole: push toward the side the pole leans.
inline ActionId cartpole_controller(const EnvState& s) { return ActionId{s[2] + 0.5 * s[3] > 0.0 ? 1u : 0u}; }

/// Acrobot: bang-bang torque against the first link's angular velocity (pumps energy into the swing).
inline ActionId acrobot_controller(const EnvState& s) { return ActionId{s[4] >= 0.0 ? 0u : 2u}; }

inline Controller scripted_controller(EnvId id) {
    switch (id) {
    case EnvId::mountain_car: return mountain_car_controller;
    case EnvId::cartpole: return cartpole_controller;
    case EnvId::acrobot: return acrobot_controller;
    }
    throw std::invalid_argument("no controller for environment");
}

/// Runs one episode with `controller`, perturbed by `noise`.
inline Trajectory run_episode(Environment& env, const Controller& controller, double noise, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {1}));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::uint32_t> any(0, static_cast<std::uint32_t>(env.action_count() - 1));

    Trajectory t;
    t.env = std::string(env.name());
    t.seed = seed;
    t.initial = env.reset(seed);
    while (true) {
        ActionId a = coin(rng) < noise ? ActionId{any(rng)} : controller(env.state());
        auto out = env.step(a);
        t.steps.push_back({a, out.next_state});
        if (out.terminal_kind != TerminalKind::none) {
            t.terminal = out.terminal_kind;
            return t;
        }
    }
}

/// Demonstration multiset; episode i uses the seed derive_seed(config.seed, {i}).
inline std::vector<Trajectory> generate_demos(EnvId id, const DemoConfig& config) {
    if (config.episode_count == 0) throw std::invalid_argument("generate_demos: episode_count must be positive");
    if (config.controller_noise < 0.0 || config.controller_noise > 1.0)
        throw std::invalid_argument("generate_demos: controller_noise must lie in [0,1]");
    auto env = make_environment(id);
    auto controller = scripted_controller(id);
    std::vector<Trajectory> out;
    out.reserve(config.episode_count);
    std::size_t goals = 0;
    for (std::size_t i = 0; i < config.episode_count; ++i) {
        out.push_back(run_episode(*env, controller, config.controller_noise, derive_seed(config.seed, {i})));
        goals += out.back().terminal == TerminalKind::goal;
    }
    const double fraction = static_cast<double>(goals) / static_cast<double>(config.episode_count);
    if (fraction < config.min_goal_fraction) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "demonstrations reach the goal in %.1f%% of episodes, need at least %.1f%%",
                      100.0 * fraction, 100.0 * config.min_goal_fraction);
        throw std::runtime_error(buf);
    }
    return out;
}

} // namespace castle
