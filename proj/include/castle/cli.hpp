#pragma once

// Commands behind the `castle` executable. Each command reads and writes
// plain-text artifacts so runs can be inspected and resumed from any stage.
//
// Artifact layout:
//   demo      <out>                 trajectory JSONL
//   learn     <out>/clusters.json, model.{json,dot,prism,props}, run.json
//   finetune  <out>/ as learn, plus policy.{json,csv}, best_model.json,
//             best_policy.{json,csv}, metrics.csv
//   eval      prints a summary; <out> (optional) receives it as JSON

#include "castle/demo.hpp"
#include "castle/finetune.hpp"
#include "castle/ioalergia.hpp"
#include "castle/mdp.hpp"
#include "castle/modelcheck.hpp"
#include "castle/preprocess.hpp"
#include "castle/traj.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

namespace castle::cli {

namespace fs = std::filesystem;

struct RunConfig {
    std::optional<std::string> env;
    std::optional<std::size_t> k;
    std::optional<std::string> reducer; ///< "identity" or "lda:<d>"
    std::size_t demo_episodes = 2500;
    double controller_noise = 0.1;
    double epsilon = 0.005;
    std::size_t belief_size = 4;
    std::optional<std::size_t> iterations;
    std::size_t episodes_per_iteration = 50;
    std::size_t eval_episodes = 100;
    std::uint64_t seed = 0;
    std::string demos;
    std::string model;
    std::string out;
    bool force = false;
    TieBreak tie_break = TieBreak::most_observed;
    bool wall_clock = true;
    std::string policy = "auto"; ///< eval: best, final, or auto (best when present)
};

/// Experiment defaults per environment.
struct EnvDefaults {
    std::size_t k;
    std::string reducer;
    std::size_t iterations;
};

inline EnvDefaults env_defaults(EnvId id) {
    switch (id) {
    case EnvId::mountain_car: return {256, "identity", 25};
    case EnvId::cartpole: return {128, "identity", 15};
    case EnvId::acrobot: return {256, "lda:2", 25};
    }
    throw std::invalid_argument("unknown environment");
}

namespace detail {

inline void read_text(const fs::path& p, std::string& out) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + p.string() + "' for reading");
    out.assign(std::istreambuf_iterator<char>(in), {});
}

inline nlohmann::json read_json(const fs::path& p) {
    std::string text;
    read_text(p, text);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(p.string() + ": " + e.what());
    }
}

inline void write_json(const fs::path& p, const nlohmann::json& j) { write_text_file(p.string(), j.dump(1) + "\n"); }

inline void require_out(const std::string& out) {
    if (out.empty()) throw std::invalid_argument("--out is required");
}

inline void prepare_file(const fs::path& p, bool force) {
    if (fs::exists(p) && !force) throw std::runtime_error("'" + p.string() + "' exists; pass --force to overwrite");
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

inline void prepare_dir(const fs::path& p, bool force) {
    if (fs::exists(p)) {
        if (!fs::is_directory(p)) throw std::runtime_error("'" + p.string() + "' exists and is not a directory");
        if (!fs::is_empty(p) && !force)
            throw std::runtime_error("'" + p.string() + "' is not empty; pass --force to overwrite");
    }
    fs::create_directories(p);
}

inline void write_model(const fs::path& dir, const std::string& stem, const LabeledMdp& m) {
    save_mdp((dir / (stem + ".json")).string(), m);
    write_text_file((dir / (stem + ".dot")).string(), to_dot(m));
    write_text_file((dir / (stem + ".prism")).string(), to_prism(m));
    write_text_file((dir / (stem + ".props")).string(), prism_properties());
}

inline void write_policy(const fs::path& dir, const std::string& stem, const Policy& p, const LabeledMdp& m) {
    write_json(dir / (stem + ".json"), to_json(p, m));
    write_text_file((dir / (stem + ".csv")).string(), policy_table(p, m));
}

/// Resolves the environment from --env and an artifact's recorded name; both
/// present and different is an error.
inline EnvId resolve_env(const RunConfig& c, const std::optional<std::string>& recorded) {
    if (c.env && recorded && parse_env_id(*c.env) != parse_env_id(*recorded))
        throw std::invalid_argument("--env " + *c.env + " does not match the artifacts (" + *recorded + ")");
    if (c.env) return parse_env_id(*c.env);
    if (recorded) return parse_env_id(*recorded);
    throw std::invalid_argument("--env is required");
}

inline std::optional<std::string> recorded_env(const fs::path& dir) {
    const auto p = dir / "run.json";
    if (!fs::exists(p)) return std::nullopt;
    return read_json(p).at("env").get<std::string>();
}

inline std::vector<Trajectory> load_demos(const std::string& path) {
    if (path.empty()) throw std::invalid_argument("--demos is required");
    if (!fs::exists(path)) throw std::runtime_error("demonstration file '" + path + "' does not exist");
    auto demos = load_trajectories(path);
    if (demos.empty()) throw std::runtime_error("demonstration file '" + path + "' holds no trajectories");
    return demos;
}

inline void require_model_dir(const std::string& dir) {
    if (dir.empty()) throw std::invalid_argument("--model is required");
    if (!fs::is_directory(dir)) throw std::runtime_error("model directory '" + dir + "' does not exist");
}

} // namespace detail

inline void validate(const RunConfig& c) {
    if (c.env) parse_env_id(*c.env);
    if (c.k && *c.k < 2) throw std::invalid_argument("--k must be at least 2");
    if (c.reducer) ReducerSpec::parse(*c.reducer);
    if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw std::invalid_argument("--epsilon must lie in (0,1)");
    if (c.belief_size == 0) throw std::invalid_argument("--belief-size must be positive");
    if (c.policy != "auto" && c.policy != "best" && c.policy != "final")
        throw std::invalid_argument("--policy must be auto, best or final");
}

// ---------------------------------------------------------------------------

inline std::size_t cmd_demo(const RunConfig& c, std::ostream& log) {
    validate(c);
    detail::require_out(c.out);
    if (!c.env) throw std::invalid_argument("--env is required");
    const auto id = parse_env_id(*c.env);
    detail::prepare_file(c.out, c.force);
    DemoConfig dc;
    dc.episode_count = c.demo_episodes;
    dc.seed = c.seed;
    dc.controller_noise = c.controller_noise;
    const auto demos = generate_demos(id, dc);
    save_trajectories(c.out, demos);
    std::size_t goals = 0, steps = 0;
    for (const auto& t : demos) {
        goals += t.terminal == TerminalKind::goal;
        steps += t.length();
    }
    log << "wrote " << demos.size() << " episodes (" << steps << " steps, " << goals << " reached the goal) to " << c.out
        << "\n";
    return demos.size();
}

inline LabeledMdp cmd_learn(const RunConfig& c, std::ostream& log) {
    validate(c);
    detail::require_out(c.out);
    const auto demos = detail::load_demos(c.demos);
    const auto id = detail::resolve_env(c, demos.front().env);
    const auto defaults = env_defaults(id);
    auto env = make_environment(id);

    ClusterFitOptions fit;
    fit.k = c.k.value_or(defaults.k);
    fit.reducer = ReducerSpec::parse(c.reducer.value_or(defaults.reducer));
    fit.seed = c.seed;
    detail::prepare_dir(c.out, c.force);

    const auto clusters = fit_cluster_model(demos, fit);
    const auto traces = abstract_trajectories(clusters, env->task(), demos);
    auto model = learn_mdp(traces, LearnOptions{c.epsilon, env->action_count()});

    const fs::path dir = c.out;
    save_cluster_model((dir / "clusters.json").string(), clusters);
    detail::write_model(dir, "model", model);
    detail::write_json(dir / "run.json", {{"env", std::string(to_string(id))},
                                          {"demos", fs::absolute(c.demos).string()},
                                          {"k", fit.k},
                                          {"reducer", c.reducer.value_or(defaults.reducer)},
                                          {"epsilon", c.epsilon},
                                          {"seed", c.seed}});
    log << "learned model with " << model.size() << " states from " << count_timesteps(traces) << " steps\n";
    return model;
}

inline FinetuneResult cmd_finetune(const RunConfig& c, std::ostream& log) {
    validate(c);
    detail::require_out(c.out);
    detail::require_model_dir(c.model);
    const fs::path in = c.model;
    const auto run = detail::read_json(in / "run.json");
    const auto id = detail::resolve_env(c, run.at("env").get<std::string>());
    const auto clusters = load_cluster_model((in / "clusters.json").string());
    const auto demos = detail::load_demos(c.demos.empty() ? run.at("demos").get<std::string>() : c.demos);
    auto env = make_environment(id);
    if (env->dimension() != clusters.input_dim)
        throw std::invalid_argument("cluster model does not match environment " + std::string(env->name()));
    detail::prepare_dir(c.out, c.force);

    LoopConfig loop;
    loop.iterations = c.iterations.value_or(env_defaults(id).iterations);
    loop.episodes_per_iteration = c.episodes_per_iteration;
    loop.epsilon = c.epsilon;
    loop.belief_size = c.belief_size;
    loop.seed = c.seed;
    loop.policy.tie_break = c.tie_break;

    auto res = run_finetune(*env, demos, clusters, loop, [&](const IterationReport& r) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "iteration %zu: reward %.2f +/- %.2f, goal %.1f%%, %zu states\n", r.iteration,
                      r.mean_reward, r.std_reward, 100.0 * r.goal_fraction, r.model_states);
        log << buf << std::flush;
    });

    const fs::path dir = c.out;
    fs::copy_file(in / "clusters.json", dir / "clusters.json", fs::copy_options::overwrite_existing);
    detail::write_model(dir, "model", res.final.model);
    detail::write_policy(dir, "policy", res.final.policy, res.final.model);
    save_mdp((dir / "best_model.json").string(), res.best.model);
    detail::write_policy(dir, "best_policy", res.best.policy, res.best.model);
    write_text_file((dir / "metrics.csv").string(), metrics_csv(res.reports, c.wall_clock));
    auto record = run;
    record["demos"] = fs::absolute(c.demos.empty() ? run.at("demos").get<std::string>() : c.demos).string();
    record["epsilon"] = c.epsilon;
    record["seed"] = c.seed;
    record["iterations"] = loop.iterations;
    record["episodes_per_iteration"] = loop.episodes_per_iteration;
    record["belief_size"] = loop.belief_size;
    record["tie_break"] = std::string(to_string(loop.policy.tie_break));
    record["best_iteration"] = res.best_iteration ? nlohmann::json(*res.best_iteration) : nlohmann::json(nullptr);
    record["timesteps"] = res.timesteps;
    detail::write_json(dir / "run.json", record);
    log << "final model: " << res.final.model.size() << " states, " << res.timesteps << " steps of data";
    if (res.best_iteration) log << ", best iteration " << *res.best_iteration;
    log << "\n";
    return res;
}

inline EvalSummary cmd_eval(const RunConfig& c, std::ostream& log) {
    validate(c);
    if (c.eval_episodes == 0) throw std::invalid_argument("--eval-episodes must be positive");
    detail::require_model_dir(c.model);
    const fs::path in = c.model;
    const auto id = detail::resolve_env(c, detail::recorded_env(in));
    const auto clusters = load_cluster_model((in / "clusters.json").string());
    auto env = make_environment(id);
    if (env->dimension() != clusters.input_dim)
        throw std::invalid_argument("cluster model does not match environment " + std::string(env->name()));

    const bool has_best = fs::exists(in / "best_model.json");
    const bool use_best = c.policy == "best" || (c.policy == "auto" && has_best);
    if (use_best && !has_best) throw std::runtime_error("'" + c.model + "' holds no best-iteration model");
    const auto stem = use_best ? std::string("best_") : std::string();
    const auto model = load_mdp((in / (stem + "model.json")).string());
    if (const auto top = max_cluster(model); top && *top >= clusters.k())
        throw std::invalid_argument("model refers to cluster c" + std::to_string(*top) + " but the cluster model has k = " +
                                    std::to_string(clusters.k()));
    const auto policy_path = in / (stem + "policy.json");
    const auto policy = fs::exists(policy_path)
                            ? policy_from_json(detail::read_json(policy_path))
                            : extract_policy(model, reach_probabilities(model), PolicyOptions{c.tie_break});
    if (policy.size() != model.size()) throw std::invalid_argument("policy does not match the model");

    const auto s = evaluate_policy(*env, model, policy, clusters, c.belief_size, c.eval_episodes, c.seed);
    char buf[256];
    std::snprintf(buf, sizeof buf, "reward %.2f +/- %.2f, goal %.1f%% over %zu episodes", s.mean_reward, s.std_reward,
                  100.0 * s.goal_fraction, s.episodes);
    log << buf;
    if (s.relaxed_goal_fraction) {
        std::snprintf(buf, sizeof buf, ", relaxed goal %.1f%%", 100.0 * *s.relaxed_goal_fraction);
        log << buf;
    }
    if (s.solved_fraction) {
        std::snprintf(buf, sizeof buf, ", solved %.1f%%", 100.0 * *s.solved_fraction);
        log << buf;
    }
    log << "\n";
    if (!c.out.empty()) {
        detail::prepare_file(c.out, c.force);
        detail::write_json(c.out, to_json(s));
    }
    return s;
}

} // namespace castle::cli
