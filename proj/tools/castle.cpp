// castle: demo -> learn -> finetune -> eval from the command line.

#include "castle/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using castle::cli::RunConfig;

void add_env(CLI::App* app, RunConfig& c) {
    app->add_option("--env", c.env, "mountain_car, cartpole or acrobot")
        ->check(CLI::IsMember({"mountain_car", "cartpole", "acrobot"}));
}

void add_seed(CLI::App* app, RunConfig& c) {
    app->add_option("--seed", c.seed, "Seed for every random choice")->envname("CASTLE_SEED")->capture_default_str();
}

void add_force(CLI::App* app, RunConfig& c) { app->add_flag("--force", c.force, "Overwrite existing outputs"); }

void add_tie_break(CLI::App* app, std::string& text) {
    app->add_option("--tie-break", text, "Choice among equally good actions: most-observed or lowest-action")
        ->check(CLI::IsMember({"most-observed", "lowest-action"}))
        ->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learn abstract MDPs from demonstrations and compute policies on them"};
    app.set_config("--config", "", "TOML or INI file with option values; command-line flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();
    RunConfig c;
    std::string tie_break = "most-observed";

    auto* demo = app.add_subcommand("demo", "Generate scripted demonstrations");
    add_env(demo, c);
    demo->add_option("--episodes", c.demo_episodes, "Number of episodes")->capture_default_str();
    demo->add_option("--noise", c.controller_noise, "Probability of a random action per step")->capture_default_str();
    add_seed(demo, c);
    demo->add_option("--out", c.out, "Trajectory file (JSONL)");
    add_force(demo, c);

    auto* learn = app.add_subcommand("learn", "Fit the cluster model and learn the initial MDP");
    add_env(learn, c);
    learn->add_option("--demos", c.demos, "Trajectory file from `demo`");
    learn->add_option("--k", c.k, "Number of clusters (default per environment)");
    learn->add_option("--dim", c.reducer, "identity or lda:<d> (default per environment)");
    learn->add_option("--epsilon", c.epsilon, "Compatibility test parameter")->capture_default_str();
    add_seed(learn, c);
    learn->add_option("--out", c.out, "Output directory");
    add_force(learn, c);

    auto* finetune = app.add_subcommand("finetune", "Refine the model by sampling with its policy");
    add_env(finetune, c);
    finetune->add_option("--model", c.model, "Directory written by `learn`");
    finetune->add_option("--demos", c.demos, "Trajectory file (default: the one used by `learn`)");
    finetune->add_option("--epsilon", c.epsilon, "Compatibility test parameter")->capture_default_str();
    finetune->add_option("--belief-size", c.belief_size, "Belief support size")->capture_default_str();
    finetune->add_option("--iterations", c.iterations, "Fine-tuning iterations (default per environment)");
    finetune->add_option("--episodes-per-iter", c.episodes_per_iteration, "Episodes per iteration")
        ->capture_default_str();
    add_tie_break(finetune, tie_break);
    finetune->add_flag("!--no-wall-clock", c.wall_clock, "Write 0 in the seconds column of metrics.csv");
    add_seed(finetune, c);
    finetune->add_option("--out", c.out, "Output directory");
    add_force(finetune, c);

    auto* eval = app.add_subcommand("eval", "Evaluate a policy on fresh episodes");
    add_env(eval, c);
    eval->add_option("--model", c.model, "Directory written by `learn` or `finetune`");
    eval->add_option("--policy", c.policy, "best, final or auto")
        ->check(CLI::IsMember({"auto", "best", "final"}))
        ->capture_default_str();
    eval->add_option("--belief-size", c.belief_size, "Belief support size")->capture_default_str();
    eval->add_option("--eval-episodes", c.eval_episodes, "Number of episodes")->capture_default_str();
    add_tie_break(eval, tie_break);
    add_seed(eval, c);
    eval->add_option("--out", c.out, "JSON summary file");
    add_force(eval, c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "castle: " << e.what() << '\n';
        return 2;
    }

    c.tie_break = castle::parse_tie_break(tie_break);
    try {
        if (*demo) castle::cli::cmd_demo(c, std::cout);
        if (*learn) castle::cli::cmd_learn(c, std::cout);
        if (*finetune) castle::cli::cmd_finetune(c, std::cout);
        if (*eval) castle::cli::cmd_eval(c, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "castle: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
