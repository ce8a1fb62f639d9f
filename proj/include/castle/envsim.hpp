#pragma once

#include "castle/rng.hpp"
#include "castle/types.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace castle {

/// Goal/bad predicates over (state, step index) plus the episode time limit.
struct TaskSpec {
    std::function<bool(const EnvState&, std::size_t)> goal;
    std::function<bool(const EnvState&, std::size_t)> bad;
    std::size_t time_limit = 0;
    /// Episode length counted as "solved" (CartPole: 195).
    std::optional<std::size_t> solved_length;
    /// Relaxed goal: goal reached within this many steps (Acrobot: 130).
    std::optional<std::size_t> relaxed_goal_steps;

    TerminalKind classify(const EnvState& s, std::size_t step) const {
        if (goal(s, step)) return TerminalKind::goal;
        if (bad(s, step)) return TerminalKind::bad;
        return TerminalKind::none;
    }
};

struct StepOutcome {
    EnvState next_state;
    double reward = 0.0;
    std::size_t step_index = 0;
    TerminalKind terminal_kind = TerminalKind::none;
};

/// Episodic environment with the gym-style reset/step protocol.
///
/// Derived classes implement the raw dynamics; step bookkeeping, terminal
/// classification and misuse detection live here.
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string_view name() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::size_t action_count() const = 0;
    virtual const TaskSpec& task() const = 0;

    EnvState reset(std::uint64_t seed) {
        Rng rng(seed);
        step_index_ = 0;
        done_ = false;
        state_ = do_reset(rng);
        return state_;
    }

    StepOutcome step(ActionId action) {
        if (done_) throw usage_error(std::string(name()) + ": step() called on a terminal episode");
        if (action.value >= action_count())
            throw usage_error(std::string(name()) + ": action " + std::to_string(action.value) + " out of range");
        auto [next, reward] = do_step(action);
        ++step_index_;
        state_ = next;
        StepOutcome out{next, reward, step_index_, task().classify(next, step_index_)};
        done_ = out.terminal_kind != TerminalKind::none;
        return out;
    }

    const EnvState& state() const noexcept { return state_; }
    std::size_t step_index() const noexcept { return step_index_; }
    bool done() const noexcept { return done_; }

protected:
    virtual EnvState do_reset(Rng& rng) = 0;
    virtual std::pair<EnvState, double> do_step(ActionId action) = 0;

private:
    EnvState state_;
    std::size_t step_index_ = 0;
    bool done_ = true;
};

class MountainCar final : public Environment {
public:
    static constexpr double min_position = -1.2;
    static constexpr double max_position = 0.6;
    static constexpr double max_speed = 0.07;
    static constexpr double goal_position = 0.5;
    static constexpr double force = 0.001;
    static constexpr double gravity = 0.0025;

    MountainCar() {
        task_.goal = [](const EnvState& s, std::size_t) { return s[0] >= goal_position; };
        task_.bad = [](const EnvState& s, std::size_t i) { return i >= 200 && s[0] < goal_position; };
        task_.time_limit = 200;
    }

    std::string_view name() const override { return "mountain_car"; }
    std::size_t dimension() const override { return 2; }
    std::size_t action_count() const override { return 3; }
    const TaskSpec& task() const override { return task_; }

    /// Raw transition, exposed for dynamics checks.
    static EnvState dynamics(const EnvState& s, ActionId a) {
        double x = s[0];
        double v = s[1];
        v += (static_cast<double>(a.value) - 1.0) * force - gravity * std::cos(3.0 * x);
        v = std::clamp(v, -max_speed, max_speed);
        x = std::clamp(x + v, min_position, max_position);
        if (x == min_position && v < 0.0) v = 0.0;
        return {x, v};
    }

protected:
    EnvState do_reset(Rng& rng) override {
        std::uniform_real_distribution<double> pos(-0.6, -0.4);
        return {pos(rng), 0.0};
    }

    std::pair<EnvState, double> do_step(ActionId a) override { return {dynamics(state(), a), -1.0}; }

private:
    TaskSpec task_;
};

class CartPole final : public Environment {
public:
    static constexpr double gravity = 9.8;
    static constexpr double mass_cart = 1.0;
    static constexpr double mass_pole = 0.1;
    static constexpr double total_mass = mass_cart + mass_pole;
    static constexpr double half_length = 0.5;
    static constexpr double pole_mass_length = mass_pole * half_length;
    static constexpr double force_mag = 10.0;
    static constexpr double tau = 0.02;
    static constexpr double theta_threshold = 12.0 * 2.0 * std::numbers::pi / 360.0;
    static constexpr double x_threshold = 2.4;

    CartPole() {
        task_.bad = [](const EnvState& s, std::size_t) { return out_of_bounds(s); };
        task_.goal = [](const EnvState& s, std::size_t i) { return i >= 200 && !out_of_bounds(s); };
        task_.time_limit = 200;
        task_.solved_length = 195;
    }

    std::string_view name() const override { return "cartpole"; }
    std::size_t dimension() const override { return 4; }
    std::size_t action_count() const override { return 2; }
    const TaskSpec& task() const override { return task_; }

    static bool out_of_bounds(const EnvState& s) {
        return s[0] < -x_threshold || s[0] > x_threshold || s[2] < -theta_threshold || s[2] > theta_threshold;
    }

    static EnvState dynamics(const EnvState& s, ActionId a) {
        const double x = s[0], x_dot = s[1], theta = s[2], theta_dot = s[3];
        const double f = a.value == 1 ? force_mag : -force_mag;
        const double cos_t = std::cos(theta);
        const double sin_t = std::sin(theta);
        const double temp = (f + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
        const double theta_acc =
            (gravity * sin_t - cos_t * temp) / (half_length * (4.0 / 3.0 - mass_pole * cos_t * cos_t / total_mass));
        const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;
        return {x + tau * x_dot, x_dot + tau * x_acc, theta + tau * theta_dot, theta_dot + tau * theta_acc};
    }

protected:
    EnvState do_reset(Rng& rng) override {
        std::uniform_real_distribution<double> u(-0.05, 0.05);
        double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
        return {a, b, c, d};
    }

    std::pair<EnvState, double> do_step(ActionId a) override { return {dynamics(state(), a), 1.0}; }

private:
    TaskSpec task_;
};

/// Two-link acrobot, "book" dynamics, RK4 over one 0.2 s step, no torque noise.
/// The observable state is (cos t1, sin t1, cos t2, sin t2, dt1, dt2).
class Acrobot final : public Environment {
public:
    static constexpr double dt = 0.2;
    static constexpr double link_length_1 = 1.0;
    static constexpr double link_mass_1 = 1.0;
    static constexpr double link_mass_2 = 1.0;
    static constexpr double link_com_1 = 0.5;
    static constexpr double link_com_2 = 0.5;
    static constexpr double link_moi = 1.0;
    static constexpr double max_vel_1 = 4.0 * std::numbers::pi;
    static constexpr double max_vel_2 = 9.0 * std::numbers::pi;
    static constexpr double g = 9.8;

    using Internal = std::array<double, 4>;

    Acrobot() {
        task_.goal = [](const EnvState& s, std::size_t) { return tip_height(s) > 1.0; };
        task_.bad = [](const EnvState& s, std::size_t i) { return i >= 200 && tip_height(s) <= 1.0; };
        task_.time_limit = 200;
        task_.relaxed_goal_steps = 130;
    }

    std::string_view name() const override { return "acrobot"; }
    std::size_t dimension() const override { return 6; }
    std::size_t action_count() const override { return 3; }
    const TaskSpec& task() const override { return task_; }

    /// -cos(t1) - cos(t1 + t2), from the observation.
    static double tip_height(const EnvState& s) {
        const double c1 = s[0], s1 = s[1], c2 = s[2], s2 = s[3];
        return -c1 - (c1 * c2 - s1 * s2);
    }

    static EnvState observe(const Internal& q) {
        return {std::cos(q[0]), std::sin(q[0]), std::cos(q[1]), std::sin(q[1]), q[2], q[3]};
    }

    static Internal dynamics(const Internal& q, ActionId a) {
        const double torque = static_cast<double>(a.value) - 1.0;
        auto add = [](const Internal& x, const Internal& k, double h) {
            return Internal{x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2], x[3] + h * k[3]};
        };
        const Internal k1 = derivative(q, torque);
        const Internal k2 = derivative(add(q, k1, dt / 2.0), torque);
        const Internal k3 = derivative(add(q, k2, dt / 2.0), torque);
        const Internal k4 = derivative(add(q, k3, dt), torque);
        Internal n;
        for (std::size_t i = 0; i < 4; ++i) n[i] = q[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        n[0] = wrap(n[0]);
        n[1] = wrap(n[1]);
        n[2] = std::clamp(n[2], -max_vel_1, max_vel_1);
        n[3] = std::clamp(n[3], -max_vel_2, max_vel_2);
        return n;
    }

    const Internal& internal() const noexcept { return q_; }

protected:
    EnvState do_reset(Rng& rng) override {
        std::uniform_real_distribution<double> u(-0.1, 0.1);
        for (auto& v : q_) v = u(rng);
        return observe(q_);
    }

    std::pair<EnvState, double> do_step(ActionId a) override {
        q_ = dynamics(q_, a);
        return {observe(q_), -1.0};
    }

private:
    static double wrap(double x) {
        constexpr double pi = std::numbers::pi;
        while (x > pi) x -= 2.0 * pi;
        while (x < -pi) x += 2.0 * pi;
        return x;
    }

    static Internal derivative(const Internal& q, double torque) {
        constexpr double pi = std::numbers::pi;
        const double m1 = link_mass_1, m2 = link_mass_2, l1 = link_length_1;
        const double lc1 = link_com_1, lc2 = link_com_2, i1 = link_moi, i2 = link_moi;
        const double t1 = q[0], t2 = q[1], dt1 = q[2], dt2 = q[3];
        const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(t2)) + i1 + i2;
        const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(t2)) + i2;
        const double phi2 = m2 * lc2 * g * std::cos(t1 + t2 - pi / 2.0);
        const double phi1 = -m2 * l1 * lc2 * dt2 * dt2 * std::sin(t2) - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * std::sin(t2) +
                            (m1 * lc1 + m2 * l1) * g * std::cos(t1 - pi / 2.0) + phi2;
        const double ddt2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1 * dt1 * std::sin(t2) - phi2) /
                            (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        const double ddt1 = -(d2 * ddt2 + phi1) / d1;
        return {dt1, dt2, ddt1, ddt2};
    }

    TaskSpec task_;
    Internal q_{};
};

enum class EnvId { mountain_car, cartpole, acrobot };

inline std::string_view to_string(EnvId id) {
    switch (id) {
    case EnvId::mountain_car: return "mountain_car";
    case EnvId::cartpole: return "cartpole";
    case EnvId::acrobot: return "acrobot";
    }
    return "";
}

inline EnvId parse_env_id(std::string_view name) {
    if (name == "mountain_car") return EnvId::mountain_car;
    if (name == "cartpole") return EnvId::cartpole;
    if (name == "acrobot") return EnvId::acrobot;
    throw std::invalid_argument("unsupported environment '" + std::string(name) + "'");
}

inline std::unique_ptr<Environment> make_environment(EnvId id) {
    switch (id) {
    case EnvId::mountain_car: return std::make_unique<MountainCar>();
    case EnvId::cartpole: return std::make_unique<CartPole>();
    case EnvId::acrobot: return std::make_unique<Acrobot>();
    }
    throw std::invalid_argument("unsupported environment");
}

inline std::unique_ptr<Environment> make_environment(std::string_view name) { return make_environment(parse_env_id(name)); }

} // namespace castle
