#pragma once

#include "castle/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace castle {

struct TrajectoryStep {
    ActionId action;
    EnvState state;

    friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

/// One episode: s0 a1 s1 ... an sn, plus the metadata persisted with it.
struct Trajectory {
    std::string env;
    std::uint64_t seed = 0;
    EnvState initial;
    std::vector<TrajectoryStep> steps;
    TerminalKind terminal = TerminalKind::bad;

    std::size_t length() const noexcept { return steps.size(); }
    const EnvState& final_state() const noexcept { return steps.empty() ? initial : steps.back().state; }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

namespace labels {
inline constexpr std::string_view init = "init";
inline constexpr std::string_view goal = "goal";
inline constexpr std::string_view bad = "bad";
inline constexpr std::string_view separator = "__";

inline std::string cluster(std::size_t k) { return "c" + std::to_string(k); }
} // namespace labels

/// A set of labels canonicalised to one string: sorted, joined with "__".
class ObservationSymbol {
public:
    ObservationSymbol() = default;

    static ObservationSymbol from_labels(std::vector<std::string> parts) {
        if (parts.empty()) throw std::invalid_argument("observation symbol needs at least one label");
        std::sort(parts.begin(), parts.end());
        parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
        std::string joined;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (i) joined += labels::separator;
            joined += parts[i];
        }
        return ObservationSymbol(std::move(joined));
    }

    /// Accepts an already canonical string (as read back from a model file).
    static ObservationSymbol parse(std::string text) {
        auto sym = ObservationSymbol(std::move(text));
        auto parts = sym.labels();
        if (parts.empty() || std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); }))
            throw std::invalid_argument("malformed observation symbol '" + sym.text_ + "'");
        if (from_labels(parts).text_ != sym.text_)
            throw std::invalid_argument("observation symbol '" + sym.text_ + "' is not canonical");
        return sym;
    }

    static ObservationSymbol init() { return ObservationSymbol(std::string(labels::init)); }

    const std::string& str() const noexcept { return text_; }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        std::size_t pos = 0;
        while (true) {
            auto next = text_.find(labels::separator, pos);
            out.push_back(text_.substr(pos, next - pos));
            if (next == std::string::npos) break;
            pos = next + labels::separator.size();
        }
        return out;
    }

    bool has(std::string_view label) const {
        auto all = labels();
        return std::find(all.begin(), all.end(), label) != all.end();
    }

    bool is_init() const { return text_ == labels::init; }
    bool is_goal() const { return has(labels::goal); }
    bool is_bad() const { return has(labels::bad); }

    /// All cluster labels "c<k>" contained in the symbol.
    std::vector<std::size_t> clusters() const {
        std::vector<std::size_t> out;
        for (const auto& l : labels()) {
            if (l.size() < 2 || l[0] != 'c') continue;
            std::size_t k = 0;
            auto [ptr, ec] = std::from_chars(l.data() + 1, l.data() + l.size(), k);
            if (ec == std::errc{} && ptr == l.data() + l.size()) out.push_back(k);
        }
        return out;
    }

    std::optional<std::size_t> cluster() const {
        auto all = clusters();
        if (all.size() != 1) return std::nullopt;
        return all.front();
    }

    auto operator<=>(const ObservationSymbol&) const = default;

private:
    explicit ObservationSymbol(std::string text) : text_(std::move(text)) {}

    std::string text_;
};

struct ObservationTrace {
    ObservationSymbol initial;
    std::vector<std::pair<ActionId, ObservationSymbol>> steps;

    friend bool operator==(const ObservationTrace&, const ObservationTrace&) = default;
};

// Trajectory files: one JSON object per line,
//   {"env":"mountain_car","seed":7,"terminal":"goal","initial":[x,v],"steps":[[a,[x,v]],...]}

inline nlohmann::json to_json_record(const Trajectory& t) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : t.steps)
        steps.push_back({s.action.value, std::vector<double>(s.state.values().begin(), s.state.values().end())});
    return {{"env", t.env},
            {"seed", t.seed},
            {"terminal", std::string(to_string(t.terminal))},
            {"initial", std::vector<double>(t.initial.values().begin(), t.initial.values().end())},
            {"steps", std::move(steps)}};
}

namespace detail {
inline EnvState parse_state(const nlohmann::json& j, std::size_t line) {
    if (!j.is_array()) throw parse_error(line, "state vector must be an array");
    std::vector<double> v;
    for (const auto& e : j) {
        if (!e.is_number()) throw parse_error(line, "state entries must be numbers");
        v.push_back(e.get<double>());
    }
    if (v.size() > EnvState::capacity) throw parse_error(line, "state vector too long");
    return EnvState(v);
}
} // namespace detail

inline Trajectory from_json_record(const nlohmann::json& j, std::size_t line) {
    if (!j.is_object()) throw parse_error(line, "record must be a JSON object");
    for (auto key : {"env", "seed", "terminal", "initial", "steps"})
        if (!j.contains(key)) throw parse_error(line, std::string("missing field '") + key + "'");
    Trajectory t;
    try {
        t.env = j.at("env").get<std::string>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.terminal = parse_terminal_kind(j.at("terminal").get<std::string>());
    } catch (const std::exception& e) {
        throw parse_error(line, e.what());
    }
    t.initial = detail::parse_state(j.at("initial"), line);
    const auto& steps = j.at("steps");
    if (!steps.is_array()) throw parse_error(line, "'steps' must be an array");
    t.steps.reserve(steps.size());
    for (const auto& s : steps) {
        if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned())
            throw parse_error(line, "step must be [action, state]");
        t.steps.push_back({ActionId{s[0].get<std::uint32_t>()}, detail::parse_state(s[1], line)});
    }
    return t;
}

inline void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajectories) {
    for (const auto& t : trajectories) out << to_json_record(t).dump() << '\n';
}

inline std::vector<Trajectory> read_trajectories(std::istream& in) {
    std::vector<Trajectory> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw parse_error(line, e.what());
        }
        out.push_back(from_json_record(j, line));
    }
    return out;
}

inline void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_trajectories(out, trajectories);
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::vector<Trajectory> load_trajectories(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    return read_trajectories(in);
}

} // namespace castle
