#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace castle {

/// Contract violation by the caller (e.g. stepping a finished episode).
class usage_error : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed input file; carries the 1-based line number.
class parse_error : public std::runtime_error {
public:
    parse_error(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct ActionId {
    std::uint32_t value = 0;

    constexpr auto operator<=>(const ActionId&) const = default;
};

/// Concrete environment state. Fixed inline capacity; the benchmarks need at most 6 entries.
class EnvState {
public:
    static constexpr std::size_t capacity = 8;

    EnvState() = default;

    explicit EnvState(std::span<const double> values) : size_(values.size()) {
        if (values.size() > capacity) throw std::invalid_argument("EnvState: dimension exceeds capacity");
        std::copy(values.begin(), values.end(), data_.begin());
    }

    EnvState(std::initializer_list<double> values)
        : EnvState(std::span<const double>(values.begin(), values.size())) {}

    std::size_t size() const noexcept { return size_; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }

    std::span<const double> values() const noexcept { return {data_.data(), size_}; }
    std::span<double> values() noexcept { return {data_.data(), size_}; }

    bool finite() const noexcept {
        return std::all_of(data_.begin(), data_.begin() + size_, [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const EnvState& a, const EnvState& b) noexcept {
        return a.size_ == b.size_ && std::equal(a.data_.begin(), a.data_.begin() + a.size_, b.data_.begin());
    }

private:
    std::array<double, capacity> data_{};
    std::size_t size_ = 0;
};

enum class TerminalKind { none, goal, bad };

inline std::string_view to_string(TerminalKind kind) {
    switch (kind) {
    case TerminalKind::none: return "none";
    case TerminalKind::goal: return "goal";
    case TerminalKind::bad: return "bad";
    }
    return "none";
}

inline TerminalKind parse_terminal_kind(std::string_view text) {
    if (text == "goal") return TerminalKind::goal;
    if (text == "bad") return TerminalKind::bad;
    if (text == "none") return TerminalKind::none;
    throw std::invalid_argument("unknown terminal kind '" + std::string(text) + "'");
}

} // namespace castle
