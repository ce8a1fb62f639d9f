#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <string_view>
#include <utility>

namespace castle {

using WarningHandler = std::function<void(std::string_view)>;

inline WarningHandler& warning_handler() {
    static WarningHandler handler = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return handler;
}

inline void warn(std::string_view msg) {
    if (warning_handler()) warning_handler()(msg);
}

/// Replaces the warning sink for the lifetime of the guard.
class ScopedWarningHandler {
public:
    explicit ScopedWarningHandler(WarningHandler h) : saved_(std::exchange(warning_handler(), std::move(h))) {}
    ~ScopedWarningHandler() { warning_handler() = std::move(saved_); }
    ScopedWarningHandler(const ScopedWarningHandler&) = delete;
    ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

private:
    WarningHandler saved_;
};

} // namespace castle
