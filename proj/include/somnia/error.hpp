#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace somnia {

// All library failures throw Error. `kind` is a stable machine-readable tag
// (e.g. "EmptySignal", "ParseError") used by tests and the CLI exit-code map;
// what() carries the human diagnostic.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

[[noreturn]] inline void fail(std::string kind, const std::string& message) {
    throw Error(std::move(kind), message);
}

inline void require(bool cond, const char* kind, const std::string& message) {
    if (!cond) fail(kind, message);
}

}  // namespace somnia
