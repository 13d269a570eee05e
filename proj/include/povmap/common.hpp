#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace povmap {

/// Error with a stable machine-readable kind tag ("EmptyIndex",
/// "SchemaError", ...) in front of the human-readable message.
class Error : public std::runtime_error {
  public:
    Error(std::string kind, const std::string &message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

    const std::string &kind() const noexcept { return kind_; }

  private:
    std::string kind_;
};

/// Shortest decimal representation that round-trips back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw Error("ParseError", "not a number: '" + std::string(s) + "'");
    }
    return v;
}

inline long long parse_int(std::string_view s) {
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw Error("ParseError", "not an integer: '" + std::string(s) + "'");
    }
    return v;
}

inline std::string zero_pad(std::size_t value, int width) {
    std::string s = std::to_string(value);
    if (static_cast<int>(s.size()) < width) {
        s.insert(s.begin(), width - s.size(), '0');
    }
    return s;
}

} // namespace povmap
