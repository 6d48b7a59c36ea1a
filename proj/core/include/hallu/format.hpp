#pragma once

// Fixed-format number and CSV helpers so written artifacts are byte-stable.

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace hallu {

inline std::string fmt_double(double value, int precision = 6) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, value);
    std::string out(buf);
    if (out == "-0" || out.find_first_not_of("-0.") == std::string::npos) {
        if (!out.empty() && out.front() == '-') out.erase(0, 1);
    }
    return out;
}

inline std::string fmt_optional(const std::optional<double>& value, int precision = 6) {
    return value ? fmt_double(*value, precision) : std::string();
}

inline std::string csv_field(std::string_view text) {
    if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace hallu
