#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "skelid/common.hpp"

// Minimal hand-rolled JSON emission. Output is deterministic down to the
// byte: fixed key order decided by each caller, shortest round-trip number
// formatting, no locale involvement. Parsing is handled by the bundled
// nlohmann header; emission deliberately is not, so files can be compared
// and checksummed across runs.

namespace skelid::jsonw {

inline std::string escape(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(ch) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
                    out += buf;
                } else {
                    out += ch;
                }
        }
    }
    return out;
}

inline std::string str(std::string_view s) { return "\"" + escape(s) + "\""; }

inline std::string num(double v) {
    if (!std::isfinite(v)) throw ValidationError("refusing to serialize non-finite number");
    // "-0" would come back through a parser's integer path as +0; spelling it
    // with a decimal point keeps the sign bit across a round-trip.
    if (v == 0.0 && std::signbit(v)) return "-0.0";
    return format_double(v);
}

inline std::string num(std::int64_t v) { return std::to_string(v); }
inline std::string num(std::uint64_t v) { return std::to_string(v); }

inline std::string str_array(const std::vector<std::string>& items) {
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ",";
        out += str(items[i]);
    }
    out += "]";
    return out;
}

}  // namespace skelid::jsonw
