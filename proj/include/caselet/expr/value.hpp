#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace caselet::expr {

/// Seconds since the Unix epoch, UTC.
struct Timestamp {
    std::int64_t seconds = 0;

    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

struct Undefined {
    friend bool operator==(const Undefined&, const Undefined&) = default;
};

enum class ValueKind { Undefined, Boolean, Number, Text, Timestamp };

std::string_view to_string(ValueKind kind);

/// Result and literal value universe of the expression language.
///
/// Numbers are always finite: constructing a Number from NaN or an infinity
/// yields Undefined instead.
class Value {
public:
    Value() = default;

    static Value undefined() { return Value{}; }
    static Value boolean(bool b);
    static Value number(double d);
    static Value text(std::string s);
    static Value timestamp(std::int64_t seconds);
    static Value timestamp(Timestamp ts) { return timestamp(ts.seconds); }

    ValueKind kind() const;
    bool is_undefined() const { return std::holds_alternative<Undefined>(data_); }
    bool is_boolean() const { return std::holds_alternative<bool>(data_); }
    bool is_number() const { return std::holds_alternative<double>(data_); }
    bool is_text() const { return std::holds_alternative<std::string>(data_); }
    bool is_timestamp() const { return std::holds_alternative<Timestamp>(data_); }

    bool as_boolean() const { return std::get<bool>(data_); }
    double as_number() const { return std::get<double>(data_); }
    const std::string& as_text() const { return std::get<std::string>(data_); }
    Timestamp as_timestamp() const { return std::get<Timestamp>(data_); }

    /// Number or Timestamp as a double; nullopt for anything else.
    std::optional<double> numeric() const;

    friend bool operator==(const Value&, const Value&) = default;

private:
    std::variant<Undefined, bool, double, std::string, Timestamp> data_;
};

/// Shortest decimal rendering that parses back to the same double.
std::string format_number(double d);

/// Human-facing rendering: numbers minimal, booleans as true/false, timestamps
/// as integer seconds, Undefined as the empty string.
std::string display(const Value& v);

/// Debug rendering that keeps the kind visible, e.g. `Text("a")`.
std::string describe(const Value& v);

}  // namespace caselet::expr
