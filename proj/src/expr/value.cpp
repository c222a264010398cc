#include "caselet/expr/value.hpp"

#include <charconv>
#include <cmath>

namespace caselet::expr {

std::string_view to_string(ValueKind kind) {
    switch (kind) {
        case ValueKind::Undefined: return "Undefined";
        case ValueKind::Boolean: return "Boolean";
        case ValueKind::Number: return "Number";
        case ValueKind::Text: return "Text";
        case ValueKind::Timestamp: return "Timestamp";
    }
    return "?";
}

Value Value::boolean(bool b) {
    Value v;
    v.data_ = b;
    return v;
}

Value Value::number(double d) {
    Value v;
    if (std::isfinite(d)) v.data_ = d;
    return v;
}

Value Value::text(std::string s) {
    Value v;
    v.data_ = std::move(s);
    return v;
}

Value Value::timestamp(std::int64_t seconds) {
    Value v;
    v.data_ = Timestamp{seconds};
    return v;
}

ValueKind Value::kind() const {
    switch (data_.index()) {
        case 1: return ValueKind::Boolean;
        case 2: return ValueKind::Number;
        case 3: return ValueKind::Text;
        case 4: return ValueKind::Timestamp;
        default: return ValueKind::Undefined;
    }
}

std::optional<double> Value::numeric() const {
    if (is_number()) return as_number();
    if (is_timestamp()) return static_cast<double>(as_timestamp().seconds);
    return std::nullopt;
}

std::string format_number(double d) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, res.ptr);
}

std::string display(const Value& v) {
    switch (v.kind()) {
        case ValueKind::Boolean: return v.as_boolean() ? "true" : "false";
        case ValueKind::Number: return format_number(v.as_number());
        case ValueKind::Text: return v.as_text();
        case ValueKind::Timestamp: return std::to_string(v.as_timestamp().seconds);
        case ValueKind::Undefined: break;
    }
    return {};
}

std::string describe(const Value& v) {
    switch (v.kind()) {
        case ValueKind::Boolean: return std::string("Boolean(") + (v.as_boolean() ? "true" : "false") + ")";
        case ValueKind::Number: return "Number(" + format_number(v.as_number()) + ")";
        case ValueKind::Text: return "Text(\"" + v.as_text() + "\")";
        case ValueKind::Timestamp: return "Timestamp(" + std::to_string(v.as_timestamp().seconds) + ")";
        case ValueKind::Undefined: break;
    }
    return "Undefined";
}

}  // namespace caselet::expr
