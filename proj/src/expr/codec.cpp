#include "caselet/expr/codec.hpp"

#include <cmath>

namespace caselet::expr {

namespace {

[[noreturn]] void malformed(const std::string& what) { throw ExpressionError(ErrorCode::MalformedDocument, what); }

double number_of(const Json& j) {
    if (!j.is_number()) malformed("\"num\" must be a number");
    return j.get<double>();
}

Expression decode_at(const Json& doc, const FunctionCatalog& catalog, std::size_t level) {
    if (level > kMaxDepth) throw ExpressionError(ErrorCode::DepthExceeded, "expression deeper than 32");
    if (!doc.is_object() || doc.size() == 0) malformed("expression node must be a non-empty object");

    if (doc.contains("name")) {
        if (doc.size() != 2 || !doc.contains("args")) malformed("call node needs exactly \"name\" and \"args\"");
        const auto& name = doc["name"];
        const auto& args = doc["args"];
        if (!name.is_string() || !args.is_array()) malformed("call node has wrong field types");
        std::vector<Expression> decoded;
        decoded.reserve(args.size());
        for (const auto& a : args) decoded.push_back(decode_at(a, catalog, level + 1));
        auto fname = name.get<std::string>();
        const auto* spec = catalog.find(fname);
        if (spec == nullptr) throw ExpressionError(ErrorCode::UnknownFunction, fname);
        if (!catalog.arity_ok(*spec, decoded.size()))
            throw ExpressionError(ErrorCode::ArityMismatch,
                                  fname + " does not accept " + std::to_string(decoded.size()) + " argument(s)");
        return Expression::call(std::move(fname), std::move(decoded));
    }
    if (doc.size() != 1) malformed("literal node must have exactly one field");
    auto v = decode_value(doc);
    if (v.is_timestamp() || v.is_undefined()) malformed("literals are limited to num, str and bool");
    return Expression::literal(std::move(v));
}

}  // namespace

Json encode_number(double d) {
    constexpr double kExact = 9007199254740992.0;  // 2^53
    if (std::trunc(d) == d && std::fabs(d) < kExact) return Json(static_cast<std::int64_t>(d));
    return Json(d);
}

Json encode(const Expression& e) {
    if (e.is_literal()) return encode_value(e.as_literal());
    const auto& c = e.as_call();
    Json args = Json::array();
    for (const auto& a : c.args) args.push_back(encode(a));
    Json out = Json::object();
    out["name"] = c.name;
    out["args"] = std::move(args);
    return out;
}

Expression decode(const Json& doc, const FunctionCatalog& catalog) {
    return decode_at(doc, catalog, 1);
}

Json encode_value(const Value& v) {
    Json out = Json::object();
    switch (v.kind()) {
        case ValueKind::Boolean: out["bool"] = v.as_boolean(); break;
        case ValueKind::Number: out["num"] = encode_number(v.as_number()); break;
        case ValueKind::Text: out["str"] = v.as_text(); break;
        case ValueKind::Timestamp: out["ts"] = v.as_timestamp().seconds; break;
        case ValueKind::Undefined: out["undefined"] = true; break;
    }
    return out;
}

Value decode_value(const Json& doc) {
    if (!doc.is_object() || doc.size() != 1) malformed("value must be an object with one tag");
    auto it = doc.begin();
    const std::string& tag = it.key();
    const Json& body = it.value();
    if (tag == "bool") {
        if (!body.is_boolean()) malformed("\"bool\" must be a boolean");
        return Value::boolean(body.get<bool>());
    }
    if (tag == "num") {
        auto v = Value::number(number_of(body));
        if (v.is_undefined()) malformed("\"num\" must be finite");
        return v;
    }
    if (tag == "str") {
        if (!body.is_string()) malformed("\"str\" must be a string");
        return Value::text(body.get<std::string>());
    }
    if (tag == "ts") {
        if (!body.is_number_integer()) malformed("\"ts\" must be an integer");
        return Value::timestamp(body.get<std::int64_t>());
    }
    if (tag == "undefined") return Value::undefined();
    malformed("unknown value tag \"" + std::string(tag) + "\"");
}

}  // namespace caselet::expr
