#pragma once

// Deliberately naive reference evaluator for context-free expressions. It
// shares only the AST type with the library; semantics are re-stated here
// from the language rules so it can serve as an independent oracle.

#include <cmath>
#include <string>
#include <variant>

#include "caselet/expr/expression.hpp"

namespace caselet::testing {

struct RefUndef {
    bool operator==(const RefUndef&) const = default;
};
using RefValue = std::variant<RefUndef, bool, double, std::string>;

inline RefValue ref_eval(const expr::Expression& e) {
    if (e.is_literal()) {
        const auto& v = e.as_literal();
        if (v.is_boolean()) return v.as_boolean();
        if (v.is_number()) return v.as_number();
        if (v.is_text()) return v.as_text();
        return RefUndef{};
    }
    const auto& c = e.as_call();
    const std::string& f = c.name;

    auto is_true = [](const RefValue& v) { return std::holds_alternative<bool>(v) && std::get<bool>(v); };

    if (f == "and") {
        for (const auto& a : c.args)
            if (!is_true(ref_eval(a))) return false;
        return true;
    }
    if (f == "or") {
        for (const auto& a : c.args)
            if (is_true(ref_eval(a))) return true;
        return false;
    }
    if (f == "not") return !is_true(ref_eval(c.args[0]));

    if (f == "sum" || f == "sub" || f == "mul") {
        double acc = 0;
        bool undefined = false;
        for (std::size_t i = 0; i < c.args.size(); ++i) {
            auto v = ref_eval(c.args[i]);
            if (!std::holds_alternative<double>(v)) {
                undefined = true;
                continue;
            }
            double d = std::get<double>(v);
            if (i == 0)
                acc = d;
            else if (f == "sum")
                acc = acc + d;
            else if (f == "sub")
                acc = acc - d;
            else
                acc = acc * d;
        }
        if (undefined || std::isnan(acc) || std::isinf(acc)) return RefUndef{};
        return acc;
    }

    // Comparisons.
    auto a = ref_eval(c.args[0]);
    auto b = ref_eval(c.args[1]);
    if (a.index() != b.index() || std::holds_alternative<RefUndef>(a)) return false;
    bool less = false, equal = false;
    if (auto* x = std::get_if<double>(&a)) {
        double y = std::get<double>(b);
        less = *x < y;
        equal = *x == y;
    } else if (auto* s = std::get_if<std::string>(&a)) {
        const auto& t = std::get<std::string>(b);
        // Compare as unsigned bytes, i.e. by code point for UTF-8.
        std::size_t i = 0;
        while (i < s->size() && i < t.size() && (*s)[i] == t[i]) ++i;
        if (i == s->size() || i == t.size()) {
            less = s->size() < t.size();
            equal = s->size() == t.size();
        } else {
            less = static_cast<unsigned char>((*s)[i]) < static_cast<unsigned char>(t[i]);
        }
    } else {
        bool x = std::get<bool>(a), y = std::get<bool>(b);
        less = !x && y;
        equal = x == y;
    }
    if (f == "eq") return equal;
    if (f == "ne") return !equal;
    if (f == "lt") return less;
    if (f == "lte") return less || equal;
    if (f == "gt") return !less && !equal;
    return !less;  // gte
}

inline bool same(const RefValue& ref, const expr::Value& v) {
    if (std::holds_alternative<RefUndef>(ref)) return v.is_undefined();
    if (auto* b = std::get_if<bool>(&ref)) return v.is_boolean() && v.as_boolean() == *b;
    if (auto* d = std::get_if<double>(&ref)) return v.is_number() && v.as_number() == *d;
    return v.is_text() && v.as_text() == std::get<std::string>(ref);
}

}  // namespace caselet::testing
