#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "caselet/expr/value.hpp"

namespace caselet::expr {

struct Expression;

struct Call {
    std::string name;
    std::vector<Expression> args;
};

/// A node of the expression tree: either a literal (Boolean, Number or Text)
/// or a call of a catalog function.
struct Expression {
    std::variant<Value, Call> node;

    static Expression literal(Value v) { return Expression{std::move(v)}; }
    static Expression call(std::string name, std::vector<Expression> args = {}) {
        return Expression{Call{std::move(name), std::move(args)}};
    }

    bool is_call() const { return std::holds_alternative<Call>(node); }
    bool is_literal() const { return std::holds_alternative<Value>(node); }
    const Call& as_call() const { return std::get<Call>(node); }
    const Value& as_literal() const { return std::get<Value>(node); }

    friend bool operator==(const Expression& a, const Expression& b);
};

bool operator==(const Call& a, const Call& b);

// Shorthands used heavily by tests and fixtures.
inline Expression lit(bool b) { return Expression::literal(Value::boolean(b)); }
inline Expression lit(double d) { return Expression::literal(Value::number(d)); }
inline Expression lit(int i) { return Expression::literal(Value::number(i)); }
inline Expression lit(const char* s) { return Expression::literal(Value::text(s)); }
inline Expression lit(std::string s) { return Expression::literal(Value::text(std::move(s))); }
template <typename... Args>
Expression call(std::string name, Args&&... args) {
    std::vector<Expression> v;
    (v.push_back(std::forward<Args>(args)), ...);
    return Expression::call(std::move(name), std::move(v));
}

/// Number of nodes on the longest root-to-leaf path; a lone literal has depth 1.
std::size_t depth(const Expression& e);

inline constexpr std::size_t kMaxDepth = 32;

enum class ErrorCode { SyntaxError, DepthExceeded, UnknownFunction, ArityMismatch, MalformedDocument };

std::string_view to_string(ErrorCode code);

class ExpressionError : public std::runtime_error {
public:
    ExpressionError(ErrorCode code, std::string detail, std::size_t position = 0);

    ErrorCode code() const { return code_; }
    const std::string& detail() const { return detail_; }
    /// Byte offset into the source text; only meaningful for SyntaxError.
    std::size_t position() const { return position_; }

private:
    ErrorCode code_;
    std::string detail_;
    std::size_t position_;
};

}  // namespace caselet::expr
