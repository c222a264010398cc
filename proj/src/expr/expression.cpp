#include "caselet/expr/expression.hpp"

#include <algorithm>

namespace caselet::expr {

bool operator==(const Call& a, const Call& b) {
    return a.name == b.name && a.args == b.args;
}

bool operator==(const Expression& a, const Expression& b) {
    return a.node == b.node;
}

std::size_t depth(const Expression& e) {
    if (!e.is_call()) return 1;
    std::size_t deepest = 0;
    for (const auto& arg : e.as_call().args) deepest = std::max(deepest, depth(arg));
    return deepest + 1;
}

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::SyntaxError: return "SyntaxError";
        case ErrorCode::DepthExceeded: return "DepthExceeded";
        case ErrorCode::UnknownFunction: return "UnknownFunction";
        case ErrorCode::ArityMismatch: return "ArityMismatch";
        case ErrorCode::MalformedDocument: return "MalformedDocument";
    }
    return "?";
}

ExpressionError::ExpressionError(ErrorCode code, std::string detail, std::size_t position)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(std::move(detail)),
      position_(position) {}

}  // namespace caselet::expr
