#pragma once

#include <string>
#include <vector>

#include "caselet/expr/context.hpp"
#include "caselet/expr/expression.hpp"

namespace caselet::expr {

struct EvalResult {
    Value value;
    std::vector<std::string> warnings;
};

/// Evaluates a validated expression. Total: failures fold into Undefined plus
/// a warning. Comparisons involving Undefined are false; arithmetic over
/// Undefined is Undefined; Undefined in a boolean position counts as false.
/// `and`/`or` short-circuit left to right.
EvalResult evaluate(const Expression& e, const EvalContext& ctx);

/// Boolean position coercion: only Boolean(true) is true.
inline bool truthy(const Value& v) { return v.is_boolean() && v.as_boolean(); }

}  // namespace caselet::expr
