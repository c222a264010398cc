#pragma once

#include <string>
#include <string_view>

#include "caselet/expr/catalog.hpp"

namespace caselet::expr {

/// Parses the call-expression grammar:
///
///     expr    := call | literal
///     call    := ident "(" [expr ("," expr)*] ")"
///     literal := number | string | "true" | "false"
///
/// The result is validated against `catalog`; failures throw ExpressionError.
Expression parse_text(std::string_view source, const FunctionCatalog& catalog = FunctionCatalog::standard());

/// Canonical form: double-quoted strings, shortest round-trip numbers, ", "
/// between arguments.
std::string print_text(const Expression& e);

}  // namespace caselet::expr
