#pragma once

#include "caselet/expr/catalog.hpp"
#include "caselet/json.hpp"

namespace caselet::expr {

// Canonical document encoding:
//   Call    -> {"name": <text>, "args": [<arg>...]}
//   literal -> {"num": <number>} | {"str": <text>} | {"bool": <bool>}
Json encode(const Expression& e);
Expression decode(const Json& doc, const FunctionCatalog& catalog = FunctionCatalog::standard());

/// Tagged encoding for runtime values; extends the literal encoding with
/// {"ts": <int>} and {"undefined": true}.
Json encode_value(const Value& v);
Value decode_value(const Json& doc);

/// Integral doubles inside the exact range are written as JSON integers.
Json encode_number(double d);

}  // namespace caselet::expr
