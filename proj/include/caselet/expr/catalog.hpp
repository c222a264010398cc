#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "caselet/expr/expression.hpp"

namespace caselet::expr {

enum class ArgKind { Any, Boolean, Numeric, Text };

struct FunctionSpec {
    std::string name;
    std::size_t min_arity = 0;
    std::optional<std::size_t> max_arity;  // nullopt: variadic
    ArgKind arg_kind = ArgKind::Any;
    ValueKind result = ValueKind::Undefined;  // Undefined here means "depends"
    bool pure = true;                         // false when the result reads the context
};

/// The fixed set of functions the language knows about.
class FunctionCatalog {
public:
    static const FunctionCatalog& standard();

    const FunctionSpec* find(std::string_view name) const;
    const std::map<std::string, FunctionSpec, std::less<>>& entries() const { return entries_; }

    bool arity_ok(const FunctionSpec& spec, std::size_t n) const {
        return n >= spec.min_arity && (!spec.max_arity || n <= *spec.max_arity);
    }

private:
    explicit FunctionCatalog(std::vector<FunctionSpec> specs);
    std::map<std::string, FunctionSpec, std::less<>> entries_;
};

struct Issue {
    ErrorCode code;
    std::string path;  // "root", "root.args[1]", ...
    std::string detail;

    friend bool operator==(const Issue&, const Issue&) = default;
};

std::vector<Issue> validate(const Expression& e, const FunctionCatalog& catalog = FunctionCatalog::standard());

/// Throws ExpressionError with the first issue, if any.
void require_valid(const Expression& e, const FunctionCatalog& catalog = FunctionCatalog::standard());

}  // namespace caselet::expr
