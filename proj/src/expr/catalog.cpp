#include "caselet/expr/catalog.hpp"

namespace caselet::expr {

namespace {

FunctionSpec fn(std::string name, std::size_t lo, std::optional<std::size_t> hi, ArgKind args, ValueKind result,
                bool pure) {
    return FunctionSpec{std::move(name), lo, hi, args, result, pure};
}

std::vector<FunctionSpec> standard_specs() {
    using K = ValueKind;
    using A = ArgKind;
    constexpr auto many = std::nullopt;
    return {
        fn("and", 1, many, A::Boolean, K::Boolean, true),
        fn("or", 1, many, A::Boolean, K::Boolean, true),
        fn("not", 1, 1, A::Boolean, K::Boolean, true),
        fn("eq", 2, 2, A::Any, K::Boolean, true),
        fn("ne", 2, 2, A::Any, K::Boolean, true),
        fn("lt", 2, 2, A::Any, K::Boolean, true),
        fn("lte", 2, 2, A::Any, K::Boolean, true),
        fn("gt", 2, 2, A::Any, K::Boolean, true),
        fn("gte", 2, 2, A::Any, K::Boolean, true),
        fn("sum", 1, many, A::Numeric, K::Number, true),
        fn("sub", 2, 2, A::Numeric, K::Number, true),
        fn("mul", 1, many, A::Numeric, K::Number, true),
        fn("now", 0, 0, A::Any, K::Timestamp, false),
        fn("timestampWithOffset", 1, 2, A::Numeric, K::Timestamp, false),
        fn("getResponseValue", 2, 2, A::Text, K::Undefined, false),
        fn("hasResponse", 2, 2, A::Text, K::Boolean, false),
        fn("countSelected", 1, 1, A::Text, K::Number, false),
        fn("getPrevResponseValue", 3, 3, A::Text, K::Undefined, false),
        fn("getLastSubmissionDate", 1, 1, A::Text, K::Timestamp, false),
        fn("getStudyFlag", 1, 1, A::Text, K::Undefined, false),
        fn("hasStudyStatus", 1, 1, A::Text, K::Boolean, false),
        fn("getEventPayload", 1, 1, A::Text, K::Undefined, false),
        fn("getContext", 1, 1, A::Text, K::Undefined, false),
    };
}

void collect(const Expression& e, const FunctionCatalog& catalog, const std::string& path, std::size_t level,
             std::vector<Issue>& out) {
    if (level > kMaxDepth) {
        out.push_back({ErrorCode::DepthExceeded, path, "expression deeper than " + std::to_string(kMaxDepth)});
        return;
    }
    if (!e.is_call()) return;
    const auto& c = e.as_call();
    if (const auto* spec = catalog.find(c.name); spec == nullptr) {
        out.push_back({ErrorCode::UnknownFunction, path, c.name});
    } else if (!catalog.arity_ok(*spec, c.args.size())) {
        out.push_back({ErrorCode::ArityMismatch, path,
                       c.name + " does not accept " + std::to_string(c.args.size()) + " argument(s)"});
    }
    for (std::size_t i = 0; i < c.args.size(); ++i)
        collect(c.args[i], catalog, path + ".args[" + std::to_string(i) + "]", level + 1, out);
}

}  // namespace

FunctionCatalog::FunctionCatalog(std::vector<FunctionSpec> specs) {
    for (auto& s : specs) {
        auto name = s.name;
        entries_.emplace(std::move(name), std::move(s));
    }
}

const FunctionCatalog& FunctionCatalog::standard() {
    static const FunctionCatalog catalog(standard_specs());
    return catalog;
}

const FunctionSpec* FunctionCatalog::find(std::string_view name) const {
    auto it = entries_.find(name);
    return it == entries_.end() ? nullptr : &it->second;
}

std::vector<Issue> validate(const Expression& e, const FunctionCatalog& catalog) {
    std::vector<Issue> issues;
    collect(e, catalog, "root", 1, issues);
    return issues;
}

void require_valid(const Expression& e, const FunctionCatalog& catalog) {
    auto issues = validate(e, catalog);
    if (!issues.empty()) throw ExpressionError(issues.front().code, issues.front().detail);
}

}  // namespace caselet::expr
