#pragma once

// Random generators shared by the property tests and the acceptance suite.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "caselet/expr/catalog.hpp"

namespace caselet::testing {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    std::uint64_t next() { return rng_(); }
    // Modulo bias is irrelevant for test data.
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
    bool chance(double p) { return static_cast<double>(rng_() >> 11) * 0x1.0p-53 < p; }

    double number() {
        switch (below(6)) {
            case 0: return static_cast<double>(below(10));
            case 1: return -static_cast<double>(below(1000));
            case 2: return static_cast<double>(below(1 << 20)) / 8.0;
            case 3: return static_cast<double>(rng_() >> 11) * 0x1.0p-53 * 1e6 - 5e5;
            case 4: return 1e21 * static_cast<double>(1 + below(9));
            default: return 0.1 * static_cast<double>(below(100));
        }
    }

    std::string text() {
        static const std::vector<std::string> atoms = {"a", "b", "yes", "no", " ", "\"", "\\", "\n", "é", "Q1", ","};
        std::string s;
        auto n = below(5);
        for (std::size_t i = 0; i < n; ++i) s += atoms[below(atoms.size())];
        return s;
    }

    expr::Expression literal() {
        switch (below(3)) {
            case 0: return expr::lit(chance(0.5));
            case 1: return expr::lit(number());
            default: return expr::lit(text());
        }
    }

    /// Any catalog function with a legal arity; depth <= max_depth.
    expr::Expression any_tree(std::size_t max_depth) {
        if (max_depth <= 1 || chance(0.25)) return literal();
        const auto& entries = expr::FunctionCatalog::standard().entries();
        auto it = entries.begin();
        std::advance(it, static_cast<long>(below(entries.size())));
        const auto& spec = it->second;
        std::size_t hi = spec.max_arity ? *spec.max_arity : spec.min_arity + 3;
        std::size_t n = spec.min_arity + below(hi - spec.min_arity + 1);
        std::vector<expr::Expression> args;
        for (std::size_t i = 0; i < n; ++i) args.push_back(any_tree(max_depth - 1));
        return expr::Expression::call(spec.name, std::move(args));
    }

    /// Context-free tree over logical, comparison and arithmetic functions.
    /// Mostly well-typed, with occasional kind mixing to exercise the
    /// Undefined and cross-kind rules.
    expr::Expression pure_tree(std::size_t max_depth, int want = -1) {
        if (want < 0) want = static_cast<int>(below(2));  // 0 boolean, 1 numeric
        if (max_depth <= 1 || chance(0.2)) {
            if (chance(0.1)) return literal();
            return want == 0 ? expr::lit(chance(0.5)) : expr::lit(number());
        }
        if (chance(0.05)) want = 1 - want;
        std::vector<expr::Expression> args;
        if (want == 0) {
            static const char* logic[] = {"and", "or", "not", "eq", "ne", "lt", "lte", "gt", "gte"};
            std::string name = logic[below(9)];
            if (name == "not") {
                args.push_back(pure_tree(max_depth - 1, 0));
            } else if (name == "and" || name == "or") {
                auto n = 1 + below(3);
                for (std::size_t i = 0; i < n; ++i) args.push_back(pure_tree(max_depth - 1, 0));
            } else {
                int side = chance(0.8) ? 1 : 0;
                if (chance(0.1)) {
                    args.push_back(expr::lit(text()));
                    args.push_back(expr::lit(text()));
                } else {
                    args.push_back(pure_tree(max_depth - 1, side));
                    args.push_back(pure_tree(max_depth - 1, side));
                }
            }
            return expr::Expression::call(name, std::move(args));
        }
        static const char* arith[] = {"sum", "sub", "mul"};
        std::string name = arith[below(3)];
        auto n = name == "sub" ? 2 : 1 + below(3);
        for (std::size_t i = 0; i < n; ++i) args.push_back(pure_tree(max_depth - 1, 1));
        return expr::Expression::call(name, std::move(args));
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace caselet::testing
