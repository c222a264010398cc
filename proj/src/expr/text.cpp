#include "caselet/expr/text.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

namespace caselet::expr {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Parser {
public:
    Parser(std::string_view src, const FunctionCatalog& catalog) : src_(src), catalog_(catalog) {}

    Expression parse() {
        auto e = expr(1);
        skip_ws();
        if (pos_ != src_.size()) fail("end of input");
        return e;
    }

private:
    [[noreturn]] void fail(std::string expected) const {
        throw ExpressionError(ErrorCode::SyntaxError,
                              "expected " + expected + " at offset " + std::to_string(pos_), pos_);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool at(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }

    Expression expr(std::size_t level) {
        if (level > kMaxDepth)
            throw ExpressionError(ErrorCode::DepthExceeded, "expression deeper than " + std::to_string(kMaxDepth),
                                  pos_);
        skip_ws();
        if (pos_ >= src_.size()) fail("expression");
        char c = src_[pos_];
        if (c == '"') return Expression::literal(Value::text(string_literal()));
        if (c == '-' || c == '+' || c == '.' || std::isdigit(static_cast<unsigned char>(c))) return number();
        if (ident_start(c)) {
            auto start = pos_;
            while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
            std::string name(src_.substr(start, pos_ - start));
            if (!at('(')) {
                if (name == "true") return lit(true);
                if (name == "false") return lit(false);
                fail("'('");
            }
            return call_rest(std::move(name), start, level);
        }
        fail("expression");
    }

    Expression call_rest(std::string name, std::size_t name_pos, std::size_t level) {
        ++pos_;  // '('
        std::vector<Expression> args;
        if (!at(')')) {
            for (;;) {
                args.push_back(expr(level + 1));
                if (at(',')) {
                    ++pos_;
                    continue;
                }
                if (at(')')) break;
                fail("',' or ')'");
            }
        }
        ++pos_;  // ')'
        const auto* spec = catalog_.find(name);
        if (spec == nullptr) throw ExpressionError(ErrorCode::UnknownFunction, name, name_pos);
        if (!catalog_.arity_ok(*spec, args.size()))
            throw ExpressionError(ErrorCode::ArityMismatch,
                                  name + " does not accept " + std::to_string(args.size()) + " argument(s)",
                                  name_pos);
        return Expression::call(std::move(name), std::move(args));
    }

    Expression number() {
        auto start = pos_;
        if (src_[pos_] == '-' || src_[pos_] == '+') ++pos_;
        auto digits = [&] {
            auto s = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            return pos_ - s;
        };
        auto whole = digits();
        std::size_t frac = 0;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            frac = digits();
        }
        if (whole + frac == 0) fail("number");
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (digits() == 0) fail("exponent digits");
        }
        // from_chars rejects a leading '+'.
        auto first = src_.data() + start + (src_[start] == '+' ? 1 : 0);
        double d = 0;
        auto res = std::from_chars(first, src_.data() + pos_, d);
        if (res.ec != std::errc{} || res.ptr != src_.data() + pos_ || !std::isfinite(d)) {
            pos_ = start;
            fail("finite number");
        }
        return lit(d);
    }

    std::string string_literal() {
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < src_.size()) {
            char c = src_[pos_++];
            if (c == '"') return out;
            if (c != '\\') {
                out.push_back(c);
                continue;
            }
            if (pos_ >= src_.size()) break;
            char esc = src_[pos_++];
            switch (esc) {
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                case 'n': out.push_back('\n'); break;
                default:
                    --pos_;
                    fail("escape sequence (\\\" \\\\ \\n)");
            }
        }
        fail("closing '\"'");
    }

    std::string_view src_;
    const FunctionCatalog& catalog_;
    std::size_t pos_ = 0;
};

void quote(std::string& out, const std::string& s) {
    out.push_back('"');
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            default: out.push_back(c);
        }
    }
    out.push_back('"');
}

void print(std::string& out, const Expression& e) {
    if (e.is_call()) {
        const auto& c = e.as_call();
        out += c.name;
        out.push_back('(');
        for (std::size_t i = 0; i < c.args.size(); ++i) {
            if (i) out += ", ";
            print(out, c.args[i]);
        }
        out.push_back(')');
        return;
    }
    const auto& v = e.as_literal();
    if (v.is_text())
        quote(out, v.as_text());
    else
        out += display(v);
}

}  // namespace

Expression parse_text(std::string_view source, const FunctionCatalog& catalog) {
    return Parser(source, catalog).parse();
}

std::string print_text(const Expression& e) {
    std::string out;
    print(out, e);
    return out;
}

}  // namespace caselet::expr
