#include "caselet/expr/evaluator.hpp"

#include <cmath>

namespace caselet::expr {

namespace {

class Evaluator {
public:
    explicit Evaluator(const EvalContext& ctx) : ctx_(ctx) {}

    Value eval(const Expression& e) {
        if (e.is_literal()) return e.as_literal();
        const auto& c = e.as_call();
        const auto& n = c.name;

        if (n == "and") return logical(c, false);
        if (n == "or") return logical(c, true);
        if (n == "not") return Value::boolean(!boolean_arg(c, 0));
        if (n == "eq" || n == "ne" || n == "lt" || n == "lte" || n == "gt" || n == "gte") return compare(c);
        if (n == "sum" || n == "mul" || n == "sub") return arithmetic(c);
        if (n == "now") return Value::timestamp(ctx_.now);
        if (n == "timestampWithOffset") return offset(c);
        if (n == "getResponseValue") return response_value(c);
        if (n == "hasResponse") return has_response(c);
        if (n == "countSelected") return count_selected(c);
        if (n == "getPrevResponseValue") return previous_value(c);
        if (n == "getLastSubmissionDate") return last_submission(c);
        if (n == "getStudyFlag") return study_flag(c);
        if (n == "hasStudyStatus") return has_status(c);
        if (n == "getEventPayload") return lookup(c, ctx_.event_payload, "event payload");
        if (n == "getContext") return lookup(c, ctx_.external_context, "external context");

        // Unreachable for validated input.
        warn(n + ": not implemented");
        return {};
    }

    std::vector<std::string> take_warnings() { return std::move(warnings_); }

private:
    void warn(std::string msg) { warnings_.push_back(std::move(msg)); }

    void missing(const std::string& fn, const std::string& ref, const std::string& why) {
        warn(fn + ": missing reference \"" + ref + "\" (" + why + ")");
    }

    bool boolean_arg(const Call& c, std::size_t i) {
        auto v = eval(c.args[i]);
        if (!v.is_boolean() && !v.is_undefined())
            warn(c.name + ": argument " + std::to_string(i + 1) + " is " + std::string(to_string(v.kind())) +
                 ", treated as false");
        return truthy(v);
    }

    Value logical(const Call& c, bool stop_on) {
        for (std::size_t i = 0; i < c.args.size(); ++i)
            if (boolean_arg(c, i) == stop_on) return Value::boolean(stop_on);
        return Value::boolean(!stop_on);
    }

    Value compare(const Call& c) {
        auto lhs = eval(c.args[0]);
        auto rhs = eval(c.args[1]);
        if (lhs.is_undefined() || rhs.is_undefined()) return Value::boolean(false);

        int order = 0;
        if (auto l = lhs.numeric(), r = rhs.numeric(); l && r) {
            order = *l < *r ? -1 : (*l > *r ? 1 : 0);
        } else if (lhs.is_text() && rhs.is_text()) {
            // UTF-8 byte order equals code point order.
            int cmp = lhs.as_text().compare(rhs.as_text());
            order = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
        } else if (lhs.is_boolean() && rhs.is_boolean()) {
            order = static_cast<int>(lhs.as_boolean()) - static_cast<int>(rhs.as_boolean());
        } else {
            warn(c.name + ": cannot compare " + std::string(to_string(lhs.kind())) + " with " +
                 std::string(to_string(rhs.kind())));
            return Value::boolean(false);
        }

        const auto& n = c.name;
        bool r = n == "eq"    ? order == 0
                 : n == "ne"  ? order != 0
                 : n == "lt"  ? order < 0
                 : n == "lte" ? order <= 0
                 : n == "gt"  ? order > 0
                              : order >= 0;
        return Value::boolean(r);
    }

    // Evaluates argument i as a number. Undefined stays silent (its source
    // already warned); other non-numeric kinds warn.
    std::optional<double> numeric_arg(const Call& c, std::size_t i) {
        auto v = eval(c.args[i]);
        if (auto d = v.numeric()) return d;
        if (!v.is_undefined())
            warn(c.name + ": argument " + std::to_string(i + 1) + " is " + std::string(to_string(v.kind())) +
                 ", expected a number");
        return std::nullopt;
    }

    Value arithmetic(const Call& c) {
        std::vector<std::optional<double>> vals;
        vals.reserve(c.args.size());
        for (std::size_t i = 0; i < c.args.size(); ++i) vals.push_back(numeric_arg(c, i));
        for (const auto& v : vals)
            if (!v) return {};
        double acc = *vals[0];
        for (std::size_t i = 1; i < vals.size(); ++i) {
            if (c.name == "sum")
                acc += *vals[i];
            else if (c.name == "mul")
                acc *= *vals[i];
            else
                acc -= *vals[i];
        }
        auto out = Value::number(acc);
        if (out.is_undefined()) warn(c.name + ": result is not finite");
        return out;
    }

    Value offset(const Call& c) {
        auto delta = numeric_arg(c, 0);
        std::optional<double> reference = static_cast<double>(ctx_.now.seconds);
        if (c.args.size() > 1) reference = numeric_arg(c, 1);
        if (!delta || !reference) return {};
        double t = std::trunc(*reference) + std::trunc(*delta);
        constexpr double kLimit = 9.2e18;
        if (!(std::fabs(t) < kLimit)) {
            warn(c.name + ": timestamp out of range");
            return {};
        }
        return Value::timestamp(static_cast<std::int64_t>(t));
    }

    std::optional<std::string> text_arg(const Call& c, std::size_t i) {
        auto v = eval(c.args[i]);
        if (v.is_text()) return v.as_text();
        if (!v.is_undefined())
            warn(c.name + ": argument " + std::to_string(i + 1) + " is " + std::string(to_string(v.kind())) +
                 ", expected text");
        return std::nullopt;
    }

    Value response_value(const Call& c) {
        auto item = text_arg(c, 0);
        auto slot = text_arg(c, 1);
        if (!item || !slot) return {};
        auto ref = *item + "." + *slot;
        if (!ctx_.current_response) {
            missing(c.name, ref, "no current response");
            return {};
        }
        const auto* v = ctx_.current_response->find(*item, *slot);
        if (v == nullptr) {
            missing(c.name, ref, "not answered");
            return {};
        }
        return survey::as_value(*v);
    }

    Value has_response(const Call& c) {
        auto item = text_arg(c, 0);
        auto slot = text_arg(c, 1);
        if (!item || !slot || !ctx_.current_response) return Value::boolean(false);
        const auto* v = ctx_.current_response->find(*item, *slot);
        return Value::boolean(v != nullptr && survey::is_answered(*v));
    }

    Value count_selected(const Call& c) {
        auto item = text_arg(c, 0);
        if (!item) return {};
        if (!ctx_.current_response) {
            missing(c.name, *item, "no current response");
            return {};
        }
        double count = 0;
        if (const auto* answer = ctx_.current_response->find_item(*item)) {
            for (const auto& s : answer->slots) {
                if (const auto* sel = std::get_if<survey::Selection>(&s.value))
                    count += static_cast<double>(sel->size());
                else if (survey::is_answered(s.value) && std::get<Value>(s.value).is_text())
                    count += 1;
            }
        }
        return Value::number(count);
    }

    Value previous_value(const Call& c) {
        auto survey_key = text_arg(c, 0);
        auto item = text_arg(c, 1);
        auto slot = text_arg(c, 2);
        if (!survey_key || !item || !slot) return {};
        auto ref = *survey_key + ":" + *item + "." + *slot;
        auto it = ctx_.previous_responses.find(*survey_key);
        if (it == ctx_.previous_responses.end()) {
            missing(c.name, ref, "no previous response");
            return {};
        }
        const auto* v = it->second.find(*item, *slot);
        if (v == nullptr) {
            missing(c.name, ref, "not answered");
            return {};
        }
        return survey::as_value(*v);
    }

    Value last_submission(const Call& c) {
        auto key = text_arg(c, 0);
        if (!key) return {};
        if (!ctx_.participant_state) {
            missing(c.name, *key, "no participant state");
            return {};
        }
        const auto& subs = ctx_.participant_state->last_submissions;
        auto it = subs.find(*key);
        if (it == subs.end()) {
            missing(c.name, *key, "never submitted");
            return {};
        }
        return Value::timestamp(it->second);
    }

    Value study_flag(const Call& c) {
        auto key = text_arg(c, 0);
        if (!key) return {};
        if (!ctx_.participant_state) {
            missing(c.name, *key, "no participant state");
            return {};
        }
        const auto& flags = ctx_.participant_state->flags;
        auto it = flags.find(*key);
        if (it == flags.end()) {
            missing(c.name, *key, "flag not set");
            return {};
        }
        return it->second;
    }

    Value has_status(const Call& c) {
        auto status = text_arg(c, 0);
        if (!status) return Value::boolean(false);
        if (!ctx_.participant_state) {
            missing(c.name, *status, "no participant state");
            return Value::boolean(false);
        }
        auto parsed = study::parse_status(*status);
        if (!parsed) {
            warn(c.name + ": unknown status \"" + *status + "\"");
            return Value::boolean(false);
        }
        return Value::boolean(ctx_.participant_state->status == *parsed);
    }

    Value lookup(const Call& c, const std::map<std::string, Value>& source, const char* what) {
        auto key = text_arg(c, 0);
        if (!key) return {};
        auto it = source.find(*key);
        if (it == source.end()) {
            missing(c.name, *key, std::string("absent from ") + what);
            return {};
        }
        return it->second;
    }

    const EvalContext& ctx_;
    std::vector<std::string> warnings_;
};

}  // namespace

EvalResult evaluate(const Expression& e, const EvalContext& ctx) {
    Evaluator ev(ctx);
    auto v = ev.eval(e);
    return {std::move(v), ev.take_warnings()};
}

}  // namespace caselet::expr
