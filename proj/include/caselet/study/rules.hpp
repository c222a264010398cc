#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "caselet/expr/expression.hpp"
#include "caselet/json.hpp"
#include "caselet/study/state.hpp"
#include "caselet/survey/response.hpp"

namespace caselet::study {

using expr::Expression;

inline constexpr const char* kRulesFormat = "caselet-rules/1";

enum class EventKind { Enter, Submit, Timer, Custom };

std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);

struct StudyEvent {
    EventKind kind = EventKind::Timer;
    Timestamp at;
    std::optional<survey::SurveyResponse> response;  // SUBMIT
    std::string event_key;                           // CUSTOM
    std::map<std::string, Value> payload;            // CUSTOM

    static StudyEvent enter(Timestamp at) { return {EventKind::Enter, at, std::nullopt, {}, {}}; }
    static StudyEvent timer(Timestamp at) { return {EventKind::Timer, at, std::nullopt, {}, {}}; }
    static StudyEvent submit(survey::SurveyResponse r, Timestamp at) {
        return {EventKind::Submit, at, std::move(r), {}, {}};
    }
    static StudyEvent custom(std::string key, std::map<std::string, Value> payload, Timestamp at) {
        return {EventKind::Custom, at, std::nullopt, std::move(key), std::move(payload)};
    }

    friend bool operator==(const StudyEvent&, const StudyEvent&) = default;
};

Json encode_event(const StudyEvent& e);
StudyEvent decode_event(const Json& doc);

struct Trigger {
    EventKind kind = EventKind::Enter;
    std::optional<std::string> key;  // survey key (SUBMIT) or event key (CUSTOM); absent matches any

    bool matches(const StudyEvent& e) const;
    friend bool operator==(const Trigger&, const Trigger&) = default;
};

enum class RemoveSelector { First, Last, All };

struct Action;
using ActionList = std::vector<Action>;

struct IfAction {
    Expression cond;
    ActionList then_actions;
    ActionList else_actions;
    friend bool operator==(const IfAction&, const IfAction&);
};
struct UpdateFlag {
    std::string key;
    Expression value;
    friend bool operator==(const UpdateFlag&, const UpdateFlag&) = default;
};
struct UpdateStatus {
    StudyStatus status = StudyStatus::Active;
    friend bool operator==(const UpdateStatus&, const UpdateStatus&) = default;
};
struct AddSurvey {
    std::string survey_key;
    SurveyCategory category = SurveyCategory::Normal;
    std::optional<Expression> valid_from;
    std::optional<Expression> valid_until;
    friend bool operator==(const AddSurvey&, const AddSurvey&) = default;
};
struct RemoveSurvey {
    std::string survey_key;
    RemoveSelector selector = RemoveSelector::All;
    friend bool operator==(const RemoveSurvey&, const RemoveSurvey&) = default;
};
struct ScheduleMessage {
    std::string template_key;
    Expression due;
    friend bool operator==(const ScheduleMessage&, const ScheduleMessage&) = default;
};
struct CancelMessages {
    std::string template_key;
    friend bool operator==(const CancelMessages&, const CancelMessages&) = default;
};
struct NotifyExternal {
    std::string endpoint_key;
    std::map<std::string, Expression> payload;
    friend bool operator==(const NotifyExternal&, const NotifyExternal&) = default;
};

struct Action {
    std::variant<IfAction, UpdateFlag, UpdateStatus, AddSurvey, RemoveSurvey, ScheduleMessage, CancelMessages,
                 NotifyExternal>
        node;
    friend bool operator==(const Action&, const Action&) = default;
};

inline bool operator==(const IfAction& a, const IfAction& b) {
    return a.cond == b.cond && a.then_actions == b.then_actions && a.else_actions == b.else_actions;
}

struct StudyRule {
    Trigger on;
    ActionList actions;
    friend bool operator==(const StudyRule&, const StudyRule&) = default;
};

struct StudyConfig {
    std::string study_key;
    std::vector<StudyRule> rules;
    std::set<std::string> survey_keys;
    std::map<std::string, std::string> external_endpoints;  // endpoint key -> URL
    std::string consent_version = "1";

    friend bool operator==(const StudyConfig&, const StudyConfig&) = default;
};

enum class RulesError { MalformedDocument, InvalidExpression, UnknownSurvey, UnknownEndpoint, EmptyActions };

std::string_view to_string(RulesError e);

class RulesLoadError : public std::runtime_error {
public:
    RulesLoadError(RulesError code, std::string where, std::string detail = {});

    RulesError code() const { return code_; }
    const std::string& where() const { return where_; }

private:
    RulesError code_;
    std::string where_;
};

StudyConfig load_rules(const Json& doc);
Json encode_rules(const StudyConfig& config);

}  // namespace caselet::study
