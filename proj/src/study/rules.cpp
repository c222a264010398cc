#include "caselet/study/rules.hpp"

#include "caselet/expr/codec.hpp"

namespace caselet::study {

namespace {

[[noreturn]] void fail(RulesError code, const std::string& where, const std::string& detail) {
    throw RulesLoadError(code, where, detail);
}

[[noreturn]] void malformed(const std::string& where, const std::string& detail) {
    fail(RulesError::MalformedDocument, where, detail);
}

const Json& member(const Json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) malformed(path, std::string("missing field \"") + key + "\"");
    return *it;
}

std::string text_field(const Json& obj, const char* key, const std::string& path) {
    const auto& v = member(obj, key, path);
    if (!v.is_string()) malformed(path + "." + key, "expected a string");
    return v.get<std::string>();
}

Expression expression_field(const Json& doc, const std::string& path) {
    try {
        return expr::decode(doc);
    } catch (const expr::ExpressionError& e) {
        fail(RulesError::InvalidExpression, path, e.what());
    }
}

std::string_view selector_name(RemoveSelector s) {
    switch (s) {
        case RemoveSelector::First: return "first";
        case RemoveSelector::Last: return "last";
        case RemoveSelector::All: return "all";
    }
    return "?";
}

struct Loader {
    const StudyConfig& config;

    ActionList actions(const Json& doc, const std::string& path, bool allow_empty) {
        if (!doc.is_array()) malformed(path, "expected an array of actions");
        if (doc.empty() && !allow_empty) fail(RulesError::EmptyActions, path, "action list is empty");
        ActionList out;
        for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(action(doc[i], path + "[" + std::to_string(i) + "]"));
        return out;
    }

    Action action(const Json& doc, const std::string& path) {
        if (!doc.is_object()) malformed(path, "expected an action object");
        auto type = text_field(doc, "type", path);
        if (type == "IF") {
            IfAction a{expression_field(member(doc, "cond", path), path + ".cond"), {}, {}};
            a.then_actions = actions(member(doc, "then", path), path + ".then", true);
            if (doc.contains("else")) a.else_actions = actions(doc["else"], path + ".else", true);
            return {std::move(a)};
        }
        if (type == "UPDATE_FLAG")
            return {UpdateFlag{text_field(doc, "key", path), expression_field(member(doc, "value", path), path + ".value")}};
        if (type == "UPDATE_STATUS") {
            auto status = parse_status(text_field(doc, "status", path));
            if (!status) malformed(path + ".status", "unknown status");
            return {UpdateStatus{*status}};
        }
        if (type == "ADD_SURVEY") {
            AddSurvey a;
            a.survey_key = text_field(doc, "surveyKey", path);
            if (!config.survey_keys.count(a.survey_key))
                fail(RulesError::UnknownSurvey, path + ".surveyKey", "\"" + a.survey_key + "\" is not a study survey");
            if (doc.contains("category")) {
                auto cat = parse_category(text_field(doc, "category", path));
                if (!cat) malformed(path + ".category", "unknown category");
                a.category = *cat;
            }
            if (doc.contains("validFrom")) a.valid_from = expression_field(doc["validFrom"], path + ".validFrom");
            if (doc.contains("validUntil")) a.valid_until = expression_field(doc["validUntil"], path + ".validUntil");
            return {std::move(a)};
        }
        if (type == "REMOVE_SURVEY") {
            RemoveSurvey a{text_field(doc, "surveyKey", path), RemoveSelector::All};
            if (doc.contains("selector")) {
                auto s = text_field(doc, "selector", path);
                if (s == "first") a.selector = RemoveSelector::First;
                else if (s == "last") a.selector = RemoveSelector::Last;
                else if (s != "all") malformed(path + ".selector", "expected first, last or all");
            }
            return {std::move(a)};
        }
        if (type == "SCHEDULE_MESSAGE")
            return {ScheduleMessage{text_field(doc, "templateKey", path),
                                    expression_field(member(doc, "due", path), path + ".due")}};
        if (type == "CANCEL_MESSAGES") return {CancelMessages{text_field(doc, "templateKey", path)}};
        if (type == "NOTIFY_EXTERNAL") {
            NotifyExternal a;
            a.endpoint_key = text_field(doc, "endpointKey", path);
            if (!config.external_endpoints.count(a.endpoint_key))
                fail(RulesError::UnknownEndpoint, path + ".endpointKey", "\"" + a.endpoint_key + "\" is not configured");
            if (doc.contains("payload")) {
                const auto& p = doc["payload"];
                if (!p.is_object()) malformed(path + ".payload", "expected an object");
                for (auto it = p.begin(); it != p.end(); ++it)
                    a.payload.emplace(it.key(), expression_field(it.value(), path + ".payload." + it.key()));
            }
            return {std::move(a)};
        }
        malformed(path + ".type", "unknown action type \"" + type + "\"");
    }
};

Json encode_actions(const ActionList& list);

Json encode_action(const Action& action) {
    Json out = Json::object();
    std::visit(
        [&](const auto& a) {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, IfAction>) {
                out["type"] = "IF";
                out["cond"] = expr::encode(a.cond);
                out["then"] = encode_actions(a.then_actions);
                if (!a.else_actions.empty()) out["else"] = encode_actions(a.else_actions);
            } else if constexpr (std::is_same_v<T, UpdateFlag>) {
                out["type"] = "UPDATE_FLAG";
                out["key"] = a.key;
                out["value"] = expr::encode(a.value);
            } else if constexpr (std::is_same_v<T, UpdateStatus>) {
                out["type"] = "UPDATE_STATUS";
                out["status"] = to_string(a.status);
            } else if constexpr (std::is_same_v<T, AddSurvey>) {
                out["type"] = "ADD_SURVEY";
                out["surveyKey"] = a.survey_key;
                out["category"] = to_string(a.category);
                if (a.valid_from) out["validFrom"] = expr::encode(*a.valid_from);
                if (a.valid_until) out["validUntil"] = expr::encode(*a.valid_until);
            } else if constexpr (std::is_same_v<T, RemoveSurvey>) {
                out["type"] = "REMOVE_SURVEY";
                out["surveyKey"] = a.survey_key;
                out["selector"] = selector_name(a.selector);
            } else if constexpr (std::is_same_v<T, ScheduleMessage>) {
                out["type"] = "SCHEDULE_MESSAGE";
                out["templateKey"] = a.template_key;
                out["due"] = expr::encode(a.due);
            } else if constexpr (std::is_same_v<T, CancelMessages>) {
                out["type"] = "CANCEL_MESSAGES";
                out["templateKey"] = a.template_key;
            } else {
                out["type"] = "NOTIFY_EXTERNAL";
                out["endpointKey"] = a.endpoint_key;
                Json payload = Json::object();
                for (const auto& [k, e] : a.payload) payload[k] = expr::encode(e);
                out["payload"] = std::move(payload);
            }
        },
        action.node);
    return out;
}

Json encode_actions(const ActionList& list) {
    Json out = Json::array();
    for (const auto& a : list) out.push_back(encode_action(a));
    return out;
}

}  // namespace

std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::Enter: return "ENTER";
        case EventKind::Submit: return "SUBMIT";
        case EventKind::Timer: return "TIMER";
        case EventKind::Custom: return "CUSTOM";
    }
    return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
    if (s == "ENTER") return EventKind::Enter;
    if (s == "SUBMIT") return EventKind::Submit;
    if (s == "TIMER") return EventKind::Timer;
    if (s == "CUSTOM") return EventKind::Custom;
    return std::nullopt;
}

bool Trigger::matches(const StudyEvent& e) const {
    if (e.kind != kind) return false;
    if (!key) return true;
    if (kind == EventKind::Submit) return e.response && e.response->survey_key == *key;
    if (kind == EventKind::Custom) return e.event_key == *key;
    return true;
}

Json encode_event(const StudyEvent& e) {
    Json out = Json::object();
    out["kind"] = to_string(e.kind);
    out["at"] = e.at.seconds;
    if (e.response) out["response"] = survey::encode_response(*e.response);
    if (e.kind == EventKind::Custom) {
        out["eventKey"] = e.event_key;
        Json payload = Json::object();
        for (const auto& [k, v] : e.payload) payload[k] = expr::encode_value(v);
        out["payload"] = std::move(payload);
    }
    return out;
}

StudyEvent decode_event(const Json& doc) {
    if (!doc.is_object()) malformed("event", "expected an object");
    auto kind = parse_event_kind(text_field(doc, "kind", "event"));
    if (!kind) malformed("event.kind", "unknown event kind");
    const auto& at = member(doc, "at", "event");
    if (!at.is_number_integer()) malformed("event.at", "expected integer seconds");
    StudyEvent e;
    e.kind = *kind;
    e.at = Timestamp{at.get<std::int64_t>()};
    try {
        if (e.kind == EventKind::Submit) e.response = survey::decode_response(member(doc, "response", "event"));
        if (e.kind == EventKind::Custom) {
            e.event_key = text_field(doc, "eventKey", "event");
            if (doc.contains("payload"))
                for (auto it = doc["payload"].begin(); it != doc["payload"].end(); ++it)
                    e.payload[it.key()] = expr::decode_value(it.value());
        }
    } catch (const expr::ExpressionError& err) {
        malformed("event", err.what());
    }
    return e;
}

std::string_view to_string(RulesError e) {
    switch (e) {
        case RulesError::MalformedDocument: return "MalformedDocument";
        case RulesError::InvalidExpression: return "InvalidExpression";
        case RulesError::UnknownSurvey: return "UnknownSurvey";
        case RulesError::UnknownEndpoint: return "UnknownEndpoint";
        case RulesError::EmptyActions: return "EmptyActions";
    }
    return "?";
}

RulesLoadError::RulesLoadError(RulesError code, std::string where, std::string detail)
    : std::runtime_error(std::string(to_string(code)) + " at " + where + (detail.empty() ? "" : ": " + detail)),
      code_(code),
      where_(std::move(where)) {}

StudyConfig load_rules(const Json& doc) {
    if (!doc.is_object()) malformed("$", "expected an object");
    if (!doc.contains("format") || doc["format"] != kRulesFormat)
        malformed("format", std::string("expected \"") + kRulesFormat + "\"");
    StudyConfig config;
    config.study_key = text_field(doc, "studyKey", "$");
    if (doc.contains("surveyKeys")) {
        if (!doc["surveyKeys"].is_array()) malformed("surveyKeys", "expected an array");
        for (const auto& k : doc["surveyKeys"]) {
            if (!k.is_string()) malformed("surveyKeys", "expected strings");
            config.survey_keys.insert(k.get<std::string>());
        }
    }
    if (doc.contains("externalEndpoints")) {
        const auto& eps = doc["externalEndpoints"];
        if (!eps.is_object()) malformed("externalEndpoints", "expected an object");
        for (auto it = eps.begin(); it != eps.end(); ++it) {
            if (!it.value().is_string()) malformed("externalEndpoints." + it.key(), "expected a URL string");
            config.external_endpoints[it.key()] = it.value().get<std::string>();
        }
    }
    if (doc.contains("consentVersion")) config.consent_version = text_field(doc, "consentVersion", "$");

    Loader loader{config};
    const auto& rules = member(doc, "rules", "$");
    if (!rules.is_array()) malformed("rules", "expected an array");
    for (std::size_t i = 0; i < rules.size(); ++i) {
        auto path = "rules[" + std::to_string(i) + "]";
        const auto& r = rules[i];
        if (!r.is_object()) malformed(path, "expected an object");
        const auto& on = member(r, "on", path);
        if (!on.is_object()) malformed(path + ".on", "expected an object");
        StudyRule rule;
        auto kind = parse_event_kind(text_field(on, "event", path + ".on"));
        if (!kind) malformed(path + ".on.event", "unknown event kind");
        rule.on.kind = *kind;
        if (*kind == EventKind::Submit && on.contains("surveyKey"))
            rule.on.key = text_field(on, "surveyKey", path + ".on");
        if (*kind == EventKind::Custom && on.contains("eventKey"))
            rule.on.key = text_field(on, "eventKey", path + ".on");
        rule.actions = loader.actions(member(r, "actions", path), path + ".actions", false);
        config.rules.push_back(std::move(rule));
    }
    return config;
}

Json encode_rules(const StudyConfig& config) {
    Json out = Json::object();
    out["format"] = kRulesFormat;
    out["studyKey"] = config.study_key;
    out["surveyKeys"] = Json(config.survey_keys);
    Json eps = Json::object();
    for (const auto& [k, url] : config.external_endpoints) eps[k] = url;
    out["externalEndpoints"] = std::move(eps);
    out["consentVersion"] = config.consent_version;
    Json rules = Json::array();
    for (const auto& r : config.rules) {
        Json on = Json::object();
        on["event"] = to_string(r.on.kind);
        if (r.on.key) on[r.on.kind == EventKind::Submit ? "surveyKey" : "eventKey"] = *r.on.key;
        rules.push_back(Json{{"on", std::move(on)}, {"actions", encode_actions(r.actions)}});
    }
    out["rules"] = std::move(rules);
    return out;
}

}  // namespace caselet::study
