#include "caselet/messaging/template.hpp"

#include "caselet/expr/expression.hpp"
#include "caselet/survey/document.hpp"
#include "caselet/survey/engine.hpp"

namespace caselet::messaging {

namespace {

[[noreturn]] void malformed(const std::string& detail) {
    throw TemplateError(TemplateErrorCode::MalformedDocument, detail);
}

std::optional<MessageType> parse_type(std::string_view s) {
    for (auto t : {MessageType::Reminder, MessageType::Newsletter, MessageType::Invitation, MessageType::LoginCode})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

survey::DynamicText text_field(const Json& doc, const char* key) {
    if (!doc.contains(key)) malformed(std::string("missing field \"") + key + "\"");
    survey::DynamicText text;
    try {
        text = survey::load_dynamic_text(doc[key], key);
    } catch (const survey::SurveyLoadError& e) {
        if (e.code() == survey::LoadError::InvalidExpression)
            throw TemplateError(TemplateErrorCode::InvalidPlaceholder, e.what());
        malformed(e.what());
    }
    // A literal "{{" would reach the recipient as an unresolved marker.
    for (const auto& [locale, segments] : text.locales)
        for (const auto& seg : segments)
            if (const auto* lit = std::get_if<std::string>(&seg); lit && lit->find("{{") != std::string::npos)
                throw TemplateError(TemplateErrorCode::InvalidPlaceholder,
                                    std::string(key) + "." + locale + ": unresolved placeholder marker");
    return text;
}

}  // namespace

std::string_view to_string(MessageType t) {
    switch (t) {
        case MessageType::Reminder: return "reminder";
        case MessageType::Newsletter: return "newsletter";
        case MessageType::Invitation: return "invitation";
        case MessageType::LoginCode: return "loginCode";
    }
    return "?";
}

std::string_view to_string(TemplateErrorCode c) {
    switch (c) {
        case TemplateErrorCode::MalformedDocument: return "MalformedDocument";
        case TemplateErrorCode::InvalidPlaceholder: return "InvalidPlaceholder";
        case TemplateErrorCode::MissingDefaultLocale: return "MissingDefaultLocale";
    }
    return "?";
}

TemplateError::TemplateError(TemplateErrorCode code, std::string detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

MessageTemplate load_template(const Json& doc) {
    if (!doc.is_object()) malformed("expected an object");
    if (doc.value("format", "") != kTemplateFormat) malformed(std::string("format must be \"") + kTemplateFormat + "\"");
    MessageTemplate t;
    if (!doc.contains("templateKey") || !doc["templateKey"].is_string() || doc["templateKey"].get<std::string>().empty())
        malformed("templateKey must be a non-empty string");
    t.template_key = doc["templateKey"].get<std::string>();
    auto type = parse_type(doc.value("messageType", ""));
    if (!type) malformed("unknown messageType");
    t.type = *type;
    if (doc.contains("defaultLocale")) {
        if (!doc["defaultLocale"].is_string()) malformed("defaultLocale must be a string");
        t.default_locale = doc["defaultLocale"].get<std::string>();
    }
    t.subject = text_field(doc, "subject");
    t.body = text_field(doc, "body");
    return t;
}

Json encode_template(const MessageTemplate& t) {
    Json out = Json::object();
    out["format"] = kTemplateFormat;
    out["templateKey"] = t.template_key;
    out["messageType"] = to_string(t.type);
    out["defaultLocale"] = t.default_locale;
    out["subject"] = survey::encode_dynamic_text(t.subject);
    out["body"] = survey::encode_dynamic_text(t.body);
    return out;
}

RenderedMessage render_template(const MessageTemplate& t, const expr::EvalContext& ctx, const std::string& locale) {
    auto pick = t.subject.locales.count(locale) && t.body.locales.count(locale) ? locale : t.default_locale;
    auto subject = t.subject.locales.find(pick);
    auto body = t.body.locales.find(pick);
    if (subject == t.subject.locales.end() || body == t.body.locales.end())
        throw TemplateError(TemplateErrorCode::MissingDefaultLocale,
                            t.template_key + " has no \"" + pick + "\" text for subject and body");
    RenderedMessage out;
    out.locale = pick;
    out.subject = survey::resolve_segments(subject->second, ctx, out.warnings);
    out.body = survey::resolve_segments(body->second, ctx, out.warnings);
    return out;
}

}  // namespace caselet::messaging
