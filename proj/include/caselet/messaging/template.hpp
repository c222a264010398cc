#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "caselet/expr/context.hpp"
#include "caselet/json.hpp"
#include "caselet/survey/model.hpp"

namespace caselet::messaging {

inline constexpr const char* kTemplateFormat = "caselet-template/1";

enum class MessageType { Reminder, Newsletter, Invitation, LoginCode };

std::string_view to_string(MessageType t);

struct MessageTemplate {
    std::string template_key;
    MessageType type = MessageType::Reminder;
    std::string default_locale = "en";
    survey::DynamicText subject;
    survey::DynamicText body;

    friend bool operator==(const MessageTemplate&, const MessageTemplate&) = default;
};

enum class TemplateErrorCode { MalformedDocument, InvalidPlaceholder, MissingDefaultLocale };

std::string_view to_string(TemplateErrorCode c);

class TemplateError : public std::runtime_error {
public:
    TemplateError(TemplateErrorCode code, std::string detail);
    TemplateErrorCode code() const { return code_; }

private:
    TemplateErrorCode code_;
};

MessageTemplate load_template(const Json& doc);
Json encode_template(const MessageTemplate& t);

struct RenderedMessage {
    std::string locale;  // locale actually used
    std::string subject;
    std::string body;
    std::vector<std::string> warnings;
};

/// Renders in `locale`, falling back to the template's default locale.
/// Undefined placeholders render empty and add a warning.
RenderedMessage render_template(const MessageTemplate& t, const expr::EvalContext& ctx, const std::string& locale);

}  // namespace caselet::messaging
