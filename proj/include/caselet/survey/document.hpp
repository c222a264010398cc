#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "caselet/json.hpp"
#include "caselet/survey/model.hpp"

namespace caselet::survey {

inline constexpr const char* kSurveyFormat = "caselet-survey/1";

enum class LoadError { MalformedDocument, DuplicateItemKey, InvalidExpression, StructureViolation };

std::string_view to_string(LoadError e);

class SurveyLoadError : public std::runtime_error {
public:
    SurveyLoadError(LoadError code, std::string where, std::string detail = {});

    LoadError code() const { return code_; }
    /// Document path such as "items[0].condition", or the duplicated key.
    const std::string& where() const { return where_; }
    const std::string& detail() const { return detail_; }

private:
    LoadError code_;
    std::string where_;
    std::string detail_;
};

/// Parses and fully validates a survey document.
SurveyDefinition load_survey(const Json& doc);
Json encode_survey(const SurveyDefinition& def);

// DynamicText also stands on its own in message templates.
DynamicText load_dynamic_text(const Json& doc, const std::string& path);
Json encode_dynamic_text(const DynamicText& text);
/// Splits "Hello {{getStudyFlag(\"name\")}}" into literal and placeholder
/// segments. A placeholder may carry a format prefix: {{relativeDate: expr}}.
std::vector<Segment> parse_template_string(std::string_view s);

enum class LintKind { DanglingReference, UnreachableItem, EmptyGroup, NoQuestions };

std::string_view to_string(LintKind k);

struct LintIssue {
    LintKind kind;
    std::string subject;  // item key or referenced key
    std::string detail;

    friend bool operator==(const LintIssue&, const LintIssue&) = default;
};

std::vector<LintIssue> lint_survey(const SurveyDefinition& def);

/// Every expression embedded anywhere in the definition, with its path.
std::vector<std::pair<std::string, const Expression*>> expressions_of(const SurveyDefinition& def);

}  // namespace caselet::survey
