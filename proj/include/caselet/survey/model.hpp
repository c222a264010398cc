#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "caselet/expr/expression.hpp"

namespace caselet::survey {

using expr::Expression;
using expr::Timestamp;

enum class PlaceholderFormat { Plain, RelativeDate, Integer };

struct Placeholder {
    Expression expr;
    PlaceholderFormat format = PlaceholderFormat::Plain;

    friend bool operator==(const Placeholder&, const Placeholder&) = default;
};

using Segment = std::variant<std::string, Placeholder>;

/// Locale-keyed text with embedded expressions.
struct DynamicText {
    std::map<std::string, std::vector<Segment>> locales;

    static DynamicText plain(std::string locale, std::string text) {
        DynamicText t;
        t.locales[std::move(locale)].push_back(std::move(text));
        return t;
    }

    friend bool operator==(const DynamicText&, const DynamicText&) = default;
};

struct ChoiceOption {
    std::string key;
    DynamicText label;
    std::optional<Expression> condition;

    friend bool operator==(const ChoiceOption&, const ChoiceOption&) = default;
};

enum class SlotKind { SingleChoice, MultipleChoice, TextInput, NumberInput, DateInput };

struct ResponseSlotSpec {
    std::string slot_key;
    SlotKind kind = SlotKind::SingleChoice;
    std::vector<ChoiceOption> options;     // choice kinds
    std::size_t max_len = 0;               // textInput
    std::optional<double> min, max;        // numberInput
    std::optional<Timestamp> min_date, max_date;  // dateInput

    bool is_choice() const { return kind == SlotKind::SingleChoice || kind == SlotKind::MultipleChoice; }
    const ChoiceOption* option(std::string_view key) const;

    friend bool operator==(const ResponseSlotSpec&, const ResponseSlotSpec&) = default;
};

enum class ComponentRole { Title, Subtitle, ResponseGroup };

struct Component {
    ComponentRole role = ComponentRole::Title;
    DynamicText text;                          // title / subtitle
    std::optional<ResponseSlotSpec> response;  // responseGroup

    friend bool operator==(const Component&, const Component&) = default;
};

enum class Severity { Hard, Soft };

struct Validation {
    std::string key;
    Severity severity = Severity::Hard;
    Expression rule;  // true means valid
    DynamicText message;

    friend bool operator==(const Validation&, const Validation&) = default;
};

enum class ItemKind { Group, Question, Display, PageBreak };

struct SurveyItem {
    std::string item_key;
    ItemKind kind = ItemKind::Question;
    std::optional<Expression> condition;
    std::vector<Component> components;
    std::vector<SurveyItem> children;
    std::vector<Validation> validations;
    bool randomize_children = false;

    /// The single response slot of a question item.
    const ResponseSlotSpec* slot() const;

    friend bool operator==(const SurveyItem&, const SurveyItem&) = default;
};

struct SurveyDefinition {
    std::string survey_key;
    std::string version_id;
    std::vector<SurveyItem> items;
    std::map<std::string, std::string> metadata;

    /// Depth-first lookup across the whole tree.
    const SurveyItem* find(std::string_view item_key) const;

    friend bool operator==(const SurveyDefinition&, const SurveyDefinition&) = default;
};

std::string_view to_string(ItemKind k);
std::string_view to_string(SlotKind k);
std::string_view to_string(Severity s);
std::string_view to_string(ComponentRole r);
std::string_view to_string(PlaceholderFormat f);

}  // namespace caselet::survey
