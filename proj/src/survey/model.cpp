#include "caselet/survey/model.hpp"

namespace caselet::survey {

const ChoiceOption* ResponseSlotSpec::option(std::string_view key) const {
    for (const auto& o : options)
        if (o.key == key) return &o;
    return nullptr;
}

const ResponseSlotSpec* SurveyItem::slot() const {
    for (const auto& c : components)
        if (c.response) return &*c.response;
    return nullptr;
}

namespace {

const SurveyItem* find_in(const std::vector<SurveyItem>& items, std::string_view key) {
    for (const auto& it : items) {
        if (it.item_key == key) return &it;
        if (const auto* child = find_in(it.children, key)) return child;
    }
    return nullptr;
}

}  // namespace

const SurveyItem* SurveyDefinition::find(std::string_view item_key) const { return find_in(items, item_key); }

std::string_view to_string(ItemKind k) {
    switch (k) {
        case ItemKind::Group: return "group";
        case ItemKind::Question: return "question";
        case ItemKind::Display: return "display";
        case ItemKind::PageBreak: return "pageBreak";
    }
    return "?";
}

std::string_view to_string(SlotKind k) {
    switch (k) {
        case SlotKind::SingleChoice: return "singleChoice";
        case SlotKind::MultipleChoice: return "multipleChoice";
        case SlotKind::TextInput: return "textInput";
        case SlotKind::NumberInput: return "numberInput";
        case SlotKind::DateInput: return "dateInput";
    }
    return "?";
}

std::string_view to_string(Severity s) { return s == Severity::Hard ? "hard" : "soft"; }

std::string_view to_string(ComponentRole r) {
    switch (r) {
        case ComponentRole::Title: return "title";
        case ComponentRole::Subtitle: return "subtitle";
        case ComponentRole::ResponseGroup: return "responseGroup";
    }
    return "?";
}

std::string_view to_string(PlaceholderFormat f) {
    switch (f) {
        case PlaceholderFormat::Plain: return "plain";
        case PlaceholderFormat::RelativeDate: return "relativeDate";
        case PlaceholderFormat::Integer: return "integer";
    }
    return "?";
}

}  // namespace caselet::survey
