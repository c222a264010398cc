#pragma once

#include <string>
#include <variant>
#include <vector>

#include "caselet/expr/value.hpp"
#include "caselet/json.hpp"

namespace caselet::survey {

using expr::Timestamp;
using expr::Value;

/// Selected option keys of a multiple-choice slot, in selection order.
using Selection = std::vector<std::string>;
using SlotValue = std::variant<Value, Selection>;

struct SlotAnswer {
    std::string slot_key;
    SlotValue value;

    friend bool operator==(const SlotAnswer&, const SlotAnswer&) = default;
};

struct ItemAnswer {
    std::string item_key;
    std::vector<SlotAnswer> slots;

    friend bool operator==(const ItemAnswer&, const ItemAnswer&) = default;
};

/// A submitted (or in-progress) answer record for one survey.
struct SurveyResponse {
    std::string survey_key;
    std::string version_id;
    std::string participant_ref;
    Timestamp opened_at;
    Timestamp submitted_at;
    std::vector<ItemAnswer> items;

    const SlotValue* find(std::string_view item_key, std::string_view slot_key) const;
    const ItemAnswer* find_item(std::string_view item_key) const;

    friend bool operator==(const SurveyResponse&, const SurveyResponse&) = default;
};

/// True when the slot carries an actual answer (non-empty text, non-empty
/// selection, any other defined value).
bool is_answered(const SlotValue& v);

/// Collapses a slot to a single expression value; selections become their
/// option keys joined by ",".
Value as_value(const SlotValue& v);

Json encode_slot_value(const SlotValue& v);
/// Accepts the tagged value encoding, {"selected": [...]}, or bare JSON
/// scalars/arrays (string, number, bool, array of strings).
SlotValue decode_slot_value(const Json& doc);

Json encode_response(const SurveyResponse& r);
SurveyResponse decode_response(const Json& doc);

}  // namespace caselet::survey
