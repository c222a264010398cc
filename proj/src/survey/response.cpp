#include "caselet/survey/response.hpp"

#include "caselet/expr/codec.hpp"
#include "caselet/expr/expression.hpp"

namespace caselet::survey {

namespace {

[[noreturn]] void malformed(const std::string& what) {
    throw expr::ExpressionError(expr::ErrorCode::MalformedDocument, what);
}

std::string str_field(const Json& doc, const char* key) {
    if (!doc.contains(key) || !doc[key].is_string()) malformed(std::string("missing string field \"") + key + "\"");
    return doc[key].get<std::string>();
}

Timestamp ts_field(const Json& doc, const char* key) {
    if (!doc.contains(key) || !doc[key].is_number_integer())
        malformed(std::string("missing integer field \"") + key + "\"");
    return Timestamp{doc[key].get<std::int64_t>()};
}

}  // namespace

const ItemAnswer* SurveyResponse::find_item(std::string_view item_key) const {
    for (const auto& it : items)
        if (it.item_key == item_key) return &it;
    return nullptr;
}

const SlotValue* SurveyResponse::find(std::string_view item_key, std::string_view slot_key) const {
    const auto* item = find_item(item_key);
    if (item == nullptr) return nullptr;
    for (const auto& s : item->slots)
        if (s.slot_key == slot_key) return &s.value;
    return nullptr;
}

bool is_answered(const SlotValue& v) {
    if (const auto* sel = std::get_if<Selection>(&v)) return !sel->empty();
    const auto& val = std::get<Value>(v);
    if (val.is_text()) return !val.as_text().empty();
    return !val.is_undefined();
}

Value as_value(const SlotValue& v) {
    if (const auto* val = std::get_if<Value>(&v)) return *val;
    std::string joined;
    for (const auto& key : std::get<Selection>(v)) {
        if (!joined.empty()) joined.push_back(',');
        joined += key;
    }
    return Value::text(std::move(joined));
}

Json encode_slot_value(const SlotValue& v) {
    if (const auto* val = std::get_if<Value>(&v)) return expr::encode_value(*val);
    Json out = Json::object();
    out["selected"] = std::get<Selection>(v);
    return out;
}

SlotValue decode_slot_value(const Json& doc) {
    if (doc.is_string()) return Value::text(doc.get<std::string>());
    if (doc.is_boolean()) return Value::boolean(doc.get<bool>());
    if (doc.is_number()) return Value::number(doc.get<double>());
    if (doc.is_null()) return Value::undefined();
    if (doc.is_array()) {
        Selection sel;
        for (const auto& k : doc) {
            if (!k.is_string()) malformed("selection entries must be strings");
            sel.push_back(k.get<std::string>());
        }
        return sel;
    }
    if (doc.is_object() && doc.size() == 1 && doc.contains("selected")) return decode_slot_value(doc["selected"]);
    return expr::decode_value(doc);
}

Json encode_response(const SurveyResponse& r) {
    Json items = Json::array();
    for (const auto& it : r.items) {
        Json slots = Json::array();
        for (const auto& s : it.slots) {
            Json slot = Json::object();
            slot["slotKey"] = s.slot_key;
            slot["value"] = encode_slot_value(s.value);
            slots.push_back(std::move(slot));
        }
        Json item = Json::object();
        item["itemKey"] = it.item_key;
        item["slots"] = std::move(slots);
        items.push_back(std::move(item));
    }
    Json out = Json::object();
    out["surveyKey"] = r.survey_key;
    out["versionId"] = r.version_id;
    out["participantRef"] = r.participant_ref;
    out["openedAt"] = r.opened_at.seconds;
    out["submittedAt"] = r.submitted_at.seconds;
    out["items"] = std::move(items);
    return out;
}

SurveyResponse decode_response(const Json& doc) {
    if (!doc.is_object()) malformed("response must be an object");
    SurveyResponse r;
    r.survey_key = str_field(doc, "surveyKey");
    r.version_id = str_field(doc, "versionId");
    r.participant_ref = str_field(doc, "participantRef");
    r.opened_at = ts_field(doc, "openedAt");
    r.submitted_at = ts_field(doc, "submittedAt");
    if (r.submitted_at < r.opened_at) malformed("submittedAt precedes openedAt");
    if (doc.contains("items")) {
        if (!doc["items"].is_array()) malformed("\"items\" must be an array");
        for (const auto& item : doc["items"]) {
            ItemAnswer ia;
            ia.item_key = str_field(item, "itemKey");
            if (item.contains("slots")) {
                for (const auto& slot : item["slots"]) {
                    if (!slot.contains("value")) malformed("slot without value");
                    ia.slots.push_back({str_field(slot, "slotKey"), decode_slot_value(slot["value"])});
                }
            }
            r.items.push_back(std::move(ia));
        }
    }
    return r;
}

}  // namespace caselet::survey
