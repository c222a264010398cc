#include "caselet/study/state.hpp"

#include "caselet/expr/codec.hpp"
#include "caselet/expr/expression.hpp"

namespace caselet::study {

namespace {

[[noreturn]] void malformed(const std::string& what) {
    throw expr::ExpressionError(expr::ErrorCode::MalformedDocument, what);
}

}  // namespace

std::string_view to_string(StudyStatus s) {
    switch (s) {
        case StudyStatus::Active: return "active";
        case StudyStatus::Paused: return "paused";
        case StudyStatus::Finished: return "finished";
    }
    return "?";
}

std::string_view to_string(SurveyCategory c) {
    switch (c) {
        case SurveyCategory::Prio: return "prio";
        case SurveyCategory::Normal: return "normal";
        case SurveyCategory::Optional: return "optional";
    }
    return "?";
}

std::optional<StudyStatus> parse_status(std::string_view s) {
    if (s == "active") return StudyStatus::Active;
    if (s == "paused") return StudyStatus::Paused;
    if (s == "finished") return StudyStatus::Finished;
    return std::nullopt;
}

std::optional<SurveyCategory> parse_category(std::string_view s) {
    if (s == "prio") return SurveyCategory::Prio;
    if (s == "normal") return SurveyCategory::Normal;
    if (s == "optional") return SurveyCategory::Optional;
    return std::nullopt;
}

Json encode_assignment(const AssignedSurvey& a) {
    Json entry = Json::object();
    entry["surveyKey"] = a.survey_key;
    entry["category"] = to_string(a.category);
    if (a.valid_from) entry["validFrom"] = a.valid_from->seconds;
    if (a.valid_until) entry["validUntil"] = a.valid_until->seconds;
    return entry;
}

Json encode_state(const ParticipantState& s) {
    Json flags = Json::object();
    for (const auto& [k, v] : s.flags) flags[k] = expr::encode_value(v);
    Json assigned = Json::array();
    for (const auto& a : s.assigned) assigned.push_back(encode_assignment(a));
    Json last = Json::object();
    for (const auto& [k, ts] : s.last_submissions) last[k] = ts.seconds;

    Json out = Json::object();
    out["participantId"] = s.participant_id;
    out["studyKey"] = s.study_key;
    out["status"] = to_string(s.status);
    out["flags"] = std::move(flags);
    out["assignedSurveys"] = std::move(assigned);
    out["lastSubmissions"] = std::move(last);
    out["enteredAt"] = s.entered_at.seconds;
    out["version"] = s.version;
    return out;
}

ParticipantState decode_state(const Json& doc) {
    try {
        ParticipantState s;
        s.participant_id = doc.at("participantId").get<std::string>();
        s.study_key = doc.at("studyKey").get<std::string>();
        auto status = parse_status(doc.at("status").get<std::string>());
        if (!status) malformed("unknown study status");
        s.status = *status;
        for (const auto& [k, v] : doc.at("flags").items()) s.flags[k] = expr::decode_value(v);
        for (const auto& a : doc.at("assignedSurveys")) {
            AssignedSurvey entry;
            entry.survey_key = a.at("surveyKey").get<std::string>();
            auto cat = parse_category(a.at("category").get<std::string>());
            if (!cat) malformed("unknown survey category");
            entry.category = *cat;
            if (a.contains("validFrom")) entry.valid_from = Timestamp{a["validFrom"].get<std::int64_t>()};
            if (a.contains("validUntil")) entry.valid_until = Timestamp{a["validUntil"].get<std::int64_t>()};
            s.assigned.push_back(std::move(entry));
        }
        for (const auto& [k, v] : doc.at("lastSubmissions").items())
            s.last_submissions[k] = Timestamp{v.get<std::int64_t>()};
        s.entered_at = Timestamp{doc.at("enteredAt").get<std::int64_t>()};
        s.version = doc.at("version").get<std::int64_t>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        malformed(std::string("participant state: ") + e.what());
    }
}

}  // namespace caselet::study
