#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caselet/expr/value.hpp"
#include "caselet/json.hpp"

namespace caselet::study {

using expr::Timestamp;
using expr::Value;

enum class StudyStatus { Active, Paused, Finished };
enum class SurveyCategory { Prio, Normal, Optional };

std::string_view to_string(StudyStatus s);
std::string_view to_string(SurveyCategory c);
std::optional<StudyStatus> parse_status(std::string_view s);
std::optional<SurveyCategory> parse_category(std::string_view s);

struct AssignedSurvey {
    std::string survey_key;
    SurveyCategory category = SurveyCategory::Normal;
    std::optional<Timestamp> valid_from;
    std::optional<Timestamp> valid_until;

    bool active_at(Timestamp t) const {
        return (!valid_from || *valid_from <= t) && (!valid_until || t <= *valid_until);
    }

    friend bool operator==(const AssignedSurvey&, const AssignedSurvey&) = default;
};

/// Persistent per-(study, profile) record that study rules read and mutate.
struct ParticipantState {
    std::string participant_id;
    std::string study_key;
    StudyStatus status = StudyStatus::Active;
    std::map<std::string, Value> flags;  // Text | Number | Boolean only
    std::vector<AssignedSurvey> assigned;
    std::map<std::string, Timestamp> last_submissions;
    Timestamp entered_at;
    std::int64_t version = 0;

    friend bool operator==(const ParticipantState&, const ParticipantState&) = default;
};

Json encode_assignment(const AssignedSurvey& a);
Json encode_state(const ParticipantState& s);
ParticipantState decode_state(const Json& doc);

}  // namespace caselet::study
