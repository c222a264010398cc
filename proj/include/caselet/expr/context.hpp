#pragma once

#include <map>
#include <optional>
#include <string>

#include "caselet/study/state.hpp"
#include "caselet/survey/response.hpp"

namespace caselet::expr {

/// Everything an expression may read. `now` is the injected clock; nothing in
/// evaluation looks at wall-clock time.
struct EvalContext {
    std::optional<survey::SurveyResponse> current_response;
    std::map<std::string, survey::SurveyResponse> previous_responses;  // by survey key
    std::optional<study::ParticipantState> participant_state;
    std::map<std::string, Value> event_payload;
    std::map<std::string, Value> external_context;
    Timestamp now;
};

}  // namespace caselet::expr
