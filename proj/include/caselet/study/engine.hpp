#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caselet/json.hpp"
#include "caselet/study/rules.hpp"
#include "caselet/study/state.hpp"

namespace caselet::study {

struct MessageToSchedule {
    std::string participant_id;
    std::string template_key;
    Timestamp due_at;
    friend bool operator==(const MessageToSchedule&, const MessageToSchedule&) = default;
};

struct MessageCancellation {
    std::string participant_id;
    std::string template_key;
    friend bool operator==(const MessageCancellation&, const MessageCancellation&) = default;
};

struct ExternalNotification {
    std::string participant_id;
    std::string endpoint_key;
    std::string url;
    std::map<std::string, Value> payload;
    Timestamp at;
    friend bool operator==(const ExternalNotification&, const ExternalNotification&) = default;
};

struct AuditEntry {
    std::string participant_id;
    Timestamp at;
    std::string what;    // event or action name, or "warning"
    std::string detail;
    friend bool operator==(const AuditEntry&, const AuditEntry&) = default;
};

/// Side effects requested by rules. The engine only records them.
struct EffectBatch {
    std::vector<MessageToSchedule> messages_to_schedule;
    std::vector<MessageCancellation> messages_to_cancel;
    std::vector<ExternalNotification> external_notifications;
    std::vector<AuditEntry> audit;

    bool empty() const {
        return messages_to_schedule.empty() && messages_to_cancel.empty() && external_notifications.empty() &&
               audit.empty();
    }
    void append(const EffectBatch& other);
    friend bool operator==(const EffectBatch&, const EffectBatch&) = default;
};

Json encode_effects(const EffectBatch& b);

/// Read-only inputs besides the state itself.
struct EventInputs {
    std::map<std::string, Value> external_context;
    std::map<std::string, survey::SurveyResponse> previous_responses;  // latest per survey key
};

/// Applies one event. Pure: the result depends only on the arguments.
/// Throws std::invalid_argument when the state belongs to another study.
std::pair<ParticipantState, EffectBatch> process_event(const StudyConfig& config, const ParticipantState& state,
                                                       const StudyEvent& event, const EventInputs& inputs,
                                                       Timestamp clock);

/// Assignments open at `clock`, prio first, then normal, then optional.
std::vector<AssignedSurvey> active_assignments(const ParticipantState& state, Timestamp clock);

struct SweepResult {
    std::string participant_id;
    std::optional<ParticipantState> state;  // absent when processing failed
    EffectBatch effects;
    std::string error;
};

/// Applies TIMER to every active participant pulled from `next` until it
/// returns nothing. Paused and finished participants are skipped. A failure
/// is reported for that participant and the sweep continues.
void run_timer_sweep(const StudyConfig& config, const std::function<std::optional<ParticipantState>()>& next,
                     Timestamp clock, const std::function<void(SweepResult)>& emit,
                     const std::function<EventInputs(const ParticipantState&)>& inputs_for = {});

std::vector<SweepResult> run_timer_sweep(const StudyConfig& config, const std::vector<ParticipantState>& states,
                                         Timestamp clock);

}  // namespace caselet::study
