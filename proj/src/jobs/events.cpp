#include "caselet/jobs/events.hpp"

namespace caselet::jobs {

store::EventCommit make_commit(const study::StudyConfig& config, const study::ParticipantState& before,
                               const study::ParticipantState& after, const study::EffectBatch& effects,
                               const study::StudyEvent& event) {
    store::EventCommit c;
    c.state = after;
    c.expected_version = before.version;
    if (event.kind == study::EventKind::Submit) c.response = event.response;
    for (const auto& m : effects.messages_to_schedule) {
        messaging::ScheduledMessage sm;
        sm.participant_id = m.participant_id;
        sm.study_key = config.study_key;
        sm.template_key = m.template_key;
        sm.due_at = m.due_at;
        c.schedule.push_back(std::move(sm));
    }
    c.cancel = effects.messages_to_cancel;
    c.notifications = effects.external_notifications;
    c.audit = effects.audit;
    return c;
}

EventOutcome apply_event(store::Store& store, const study::StudyConfig& config, const std::string& participant_id,
                         const study::StudyEvent& event, const ApplyOptions& options) {
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
        auto current = store.state(config.study_key, participant_id);
        if (current && event.kind == study::EventKind::Enter)
            throw AlreadyEntered("participant " + participant_id + " already entered " + config.study_key);
        if (!current) {
            if (event.kind != study::EventKind::Enter)
                throw std::invalid_argument("participant " + participant_id + " has not entered " + config.study_key);
            current = study::ParticipantState{};
            current->participant_id = participant_id;
            current->study_key = config.study_key;
        }
        study::EventInputs inputs{options.external_context, store.latest_responses(config.study_key, participant_id)};
        auto [next, effects] = study::process_event(config, *current, event, inputs, event.at);
        if (options.before_commit) options.before_commit(attempt);
        if (store.commit_event(make_commit(config, *current, next, effects, event)) == store::WriteResult::Ok) {
            next.version = current->version + 1;
            return {std::move(next), std::move(effects), attempt};
        }
    }
    throw CommitConflict("participant " + participant_id + ": state kept changing during " +
                         std::to_string(options.max_attempts) + " attempts");
}

}  // namespace caselet::jobs
