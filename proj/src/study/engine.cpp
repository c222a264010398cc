#include "caselet/study/engine.hpp"

#include <algorithm>
#include <stdexcept>

#include "caselet/expr/codec.hpp"
#include "caselet/expr/evaluator.hpp"

namespace caselet::study {

namespace {

std::optional<Timestamp> as_time(const Value& v) {
    if (v.is_timestamp()) return v.as_timestamp();
    if (v.is_number()) return Timestamp{static_cast<std::int64_t>(v.as_number())};
    return std::nullopt;
}

class Applier {
public:
    Applier(const StudyConfig& config, ParticipantState& state, const StudyEvent& event, const EventInputs& inputs,
            Timestamp clock, EffectBatch& effects)
        : config_(config), state_(state), clock_(clock), effects_(effects) {
        ctx_.current_response = event.kind == EventKind::Submit ? event.response : std::nullopt;
        ctx_.previous_responses = inputs.previous_responses;
        ctx_.event_payload = event.payload;
        ctx_.external_context = inputs.external_context;
        ctx_.now = clock;
    }

    void run(const ActionList& actions) {
        for (const auto& a : actions) std::visit([&](const auto& x) { apply(x); }, a.node);
    }

private:
    Value eval(const Expression& e) {
        ctx_.participant_state = state_;
        auto r = expr::evaluate(e, ctx_);
        for (auto& w : r.warnings) audit("warning", std::move(w));
        return std::move(r.value);
    }

    void audit(std::string what, std::string detail) {
        effects_.audit.push_back({state_.participant_id, clock_, std::move(what), std::move(detail)});
    }

    void apply(const IfAction& a) {
        run(expr::truthy(eval(a.cond)) ? a.then_actions : a.else_actions);
    }

    void apply(const UpdateFlag& a) {
        auto v = eval(a.value);
        if (v.is_undefined()) {
            state_.flags.erase(a.key);
            audit("UPDATE_FLAG", a.key + " removed");
            return;
        }
        if (v.is_timestamp()) v = Value::number(static_cast<double>(v.as_timestamp().seconds));
        audit("UPDATE_FLAG", a.key + "=" + expr::display(v));
        state_.flags[a.key] = std::move(v);
    }

    void apply(const UpdateStatus& a) {
        state_.status = a.status;
        audit("UPDATE_STATUS", std::string(to_string(a.status)));
    }

    void apply(const AddSurvey& a) {
        AssignedSurvey entry{a.survey_key, a.category, std::nullopt, std::nullopt};
        if (a.valid_from) entry.valid_from = bound(*a.valid_from, "validFrom");
        if (a.valid_until) entry.valid_until = bound(*a.valid_until, "validUntil");
        if (entry.valid_from && entry.valid_until && *entry.valid_until < *entry.valid_from) {
            audit("warning", "ADD_SURVEY " + a.survey_key + " skipped: validUntil before validFrom");
            return;
        }
        audit("ADD_SURVEY", a.survey_key);
        state_.assigned.push_back(std::move(entry));
    }

    std::optional<Timestamp> bound(const Expression& e, const char* which) {
        auto t = as_time(eval(e));
        if (!t) audit("warning", std::string(which) + " is not a time; left open");
        return t;
    }

    void apply(const RemoveSurvey& a) {
        auto& list = state_.assigned;
        auto same = [&](const AssignedSurvey& s) { return s.survey_key == a.survey_key; };
        std::size_t before = list.size();
        switch (a.selector) {
            case RemoveSelector::First: {
                auto it = std::find_if(list.begin(), list.end(), same);
                if (it != list.end()) list.erase(it);
                break;
            }
            case RemoveSelector::Last: {
                auto it = std::find_if(list.rbegin(), list.rend(), same);
                if (it != list.rend()) list.erase(std::next(it).base());
                break;
            }
            case RemoveSelector::All: std::erase_if(list, same); break;
        }
        audit("REMOVE_SURVEY", a.survey_key + " x" + std::to_string(before - list.size()));
    }

    void apply(const ScheduleMessage& a) {
        auto due = as_time(eval(a.due));
        if (!due) {
            audit("warning", "SCHEDULE_MESSAGE " + a.template_key + " skipped: due time is not a time");
            return;
        }
        effects_.messages_to_schedule.push_back({state_.participant_id, a.template_key, *due});
        audit("SCHEDULE_MESSAGE", a.template_key + "@" + std::to_string(due->seconds));
    }

    void apply(const CancelMessages& a) {
        effects_.messages_to_cancel.push_back({state_.participant_id, a.template_key});
        audit("CANCEL_MESSAGES", a.template_key);
    }

    void apply(const NotifyExternal& a) {
        ExternalNotification n{state_.participant_id, a.endpoint_key, config_.external_endpoints.at(a.endpoint_key),
                               {}, clock_};
        for (const auto& [k, e] : a.payload) n.payload[k] = eval(e);
        effects_.external_notifications.push_back(std::move(n));
        audit("NOTIFY_EXTERNAL", a.endpoint_key);
    }

    const StudyConfig& config_;
    ParticipantState& state_;
    Timestamp clock_;
    EffectBatch& effects_;
    expr::EvalContext ctx_;
};

template <typename T>
void extend(std::vector<T>& into, const std::vector<T>& from) {
    into.insert(into.end(), from.begin(), from.end());
}

}  // namespace

void EffectBatch::append(const EffectBatch& other) {
    extend(messages_to_schedule, other.messages_to_schedule);
    extend(messages_to_cancel, other.messages_to_cancel);
    extend(external_notifications, other.external_notifications);
    extend(audit, other.audit);
}

Json encode_effects(const EffectBatch& b) {
    Json schedule = Json::array();
    for (const auto& m : b.messages_to_schedule)
        schedule.push_back({{"participantId", m.participant_id}, {"templateKey", m.template_key}, {"dueAt", m.due_at.seconds}});
    Json cancel = Json::array();
    for (const auto& m : b.messages_to_cancel)
        cancel.push_back({{"participantId", m.participant_id}, {"templateKey", m.template_key}});
    Json notify = Json::array();
    for (const auto& n : b.external_notifications) {
        Json payload = Json::object();
        for (const auto& [k, v] : n.payload) payload[k] = expr::encode_value(v);
        notify.push_back({{"participantId", n.participant_id},
                          {"endpointKey", n.endpoint_key},
                          {"url", n.url},
                          {"payload", std::move(payload)},
                          {"at", n.at.seconds}});
    }
    Json audit = Json::array();
    for (const auto& a : b.audit)
        audit.push_back({{"participantId", a.participant_id}, {"at", a.at.seconds}, {"what", a.what}, {"detail", a.detail}});
    return Json{{"messagesToSchedule", std::move(schedule)},
                {"messagesToCancel", std::move(cancel)},
                {"externalNotifications", std::move(notify)},
                {"audit", std::move(audit)}};
}

std::pair<ParticipantState, EffectBatch> process_event(const StudyConfig& config, const ParticipantState& state,
                                                       const StudyEvent& event, const EventInputs& inputs,
                                                       Timestamp clock) {
    if (state.study_key != config.study_key)
        throw std::invalid_argument("participant state belongs to study \"" + state.study_key + "\"");

    ParticipantState next = state;
    EffectBatch effects;
    effects.audit.push_back({state.participant_id, clock, std::string(to_string(event.kind)),
                             event.kind == EventKind::Submit && event.response ? event.response->survey_key
                                                                               : event.event_key});
    if (event.kind == EventKind::Enter) next.entered_at = clock;
    if (event.kind == EventKind::Submit && event.response) {
        const auto& key = event.response->survey_key;
        next.last_submissions[key] = clock;
        auto it = std::find_if(next.assigned.begin(), next.assigned.end(),
                               [&](const AssignedSurvey& a) { return a.survey_key == key; });
        if (it != next.assigned.end()) next.assigned.erase(it);
    }

    Applier applier(config, next, event, inputs, clock, effects);
    for (const auto& rule : config.rules)
        if (rule.on.matches(event)) applier.run(rule.actions);

    next.version = state.version + 1;
    return {std::move(next), std::move(effects)};
}

std::vector<AssignedSurvey> active_assignments(const ParticipantState& state, Timestamp clock) {
    std::vector<AssignedSurvey> out;
    for (const auto& a : state.assigned)
        if (a.active_at(clock)) out.push_back(a);
    std::stable_sort(out.begin(), out.end(),
                     [](const AssignedSurvey& a, const AssignedSurvey& b) { return a.category < b.category; });
    return out;
}

void run_timer_sweep(const StudyConfig& config, const std::function<std::optional<ParticipantState>()>& next,
                     Timestamp clock, const std::function<void(SweepResult)>& emit,
                     const std::function<EventInputs(const ParticipantState&)>& inputs_for) {
    while (auto state = next()) {
        if (state->status != StudyStatus::Active) continue;
        SweepResult result;
        result.participant_id = state->participant_id;
        try {
            auto inputs = inputs_for ? inputs_for(*state) : EventInputs{};
            auto [s, fx] = process_event(config, *state, StudyEvent::timer(clock), inputs, clock);
            result.state = std::move(s);
            result.effects = std::move(fx);
        } catch (const std::exception& e) {
            result.error = e.what();
        }
        emit(std::move(result));
    }
}

std::vector<SweepResult> run_timer_sweep(const StudyConfig& config, const std::vector<ParticipantState>& states,
                                         Timestamp clock) {
    std::size_t i = 0;
    std::vector<SweepResult> out;
    run_timer_sweep(
        config, [&]() -> std::optional<ParticipantState> { return i < states.size() ? std::optional(states[i++]) : std::nullopt; },
        clock, [&](SweepResult r) { out.push_back(std::move(r)); });
    return out;
}

}  // namespace caselet::study
