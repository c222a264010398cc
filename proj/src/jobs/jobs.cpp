#include "caselet/jobs/jobs.hpp"

#include <chrono>

#include "caselet/jobs/events.hpp"
#include "caselet/messaging/template.hpp"

namespace caselet::jobs {

namespace {

void run_timer(store::Store& store, expr::Timestamp clock, const JobSettings& settings, JobReport& report) {
    auto& counts = report.counts;
    counts["studies"] = 0;
    counts["participants"] = 0;
    counts["messagesScheduled"] = 0;
    counts["messagesCancelled"] = 0;
    counts["notifications"] = 0;
    counts["retries"] = 0;

    for (const auto& study_key : store.study_keys()) {
        auto config = store.config(study_key);
        if (!config) continue;
        ++counts["studies"];
        auto states = store.states(study_key);
        std::map<std::string, std::int64_t> read_versions;
        for (const auto& s : states) read_versions[s.participant_id] = s.version;
        std::size_t next_index = 0;
        auto next = [&]() -> std::optional<study::ParticipantState> {
            if (next_index == states.size()) return std::nullopt;
            return states[next_index++];
        };
        auto inputs_for = [&](const study::ParticipantState& s) {
            return study::EventInputs{settings.external_context, store.latest_responses(study_key, s.participant_id)};
        };
        auto tally = [&](const study::EffectBatch& e) {
            ++counts["participants"];
            counts["messagesScheduled"] += static_cast<std::int64_t>(e.messages_to_schedule.size());
            counts["messagesCancelled"] += static_cast<std::int64_t>(e.messages_to_cancel.size());
            counts["notifications"] += static_cast<std::int64_t>(e.external_notifications.size());
        };
        auto emit = [&](study::SweepResult r) {
            if (!r.state) {
                report.errors.push_back(study_key + "/" + r.participant_id + ": " + r.error);
                return;
            }
            auto before = store.state(study_key, r.participant_id);
            const auto event = study::StudyEvent::timer(clock);
            // The sweep ran against the state read at the start; a concurrent
            // writer may have moved it since, in which case re-apply.
            if (before && before->version == read_versions[r.participant_id] &&
                store.commit_event(make_commit(*config, *before, *r.state, r.effects, event)) ==
                    store::WriteResult::Ok) {
                tally(r.effects);
                return;
            }
            ++counts["retries"];
            try {
                ApplyOptions options;
                options.external_context = settings.external_context;
                auto outcome = apply_event(store, *config, r.participant_id, event, options);
                tally(outcome.effects);
            } catch (const std::exception& e) {
                report.errors.push_back(study_key + "/" + r.participant_id + ": " + e.what());
            }
        };
        study::run_timer_sweep(*config, next, clock, emit, inputs_for);
    }
}

void run_messages(store::Store& store, expr::Timestamp clock, messaging::MessageSink& sink,
                  const JobSettings& settings, JobReport& report) {
    report.counts["sent"] = 0;
    report.counts["deferred"] = 0;
    report.counts["failed"] = 0;
    auto compose = [&](const messaging::ScheduledMessage& m, expr::Timestamp now) {
        return compose_message(store, m, now);
    };
    try {
        auto r = messaging::dispatch_due(store.queue(), clock, settings.rate_limit, sink, compose);
        report.counts["sent"] = static_cast<std::int64_t>(r.sent);
        report.counts["deferred"] = static_cast<std::int64_t>(r.deferred);
        report.counts["failed"] = static_cast<std::int64_t>(r.failed);
    } catch (const messaging::SinkUnavailable& e) {
        report.errors.push_back(std::string("sink unavailable: ") + e.what());
    }
}

}  // namespace

std::string_view to_string(JobKind k) {
    switch (k) {
        case JobKind::Timer: return "timer";
        case JobKind::Messages: return "messages";
        case JobKind::Cleanup: return "cleanup";
    }
    return "?";
}

std::optional<JobKind> parse_job_kind(std::string_view s) {
    if (s == "timer") return JobKind::Timer;
    if (s == "messages") return JobKind::Messages;
    if (s == "cleanup") return JobKind::Cleanup;
    return std::nullopt;
}

Json JobReport::to_json(bool with_duration) const {
    Json j = {{"job", to_string(kind)}, {"status", skipped ? "already running" : "ok"}};
    Json c = Json::object();
    for (const auto& [k, v] : counts) c[k] = v;
    j["counts"] = std::move(c);
    j["errors"] = errors;
    if (with_duration) j["durationMs"] = duration_ms;
    return j;
}

messaging::OutboxRecord compose_message(const store::Store& store, const messaging::ScheduledMessage& m,
                                        expr::Timestamp clock) {
    auto tmpl = store.message_template(m.template_key);
    if (!tmpl) throw std::runtime_error("unknown template " + m.template_key);
    auto account = store.account_by_profile(m.participant_id);
    if (!account) account = store.account(m.participant_id);
    if (!account) throw std::runtime_error("no recipient for " + m.participant_id);

    expr::EvalContext ctx;
    ctx.now = clock;
    ctx.event_payload = m.payload;
    if (!m.study_key.empty()) {
        ctx.participant_state = store.state(m.study_key, m.participant_id);
        ctx.previous_responses = store.latest_responses(m.study_key, m.participant_id);
    }
    auto rendered = messaging::render_template(*tmpl, ctx, tmpl->default_locale);
    return {account->email, rendered.subject, rendered.body, clock, m.template_key, m.participant_id};
}

JobReport run_job(JobKind kind, store::Store& store, expr::Timestamp clock, messaging::MessageSink& sink,
                  const JobSettings& settings) {
    JobReport report;
    report.kind = kind;
    const std::string lease = "job:" + std::string(to_string(kind));
    if (!store.acquire_lease(lease, settings.holder, clock, settings.lease_ttl_seconds)) {
        report.skipped = true;
        return report;
    }
    // Duration is operator telemetry only; no job logic reads it.
    const auto started = std::chrono::steady_clock::now();
    try {
        switch (kind) {
            case JobKind::Timer: run_timer(store, clock, settings, report); break;
            case JobKind::Messages: run_messages(store, clock, sink, settings, report); break;
            case JobKind::Cleanup:
                report.counts["removed"] =
                    static_cast<std::int64_t>(store.cleanup_unverified(settings.unverified_ttl_seconds, clock));
                break;
        }
    } catch (const std::exception& e) {
        report.errors.push_back(e.what());
    }
    store.release_lease(lease, settings.holder);
    report.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return report;
}

}  // namespace caselet::jobs
