#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "caselet/json.hpp"
#include "caselet/messaging/dispatch.hpp"
#include "caselet/study/engine.hpp"
#include "caselet/study/state.hpp"

namespace caselet::sim {

inline constexpr const char* kScenarioFormat = "caselet-scenario/1";

class ScenarioInvalid : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScenarioParticipant {
    std::string profile;  // scenario-local name
    std::string email;
    expr::Timestamp enter_at;
};

enum class ActionKind { Submit, Custom, Advance };

struct TimelineAction {
    expr::Timestamp at;
    ActionKind kind = ActionKind::Advance;
    std::string participant;                          // Submit
    std::string survey_key;                           // Submit
    std::vector<std::pair<std::string, Json>> answers;  // "item.slot" -> value, Submit
    std::string event_key;                            // Custom
    Json payload = Json::object();                    // Custom
    std::vector<std::string> participants;            // Custom; empty targets everyone active
};

struct Scenario {
    std::uint64_t seed = 0;
    expr::Timestamp start;
    expr::Timestamp end;
    std::int64_t clock_step_seconds = 6 * 3600;
    Json rules;
    std::vector<Json> surveys;
    std::vector<Json> templates;
    messaging::RateLimitConfig rate_limit;
    Json external_context = Json::object();
    std::vector<ScenarioParticipant> participants;
    std::vector<TimelineAction> timeline;
};

/// Throws ScenarioInvalid. Study documents are checked when the simulation
/// uploads them.
Scenario load_scenario(const Json& doc);

struct Sample {
    expr::Timestamp at;
    std::string participant;  // scenario name
    study::ParticipantState state;
    std::vector<study::AssignedSurvey> active;
};

struct ActionResult {
    expr::Timestamp at;
    std::string participant;
    std::string action;  // "enter", "submit:<survey>", "custom:<event>"
    int status = 0;
    std::string error;  // error code of the failing request
};

struct SimulationReport {
    std::map<std::string, std::string> profile_ids;  // scenario name -> profile id
    std::vector<expr::Timestamp> sweeps;
    std::vector<Sample> samples;  // after every sweep, participants in scenario order
    std::vector<ActionResult> actions;
    std::vector<Json> job_reports;  // without durations
    std::vector<messaging::OutboxRecord> outbox;
    std::vector<messaging::ScheduledMessage> messages;
    std::vector<study::AuditEntry> audit;
    std::string export_csv;

    /// File name -> contents. Byte-stable for a given scenario.
    std::map<std::string, std::string> files() const;
    void write(const std::filesystem::path& dir) const;
};

/// Replays a scenario against an in-memory store through the API service
/// on a virtual clock. Events at one instant run in this order: enrolments,
/// timeline actions, then the timer and messages jobs if the instant is a
/// sweep (start + k * clockStepSeconds, up to end).
SimulationReport simulate(const Scenario& scenario);

}  // namespace caselet::sim
