#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "caselet/store/store.hpp"
#include "caselet/study/engine.hpp"

namespace caselet::jobs {

/// Versioned write kept losing after every retry.
class CommitConflict : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// ENTER for a participant that already has state in the study.
class AlreadyEntered : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ApplyOptions {
    int max_attempts = 5;
    std::map<std::string, expr::Value> external_context;
    /// Test hook, called before each commit attempt with the attempt number.
    std::function<void(int)> before_commit;
};

struct EventOutcome {
    study::ParticipantState state;
    study::EffectBatch effects;
    int attempts = 1;
};

/// Converts an engine result into one store transaction. Scheduled messages
/// carry the study key so the messages job can read participant flags.
store::EventCommit make_commit(const study::StudyConfig& config, const study::ParticipantState& before,
                               const study::ParticipantState& after, const study::EffectBatch& effects,
                               const study::StudyEvent& event);

/// Reads the participant state, runs the event through the study engine and
/// commits state, response and effects atomically. On a version conflict the
/// state is re-read and the event re-applied, up to max_attempts in total.
/// ENTER starts from a fresh state and throws AlreadyEntered if one exists;
/// any other event on a missing state throws std::invalid_argument.
EventOutcome apply_event(store::Store& store, const study::StudyConfig& config, const std::string& participant_id,
                         const study::StudyEvent& event, const ApplyOptions& options = {});

}  // namespace caselet::jobs
