#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caselet/messaging/dispatch.hpp"
#include "caselet/store/store.hpp"

namespace caselet::jobs {

enum class JobKind { Timer, Messages, Cleanup };

std::string_view to_string(JobKind k);
std::optional<JobKind> parse_job_kind(std::string_view s);

struct JobSettings {
    messaging::RateLimitConfig rate_limit;
    std::int64_t unverified_ttl_seconds = 7 * 86400;
    std::int64_t lease_ttl_seconds = 15 * 60;
    std::string holder = "caselet";
    std::map<std::string, expr::Value> external_context;
};

struct JobReport {
    JobKind kind = JobKind::Timer;
    bool skipped = false;  // lease held by someone else
    std::map<std::string, std::int64_t> counts;
    std::vector<std::string> errors;
    double duration_ms = 0;

    /// `status` is "ok" or "already running". Duration is left out when
    /// `with_duration` is false so reports can be compared byte for byte.
    Json to_json(bool with_duration = true) const;
};

/// Outgoing record for a queued message: template rendered against the
/// participant's state and the message payload, addressed to the account
/// owning the participant. Throws when the template or recipient is missing.
messaging::OutboxRecord compose_message(const store::Store& store, const messaging::ScheduledMessage& m,
                                        expr::Timestamp clock);

/// Runs one job under the store lease "job:<kind>". Per-item failures are
/// collected in the report; a held lease yields a skipped report.
JobReport run_job(JobKind kind, store::Store& store, expr::Timestamp clock, messaging::MessageSink& sink,
                  const JobSettings& settings = {});

}  // namespace caselet::jobs
