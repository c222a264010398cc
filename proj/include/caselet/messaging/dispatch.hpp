#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "caselet/expr/value.hpp"
#include "caselet/json.hpp"

namespace caselet::messaging {

using expr::Timestamp;

enum class MessageStatus { Pending, Sent, Cancelled, Failed };

std::string_view to_string(MessageStatus s);
std::optional<MessageStatus> parse_message_status(std::string_view s);

struct ScheduledMessage {
    std::string id;
    std::string participant_id;
    std::string study_key;  // empty for account-level messages such as login codes
    std::string template_key;
    Timestamp due_at;
    MessageStatus status = MessageStatus::Pending;
    int attempts = 0;
    std::optional<Timestamp> sent_at;
    std::string last_error;
    std::map<std::string, expr::Value> payload;  // exposed to templates as event payload

    friend bool operator==(const ScheduledMessage&, const ScheduledMessage&) = default;
};

Json encode_message(const ScheduledMessage& m);
ScheduledMessage decode_message(const Json& doc);

struct OutboxRecord {
    std::string to;
    std::string subject;
    std::string body;
    Timestamp sent_at;
    std::string template_key;
    std::string participant_id;

    friend bool operator==(const OutboxRecord&, const OutboxRecord&) = default;
};

Json encode_outbox(const OutboxRecord& r);
OutboxRecord decode_outbox(const Json& doc);

struct RateLimitConfig {
    int max_per_window = 10;
    int window_seconds = 1;
    int batch_size = 100;
    int max_attempts = 3;
    int backoff_base_seconds = 60;

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

/// Storage for scheduled messages. Implementations must make mark_sent atomic
/// with respect to other writers of the same message.
class MessageQueue {
public:
    virtual ~MessageQueue() = default;

    /// Stores a pending copy of `m` under a fresh id and returns the id.
    virtual std::string schedule(ScheduledMessage m) = 0;
    /// Cancels every pending message of this template for the participant.
    virtual std::size_t cancel(const std::string& participant_id, const std::string& template_key) = 0;
    /// Pending messages with due_at <= clock, ordered by (due_at, id).
    virtual std::vector<ScheduledMessage> due(Timestamp clock, std::size_t limit) = 0;
    virtual void update(const ScheduledMessage& m) = 0;
    /// Send times of messages sent strictly after `after`.
    virtual std::vector<Timestamp> sent_after(Timestamp after) = 0;
};

/// Simple vector-backed queue with sequential ids.
class MemoryQueue : public MessageQueue {
public:
    std::string schedule(ScheduledMessage m) override;
    std::string schedule(const std::string& participant_id, const std::string& template_key, Timestamp due_at) {
        ScheduledMessage m;
        m.participant_id = participant_id;
        m.template_key = template_key;
        m.due_at = due_at;
        return schedule(std::move(m));
    }
    std::size_t cancel(const std::string& participant_id, const std::string& template_key) override;
    std::vector<ScheduledMessage> due(Timestamp clock, std::size_t limit) override;
    void update(const ScheduledMessage& m) override;
    std::vector<Timestamp> sent_after(Timestamp after) override;

    const std::map<std::string, ScheduledMessage>& messages() const { return messages_; }

private:
    std::map<std::string, ScheduledMessage> messages_;
    std::uint64_t next_id_ = 1;
};

class SinkUnavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MessageSink {
public:
    virtual ~MessageSink() = default;
    /// False if the sink cannot take anything right now.
    virtual bool available() = 0;
    /// False rejects this record. Throws SinkUnavailable if the sink went away.
    virtual bool deliver(const OutboxRecord& r) = 0;
};

/// Append-only newline-delimited JSON outbox.
class OutboxFileSink : public MessageSink {
public:
    explicit OutboxFileSink(std::filesystem::path path);
    bool available() override;
    bool deliver(const OutboxRecord& r) override;

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

std::vector<OutboxRecord> read_outbox(const std::filesystem::path& path);

/// Builds the outgoing record for a message; throws to reject it.
using Composer = std::function<OutboxRecord(const ScheduledMessage&, Timestamp clock)>;

struct DispatchReport {
    std::size_t sent = 0;
    std::size_t deferred = 0;  // left pending: rate limit or retry scheduled
    std::size_t failed = 0;    // gave up after max_attempts

    friend bool operator==(const DispatchReport&, const DispatchReport&) = default;
};

/// Sends due messages in due order. At most batch_size per call, and never
/// more than max_per_window in any window_seconds of virtual time, counting
/// sends from earlier calls. A failed delivery is retried at
/// due_at + backoff_base * 2^(attempts - 1) until attempts exceeds max_attempts.
/// Throws SinkUnavailable with no status changes if the sink is down at the
/// start; if it goes away mid-batch, messages already sent stay sent.
DispatchReport dispatch_due(MessageQueue& queue, Timestamp clock, const RateLimitConfig& limit, MessageSink& sink,
                            const Composer& compose);

}  // namespace caselet::messaging
