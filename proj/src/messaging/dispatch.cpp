#include "caselet/messaging/dispatch.hpp"

#include <algorithm>

#include "caselet/expr/codec.hpp"

namespace caselet::messaging {

std::string_view to_string(MessageStatus s) {
    switch (s) {
        case MessageStatus::Pending: return "pending";
        case MessageStatus::Sent: return "sent";
        case MessageStatus::Cancelled: return "cancelled";
        case MessageStatus::Failed: return "failed";
    }
    return "?";
}

std::optional<MessageStatus> parse_message_status(std::string_view s) {
    for (auto m : {MessageStatus::Pending, MessageStatus::Sent, MessageStatus::Cancelled, MessageStatus::Failed})
        if (to_string(m) == s) return m;
    return std::nullopt;
}

Json encode_message(const ScheduledMessage& m) {
    Json out = Json::object();
    out["id"] = m.id;
    out["participantId"] = m.participant_id;
    if (!m.study_key.empty()) out["studyKey"] = m.study_key;
    out["templateKey"] = m.template_key;
    out["dueAt"] = m.due_at.seconds;
    out["status"] = to_string(m.status);
    out["attempts"] = m.attempts;
    if (m.sent_at) out["sentAt"] = m.sent_at->seconds;
    if (!m.last_error.empty()) out["lastError"] = m.last_error;
    if (!m.payload.empty()) {
        Json payload = Json::object();
        for (const auto& [k, v] : m.payload) payload[k] = expr::encode_value(v);
        out["payload"] = std::move(payload);
    }
    return out;
}

ScheduledMessage decode_message(const Json& doc) {
    ScheduledMessage m;
    m.id = doc.at("id").get<std::string>();
    m.participant_id = doc.at("participantId").get<std::string>();
    m.study_key = doc.value("studyKey", "");
    m.template_key = doc.at("templateKey").get<std::string>();
    m.due_at = Timestamp{doc.at("dueAt").get<std::int64_t>()};
    auto status = parse_message_status(doc.at("status").get<std::string>());
    if (!status) throw std::invalid_argument("unknown message status");
    m.status = *status;
    m.attempts = doc.at("attempts").get<int>();
    if (doc.contains("sentAt")) m.sent_at = Timestamp{doc["sentAt"].get<std::int64_t>()};
    m.last_error = doc.value("lastError", "");
    if (doc.contains("payload"))
        for (auto it = doc["payload"].begin(); it != doc["payload"].end(); ++it)
            m.payload[it.key()] = expr::decode_value(it.value());
    return m;
}

Json encode_outbox(const OutboxRecord& r) {
    Json out = Json::object();
    out["to"] = r.to;
    out["subject"] = r.subject;
    out["body"] = r.body;
    out["sentAt"] = r.sent_at.seconds;
    out["templateKey"] = r.template_key;
    out["participantId"] = r.participant_id;
    return out;
}

OutboxRecord decode_outbox(const Json& doc) {
    return {doc.at("to").get<std::string>(),          doc.at("subject").get<std::string>(),
            doc.at("body").get<std::string>(),        Timestamp{doc.at("sentAt").get<std::int64_t>()},
            doc.at("templateKey").get<std::string>(), doc.at("participantId").get<std::string>()};
}

void RateLimitConfig::validate() const {
    if (max_per_window <= 0) throw std::invalid_argument("maxPerWindow must be > 0");
    if (window_seconds <= 0) throw std::invalid_argument("windowSeconds must be > 0");
    if (batch_size <= 0) throw std::invalid_argument("batchSize must be > 0");
    if (max_attempts < 1 || max_attempts > 30) throw std::invalid_argument("maxAttempts must be in [1, 30]");
    if (backoff_base_seconds < 1) throw std::invalid_argument("backoffBaseSeconds must be >= 1");
}

std::string MemoryQueue::schedule(ScheduledMessage m) {
    m.id = "m" + std::to_string(next_id_++);
    m.status = MessageStatus::Pending;
    m.attempts = 0;
    auto id = m.id;
    messages_.emplace(id, std::move(m));
    return id;
}

std::size_t MemoryQueue::cancel(const std::string& participant_id, const std::string& template_key) {
    std::size_t n = 0;
    for (auto& [id, m] : messages_)
        if (m.status == MessageStatus::Pending && m.participant_id == participant_id && m.template_key == template_key) {
            m.status = MessageStatus::Cancelled;
            ++n;
        }
    return n;
}

std::vector<ScheduledMessage> MemoryQueue::due(Timestamp clock, std::size_t limit) {
    std::vector<ScheduledMessage> out;
    for (const auto& [id, m] : messages_)
        if (m.status == MessageStatus::Pending && m.due_at <= clock) out.push_back(m);
    std::sort(out.begin(), out.end(), [](const ScheduledMessage& a, const ScheduledMessage& b) {
        return std::tie(a.due_at, a.id) < std::tie(b.due_at, b.id);
    });
    if (out.size() > limit) out.resize(limit);
    return out;
}

void MemoryQueue::update(const ScheduledMessage& m) { messages_.at(m.id) = m; }

std::vector<Timestamp> MemoryQueue::sent_after(Timestamp after) {
    std::vector<Timestamp> out;
    for (const auto& [id, m] : messages_)
        if (m.status == MessageStatus::Sent && m.sent_at && *m.sent_at > after) out.push_back(*m.sent_at);
    return out;
}

OutboxFileSink::OutboxFileSink(std::filesystem::path path) : path_(std::move(path)) {}

bool OutboxFileSink::available() {
    if (!out_.is_open()) out_.open(path_, std::ios::app | std::ios::binary);
    return out_.good();
}

bool OutboxFileSink::deliver(const OutboxRecord& r) {
    if (!available()) throw SinkUnavailable("outbox " + path_.string() + " is not writable");
    out_ << encode_outbox(r).dump() << '\n';
    out_.flush();
    if (!out_.good()) throw SinkUnavailable("write to outbox " + path_.string() + " failed");
    return true;
}

std::vector<OutboxRecord> read_outbox(const std::filesystem::path& path) {
    std::vector<OutboxRecord> out;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(decode_outbox(Json::parse(line)));
    return out;
}

DispatchReport dispatch_due(MessageQueue& queue, Timestamp clock, const RateLimitConfig& limit, MessageSink& sink,
                            const Composer& compose) {
    limit.validate();
    DispatchReport report;
    auto batch = queue.due(clock, static_cast<std::size_t>(limit.batch_size));
    if (batch.empty()) return report;
    if (!sink.available()) throw SinkUnavailable("message sink unavailable");

    // Sliding window log: a send at `clock` is allowed while fewer than
    // max_per_window sends fall in (clock - window, clock].
    auto recent = queue.sent_after(Timestamp{clock.seconds - limit.window_seconds});
    auto in_window = static_cast<int>(recent.size());

    for (auto& m : batch) {
        if (in_window >= limit.max_per_window) {
            ++report.deferred;
            continue;
        }
        bool ok = false;
        std::string error;
        OutboxRecord record;
        try {
            record = compose(m, clock);
            ok = true;
        } catch (const std::exception& e) {
            error = e.what();
        }
        if (ok) {
            ok = sink.deliver(record);  // SinkUnavailable propagates; this message stays pending
            if (!ok) error = "rejected by sink";
        }
        if (ok) {
            m.status = MessageStatus::Sent;
            m.sent_at = clock;
            m.last_error.clear();
            queue.update(m);
            ++report.sent;
            ++in_window;
            continue;
        }
        m.attempts += 1;
        m.last_error = error;
        if (m.attempts > limit.max_attempts) {
            m.status = MessageStatus::Failed;
            ++report.failed;
        } else {
            m.due_at = Timestamp{m.due_at.seconds + (std::int64_t{limit.backoff_base_seconds} << (m.attempts - 1))};
            ++report.deferred;
        }
        queue.update(m);
    }
    return report;
}

}  // namespace caselet::messaging
