#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "caselet/json.hpp"
#include "caselet/messaging/dispatch.hpp"
#include "caselet/messaging/template.hpp"
#include "caselet/study/engine.hpp"
#include "caselet/study/rules.hpp"
#include "caselet/study/state.hpp"
#include "caselet/survey/model.hpp"
#include "caselet/survey/response.hpp"

namespace caselet::store {

using expr::Timestamp;

struct Profile {
    std::string profile_id;
    std::string alias;
    friend bool operator==(const Profile&, const Profile&) = default;
};

struct Account {
    std::string account_id;
    std::string email;  // normalized
    std::string password_hash;
    bool verified = false;
    bool otp_enabled = false;
    Timestamp created_at;
    std::vector<Profile> profiles;
    friend bool operator==(const Account&, const Account&) = default;
};

enum class CodePurpose { Login, Verify };

struct OneTimeCode {
    std::string code_id;
    std::string account_id;
    std::string code;  // 6 decimal digits
    CodePurpose purpose = CodePurpose::Login;
    Timestamp created_at;
    Timestamp expires_at;
    bool used = false;
    friend bool operator==(const OneTimeCode&, const OneTimeCode&) = default;
};

struct ConsentRecord {
    std::string profile_id;
    std::string study_key;
    Timestamp consented_at;
    std::string consent_version;
    friend bool operator==(const ConsentRecord&, const ConsentRecord&) = default;
};

struct StoredResponse {
    std::string response_id;
    std::string study_key;
    survey::SurveyResponse response;
    friend bool operator==(const StoredResponse&, const StoredResponse&) = default;
};

struct JobLease {
    std::string key;
    std::string holder;
    Timestamp expires_at;
    friend bool operator==(const JobLease&, const JobLease&) = default;
};

enum class StoreErrorCode { EmailTaken, InvalidEmail, UnknownAccount, UnknownStudy, DuplicateVersion, Corrupt, Io };

std::string_view to_string(StoreErrorCode c);

class StoreError : public std::runtime_error {
public:
    StoreError(StoreErrorCode code, std::string detail);
    StoreErrorCode code() const { return code_; }

private:
    StoreErrorCode code_;
};

/// Trim and lowercase.
std::string normalize_email(std::string_view email);
bool valid_email(std::string_view normalized);

/// Durable log of committed transactions.
class StorageBackend {
public:
    virtual ~StorageBackend() = default;
    /// Committed transactions, oldest first.
    virtual std::vector<Json> load() = 0;
    /// Must be durable when it returns; a throw means the transaction may or
    /// may not survive a restart, but never partially.
    virtual void append(const Json& txn) = 0;
    /// Replaces the whole log with `txns`.
    virtual void rewrite(const std::vector<Json>& txns) = 0;
};

class MemoryBackend : public StorageBackend {
public:
    std::vector<Json> load() override { return log_; }
    void append(const Json& txn) override { log_.push_back(txn); }
    void rewrite(const std::vector<Json>& txns) override { log_ = txns; }

private:
    std::vector<Json> log_;
};

/// Thrown by FileBackend fault injection in place of a process crash.
class SimulatedCrash : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Newline-delimited JSON journal, one transaction per line, fsynced on
/// append. A torn final line is discarded on load. Holds an exclusive lock
/// on "<path>.lock" so only one process at a time uses a journal.
class FileBackend : public StorageBackend {
public:
    explicit FileBackend(std::filesystem::path path);
    ~FileBackend() override;
    FileBackend(const FileBackend&) = delete;
    FileBackend& operator=(const FileBackend&) = delete;

    std::vector<Json> load() override;
    void append(const Json& txn) override;
    void rewrite(const std::vector<Json>& txns) override;

    /// The next append writes only the first `bytes` bytes of its line and
    /// then throws SimulatedCrash; the backend refuses writes afterwards.
    void inject_crash_after(std::size_t bytes) { crash_after_ = bytes; }

private:
    std::filesystem::path path_;
    int fd_ = -1;
    int lock_fd_ = -1;
    std::optional<std::size_t> crash_after_;
    bool dead_ = false;
};

enum class WriteResult { Ok, Conflict };

/// Everything one study event persists, committed as a single transaction.
struct EventCommit {
    study::ParticipantState state;  // version is set to expected_version + 1
    std::int64_t expected_version = 0;
    std::optional<survey::SurveyResponse> response;
    std::vector<messaging::ScheduledMessage> schedule;
    std::vector<study::MessageCancellation> cancel;
    std::vector<study::ExternalNotification> notifications;
    std::vector<study::AuditEntry> audit;
};

enum class ExportFormat { Ndjson, Csv };

std::optional<ExportFormat> parse_export_format(std::string_view s);

/// Thread-safe record store. Each mutating call is one transaction: it is
/// validated, appended to the backend, and only then applied in memory.
class Store {
public:
    explicit Store(std::unique_ptr<StorageBackend> backend = std::make_unique<MemoryBackend>());
    static std::unique_ptr<Store> open_file(const std::filesystem::path& path);

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    // Accounts
    Account create_account(std::string_view email, std::string password_hash, Timestamp clock);
    std::optional<Account> account(const std::string& account_id) const;
    std::optional<Account> account_by_email(std::string_view email) const;
    std::optional<Account> account_by_profile(const std::string& profile_id) const;
    void set_verified(const std::string& account_id, bool verified);
    void set_otp_enabled(const std::string& account_id, bool enabled);
    Profile add_profile(const std::string& account_id, std::string alias);
    std::size_t account_count() const;

    // One-time codes
    OneTimeCode put_code(const std::string& account_id, CodePurpose purpose, std::string code, Timestamp clock,
                         std::int64_t ttl_seconds);
    /// Marks the code used if it is valid, unused and unexpired at `clock`.
    bool consume_code(const std::string& account_id, CodePurpose purpose, const std::string& code, Timestamp clock);
    std::vector<OneTimeCode> codes_for(const std::string& account_id) const;

    // Participant states
    std::optional<study::ParticipantState> state(const std::string& study_key, const std::string& participant_id) const;
    std::vector<study::ParticipantState> states(const std::string& study_key) const;
    /// Succeeds iff the stored version (0 when absent) equals `expected`;
    /// the stored version becomes expected + 1.
    WriteResult put_state_versioned(study::ParticipantState state, std::int64_t expected);
    WriteResult commit_event(EventCommit commit);

    // Responses
    std::vector<StoredResponse> responses(const std::string& study_key) const;
    /// Latest submission per survey key for one participant.
    std::map<std::string, survey::SurveyResponse> latest_responses(const std::string& study_key,
                                                                   const std::string& participant_id) const;
    std::string export_responses(const std::string& study_key, Timestamp from, Timestamp to, ExportFormat format) const;

    // Study configuration and survey definitions
    std::int64_t put_config(const study::StudyConfig& config);  // returns the new config version
    std::optional<study::StudyConfig> config(const std::string& study_key) const;
    std::vector<std::string> study_keys() const;
    void put_survey(const std::string& study_key, const survey::SurveyDefinition& def);
    /// Most recently uploaded version.
    std::shared_ptr<const survey::SurveyDefinition> survey(const std::string& study_key,
                                                           const std::string& survey_key) const;
    std::shared_ptr<const survey::SurveyDefinition> survey_version(const std::string& study_key,
                                                                   const std::string& survey_key,
                                                                   const std::string& version_id) const;

    // Consents and templates
    void put_consent(const ConsentRecord& c);
    std::optional<ConsentRecord> consent(const std::string& profile_id, const std::string& study_key) const;
    void put_template(const messaging::MessageTemplate& t);
    std::optional<messaging::MessageTemplate> message_template(const std::string& key) const;

    // Message queue view over the messages table.
    messaging::MessageQueue& queue() { return queue_; }
    std::vector<messaging::ScheduledMessage> messages() const;

    /// External notifications recorded by study events, oldest first. They
    /// are kept for a delivery worker; this store does not send them.
    std::vector<study::ExternalNotification> notifications() const;
    std::vector<study::AuditEntry> audit_log() const;

    // Job leases
    /// Takes the lease if it is free, expired, or already held by `holder`.
    bool acquire_lease(const std::string& key, const std::string& holder, Timestamp clock, std::int64_t ttl_seconds);
    void release_lease(const std::string& key, const std::string& holder);

    /// Deletes unverified accounts with created_at + ttl <= clock together
    /// with their profiles' states, codes, consents, responses and messages.
    std::size_t cleanup_unverified(std::int64_t ttl_seconds, Timestamp clock);

    /// Rewrites the backend log as a single snapshot transaction.
    void compact();

private:
    class Queue : public messaging::MessageQueue {
    public:
        explicit Queue(Store& s) : store_(s) {}
        std::string schedule(messaging::ScheduledMessage m) override;
        std::size_t cancel(const std::string& participant_id, const std::string& template_key) override;
        std::vector<messaging::ScheduledMessage> due(Timestamp clock, std::size_t limit) override;
        void update(const messaging::ScheduledMessage& m) override;
        std::vector<Timestamp> sent_after(Timestamp after) override;

    private:
        Store& store_;
    };

    using Lock = std::lock_guard<std::mutex>;
    using StateKey = std::pair<std::string, std::string>;  // study, participant

    std::string next_id(std::string_view prefix);
    void commit(Json ops);
    void apply(const Json& op);
    Json snapshot_ops() const;
    Json message_schedule_op(messaging::ScheduledMessage m);
    void cancel_ops(const std::string& participant_id, const std::string& template_key, Json& ops) const;
    const Account& account_ref(const std::string& account_id) const;
    std::int64_t stored_version(const StateKey& key) const;

    std::unique_ptr<StorageBackend> backend_;
    mutable std::mutex mu_;
    std::uint64_t seq_ = 0;

    std::map<std::string, Account> accounts_;
    std::map<std::string, std::string> email_index_;
    std::map<std::string, std::string> profile_index_;
    std::map<std::string, OneTimeCode> codes_;
    std::map<StateKey, study::ParticipantState> states_;
    std::map<std::string, StoredResponse> responses_;
    std::map<std::string, std::pair<study::StudyConfig, std::int64_t>> configs_;
    std::map<std::tuple<std::string, std::string, std::string>, std::shared_ptr<const survey::SurveyDefinition>> surveys_;
    std::map<std::pair<std::string, std::string>, std::string> latest_survey_;
    std::map<std::pair<std::string, std::string>, ConsentRecord> consents_;
    std::map<std::string, messaging::MessageTemplate> templates_;
    std::map<std::string, messaging::ScheduledMessage> messages_;
    std::map<std::string, JobLease> leases_;
    std::vector<study::ExternalNotification> notifications_;
    std::vector<study::AuditEntry> audit_;

    Queue queue_{*this};
};

}  // namespace caselet::store
