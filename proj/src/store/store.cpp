#include "caselet/store/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "caselet/expr/codec.hpp"
#include "caselet/survey/document.hpp"

namespace caselet::store {

namespace {

[[noreturn]] void io_error(const std::string& what) {
    throw StoreError(StoreErrorCode::Io, what + ": " + std::strerror(errno));
}

std::string_view purpose_name(CodePurpose p) { return p == CodePurpose::Login ? "login" : "verify"; }

CodePurpose parse_purpose(const std::string& s) {
    if (s == "login") return CodePurpose::Login;
    if (s == "verify") return CodePurpose::Verify;
    throw StoreError(StoreErrorCode::Corrupt, "unknown code purpose \"" + s + "\"");
}

Json encode_account(const Account& a) {
    Json profiles = Json::array();
    for (const auto& p : a.profiles) profiles.push_back({{"profileId", p.profile_id}, {"alias", p.alias}});
    return {{"accountId", a.account_id}, {"email", a.email},           {"passwordHash", a.password_hash},
            {"verified", a.verified},    {"otpEnabled", a.otp_enabled}, {"createdAt", a.created_at.seconds},
            {"profiles", std::move(profiles)}};
}

Account decode_account(const Json& j) {
    Account a;
    a.account_id = j.at("accountId").get<std::string>();
    a.email = j.at("email").get<std::string>();
    a.password_hash = j.at("passwordHash").get<std::string>();
    a.verified = j.at("verified").get<bool>();
    a.otp_enabled = j.at("otpEnabled").get<bool>();
    a.created_at = Timestamp{j.at("createdAt").get<std::int64_t>()};
    for (const auto& p : j.at("profiles"))
        a.profiles.push_back({p.at("profileId").get<std::string>(), p.at("alias").get<std::string>()});
    return a;
}

Json encode_code(const OneTimeCode& c) {
    return {{"codeId", c.code_id},
            {"accountId", c.account_id},
            {"code", c.code},
            {"purpose", purpose_name(c.purpose)},
            {"createdAt", c.created_at.seconds},
            {"expiresAt", c.expires_at.seconds},
            {"used", c.used}};
}

OneTimeCode decode_code(const Json& j) {
    return {j.at("codeId").get<std::string>(),
            j.at("accountId").get<std::string>(),
            j.at("code").get<std::string>(),
            parse_purpose(j.at("purpose").get<std::string>()),
            Timestamp{j.at("createdAt").get<std::int64_t>()},
            Timestamp{j.at("expiresAt").get<std::int64_t>()},
            j.at("used").get<bool>()};
}

Json encode_notification(const study::ExternalNotification& n) {
    Json payload = Json::object();
    for (const auto& [k, v] : n.payload) payload[k] = expr::encode_value(v);
    return {{"participantId", n.participant_id},
            {"endpointKey", n.endpoint_key},
            {"url", n.url},
            {"payload", std::move(payload)},
            {"at", n.at.seconds}};
}

study::ExternalNotification decode_notification(const Json& j) {
    study::ExternalNotification n{j.at("participantId").get<std::string>(), j.at("endpointKey").get<std::string>(),
                                  j.at("url").get<std::string>(), {}, Timestamp{j.at("at").get<std::int64_t>()}};
    for (auto it = j.at("payload").begin(); it != j.at("payload").end(); ++it)
        n.payload[it.key()] = expr::decode_value(it.value());
    return n;
}

Json encode_audit(const study::AuditEntry& a) {
    return {{"participantId", a.participant_id}, {"at", a.at.seconds}, {"what", a.what}, {"detail", a.detail}};
}

study::AuditEntry decode_audit(const Json& j) {
    return {j.at("participantId").get<std::string>(), Timestamp{j.at("at").get<std::int64_t>()},
            j.at("what").get<std::string>(), j.at("detail").get<std::string>()};
}

Json encode_consent(const ConsentRecord& c) {
    return {{"profileId", c.profile_id},
            {"studyKey", c.study_key},
            {"consentedAt", c.consented_at.seconds},
            {"consentVersion", c.consent_version}};
}

ConsentRecord decode_consent(const Json& j) {
    return {j.at("profileId").get<std::string>(), j.at("studyKey").get<std::string>(),
            Timestamp{j.at("consentedAt").get<std::int64_t>()}, j.at("consentVersion").get<std::string>()};
}

// RFC 4180: quote when the cell holds a comma, quote, CR or LF.
std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

bool write_all(int fd, const char* data, std::size_t n) {
    while (n > 0) {
        auto w = ::write(fd, data, n);
        if (w < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data += w;
        n -= static_cast<std::size_t>(w);
    }
    return true;
}

}  // namespace

std::string_view to_string(StoreErrorCode c) {
    switch (c) {
        case StoreErrorCode::EmailTaken: return "EmailTaken";
        case StoreErrorCode::InvalidEmail: return "InvalidEmail";
        case StoreErrorCode::UnknownAccount: return "UnknownAccount";
        case StoreErrorCode::UnknownStudy: return "UnknownStudy";
        case StoreErrorCode::DuplicateVersion: return "DuplicateVersion";
        case StoreErrorCode::Corrupt: return "Corrupt";
        case StoreErrorCode::Io: return "Io";
    }
    return "?";
}

StoreError::StoreError(StoreErrorCode code, std::string detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

std::string normalize_email(std::string_view email) {
    auto begin = email.find_first_not_of(" \t\r\n");
    auto end = email.find_last_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return {};
    std::string out(email.substr(begin, end - begin + 1));
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool valid_email(std::string_view e) {
    auto at = e.find('@');
    if (at == std::string_view::npos || at == 0 || e.find('@', at + 1) != std::string_view::npos) return false;
    auto domain = e.substr(at + 1);
    auto dot = domain.find('.');
    if (dot == std::string_view::npos || dot == 0 || domain.back() == '.') return false;
    return std::none_of(e.begin(), e.end(), [](unsigned char c) { return std::isspace(c) || std::iscntrl(c); });
}

std::optional<ExportFormat> parse_export_format(std::string_view s) {
    if (s == "ndjson") return ExportFormat::Ndjson;
    if (s == "csv") return ExportFormat::Csv;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// FileBackend

FileBackend::FileBackend(std::filesystem::path path) : path_(std::move(path)) {
    // The lock lives in a sidecar file because rewrite() replaces the journal inode.
    auto lock_path = path_;
    lock_path += ".lock";
    lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0600);
    if (lock_fd_ < 0) io_error("open " + lock_path.string());
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(lock_fd_);
        throw StoreError(StoreErrorCode::Io, path_.string() + " is in use by another process");
    }
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0600);
    if (fd_ < 0) {
        ::close(lock_fd_);
        io_error("open " + path_.string());
    }
}

FileBackend::~FileBackend() {
    if (fd_ >= 0) ::close(fd_);
    if (lock_fd_ >= 0) ::close(lock_fd_);
}

std::vector<Json> FileBackend::load() {
    std::ifstream in(path_, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string data = buf.str();

    std::vector<Json> out;
    std::size_t pos = 0;
    std::size_t good = 0;
    while (pos < data.size()) {
        auto nl = data.find('\n', pos);
        if (nl == std::string::npos) break;  // torn tail
        auto line = std::string_view(data).substr(pos, nl - pos);
        Json txn = Json::parse(line, nullptr, false);
        if (txn.is_discarded()) {
            if (nl + 1 < data.size())
                throw StoreError(StoreErrorCode::Corrupt, path_.string() + ": unreadable transaction at byte " +
                                                              std::to_string(pos));
            break;
        }
        out.push_back(std::move(txn));
        pos = nl + 1;
        good = pos;
    }
    if (good < data.size() && ::ftruncate(fd_, static_cast<off_t>(good)) != 0) io_error("truncate " + path_.string());
    return out;
}

void FileBackend::append(const Json& txn) {
    if (dead_) throw SimulatedCrash("backend crashed earlier");
    auto line = txn.dump() + "\n";
    if (crash_after_) {
        auto n = std::min(*crash_after_, line.size());
        dead_ = true;
        write_all(fd_, line.data(), n);
        ::fsync(fd_);
        throw SimulatedCrash("crashed after " + std::to_string(n) + " of " + std::to_string(line.size()) + " bytes");
    }
    if (!write_all(fd_, line.data(), line.size())) io_error("append " + path_.string());
    if (::fsync(fd_) != 0) io_error("fsync " + path_.string());
}

void FileBackend::rewrite(const std::vector<Json>& txns) {
    auto tmp = path_;
    tmp += ".tmp";
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
    if (fd < 0) io_error("open " + tmp.string());
    for (const auto& t : txns) {
        auto line = t.dump() + "\n";
        if (!write_all(fd, line.data(), line.size())) {
            ::close(fd);
            io_error("write " + tmp.string());
        }
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) io_error("fsync " + tmp.string());
    std::filesystem::rename(tmp, path_);
    ::close(fd_);
    fd_ = ::open(path_.c_str(), O_RDWR | O_APPEND | O_CLOEXEC);
    if (fd_ < 0) io_error("reopen " + path_.string());
}

// ---------------------------------------------------------------------------
// Store: construction, transactions, replay

Store::Store(std::unique_ptr<StorageBackend> backend) : backend_(std::move(backend)) {
    for (const auto& txn : backend_->load()) {
        try {
            for (const auto& op : txn.at("ops")) apply(op);
            seq_ = std::max(seq_, txn.at("seq").get<std::uint64_t>());
        } catch (const StoreError&) {
            throw;
        } catch (const std::exception& e) {
            throw StoreError(StoreErrorCode::Corrupt, std::string("replay failed: ") + e.what());
        }
    }
}

std::unique_ptr<Store> Store::open_file(const std::filesystem::path& path) {
    return std::make_unique<Store>(std::make_unique<FileBackend>(path));
}

std::string Store::next_id(std::string_view prefix) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%010llu", static_cast<unsigned long long>(++seq_));
    return std::string(prefix) + buf;
}

void Store::commit(Json ops) {
    if (ops.empty()) return;
    backend_->append(Json{{"seq", seq_}, {"ops", ops}});
    for (const auto& op : ops) apply(op);
}

void Store::apply(const Json& op) {
    const auto kind = op.at("op").get<std::string>();
    if (kind == "putAccount") {
        auto a = decode_account(op.at("account"));
        if (auto old = accounts_.find(a.account_id); old != accounts_.end()) email_index_.erase(old->second.email);
        email_index_[a.email] = a.account_id;
        for (const auto& p : a.profiles) profile_index_[p.profile_id] = a.account_id;
        accounts_[a.account_id] = std::move(a);
    } else if (kind == "deleteAccount") {
        auto id = op.at("accountId").get<std::string>();
        auto it = accounts_.find(id);
        if (it == accounts_.end()) return;
        std::set<std::string> profiles;
        for (const auto& p : it->second.profiles) profiles.insert(p.profile_id);
        email_index_.erase(it->second.email);
        for (const auto& p : profiles) profile_index_.erase(p);
        accounts_.erase(it);
        std::erase_if(codes_, [&](const auto& kv) { return kv.second.account_id == id; });
        std::erase_if(states_, [&](const auto& kv) { return profiles.count(kv.first.second) > 0; });
        std::erase_if(consents_, [&](const auto& kv) { return profiles.count(kv.first.first) > 0; });
        std::erase_if(responses_,
                      [&](const auto& kv) { return profiles.count(kv.second.response.participant_ref) > 0; });
        std::erase_if(messages_, [&](const auto& kv) {
            return profiles.count(kv.second.participant_id) > 0 || kv.second.participant_id == id;
        });
        std::erase_if(notifications_, [&](const auto& n) { return profiles.count(n.participant_id) > 0; });
        std::erase_if(audit_, [&](const auto& a) { return profiles.count(a.participant_id) > 0; });
    } else if (kind == "putCode") {
        auto c = decode_code(op.at("code"));
        codes_[c.code_id] = std::move(c);
    } else if (kind == "putState") {
        auto s = study::decode_state(op.at("state"));
        StateKey key{s.study_key, s.participant_id};
        states_[key] = std::move(s);
    } else if (kind == "putResponse") {
        StoredResponse r{op.at("responseId").get<std::string>(), op.at("studyKey").get<std::string>(),
                         survey::decode_response(op.at("response"))};
        auto id = r.response_id;
        responses_[id] = std::move(r);
    } else if (kind == "putConfig") {
        auto config = study::load_rules(op.at("config"));
        auto key = config.study_key;
        configs_[key] = {std::move(config), op.at("version").get<std::int64_t>()};
    } else if (kind == "putSurvey") {
        auto study = op.at("studyKey").get<std::string>();
        auto def = std::make_shared<const survey::SurveyDefinition>(survey::load_survey(op.at("survey")));
        surveys_[{study, def->survey_key, def->version_id}] = def;
        if (op.value("latest", true)) latest_survey_[{study, def->survey_key}] = def->version_id;
    } else if (kind == "putConsent") {
        auto c = decode_consent(op.at("consent"));
        consents_[{c.profile_id, c.study_key}] = std::move(c);
    } else if (kind == "putTemplate") {
        auto t = messaging::load_template(op.at("template"));
        auto key = t.template_key;
        templates_[key] = std::move(t);
    } else if (kind == "putMessage") {
        auto m = messaging::decode_message(op.at("message"));
        auto id = m.id;
        messages_[id] = std::move(m);
    } else if (kind == "putLease") {
        JobLease l{op.at("key").get<std::string>(), op.at("holder").get<std::string>(),
                   Timestamp{op.at("expiresAt").get<std::int64_t>()}};
        auto key = l.key;
        leases_[key] = std::move(l);
    } else if (kind == "putNotification") {
        notifications_.push_back(decode_notification(op.at("notification")));
    } else if (kind == "appendAudit") {
        for (const auto& a : op.at("entries")) audit_.push_back(decode_audit(a));
    } else if (kind == "dropLease") {
        leases_.erase(op.at("key").get<std::string>());
    } else {
        throw StoreError(StoreErrorCode::Corrupt, "unknown journal op \"" + kind + "\"");
    }
}

Json Store::snapshot_ops() const {
    Json ops = Json::array();
    for (const auto& [id, a] : accounts_) ops.push_back({{"op", "putAccount"}, {"account", encode_account(a)}});
    for (const auto& [id, c] : codes_) ops.push_back({{"op", "putCode"}, {"code", encode_code(c)}});
    for (const auto& [key, s] : states_) ops.push_back({{"op", "putState"}, {"state", study::encode_state(s)}});
    for (const auto& [id, r] : responses_)
        ops.push_back({{"op", "putResponse"},
                       {"responseId", id},
                       {"studyKey", r.study_key},
                       {"response", survey::encode_response(r.response)}});
    for (const auto& [key, cv] : configs_)
        ops.push_back({{"op", "putConfig"}, {"config", study::encode_rules(cv.first)}, {"version", cv.second}});
    for (const auto& [key, def] : surveys_) {
        const auto& [study, survey_key, version] = key;
        bool latest = latest_survey_.at({study, survey_key}) == version;
        ops.push_back({{"op", "putSurvey"}, {"studyKey", study}, {"survey", survey::encode_survey(*def)}, {"latest", latest}});
    }
    for (const auto& [key, c] : consents_) ops.push_back({{"op", "putConsent"}, {"consent", encode_consent(c)}});
    for (const auto& [key, t] : templates_)
        ops.push_back({{"op", "putTemplate"}, {"template", messaging::encode_template(t)}});
    for (const auto& [id, m] : messages_) ops.push_back({{"op", "putMessage"}, {"message", messaging::encode_message(m)}});
    for (const auto& [key, l] : leases_)
        ops.push_back({{"op", "putLease"}, {"key", l.key}, {"holder", l.holder}, {"expiresAt", l.expires_at.seconds}});
    for (const auto& n : notifications_) ops.push_back({{"op", "putNotification"}, {"notification", encode_notification(n)}});
    if (!audit_.empty()) {
        Json entries = Json::array();
        for (const auto& a : audit_) entries.push_back(encode_audit(a));
        ops.push_back({{"op", "appendAudit"}, {"entries", std::move(entries)}});
    }
    return ops;
}

void Store::compact() {
    Lock lock(mu_);
    auto ops = snapshot_ops();
    std::vector<Json> txns;
    if (!ops.empty()) txns.push_back(Json{{"seq", seq_}, {"ops", std::move(ops)}});
    backend_->rewrite(txns);
}

// ---------------------------------------------------------------------------
// Accounts and codes

const Account& Store::account_ref(const std::string& account_id) const {
    auto it = accounts_.find(account_id);
    if (it == accounts_.end()) throw StoreError(StoreErrorCode::UnknownAccount, account_id);
    return it->second;
}

Account Store::create_account(std::string_view email, std::string password_hash, Timestamp clock) {
    auto normalized = normalize_email(email);
    if (!valid_email(normalized)) throw StoreError(StoreErrorCode::InvalidEmail, std::string(email));
    Lock lock(mu_);
    if (email_index_.count(normalized)) throw StoreError(StoreErrorCode::EmailTaken, normalized);
    Account a;
    a.account_id = next_id("acc-");
    a.email = normalized;
    a.password_hash = std::move(password_hash);
    a.created_at = clock;
    a.profiles.push_back({next_id("prf-"), "main"});
    commit(Json::array({Json{{"op", "putAccount"}, {"account", encode_account(a)}}}));
    return a;
}

std::optional<Account> Store::account(const std::string& account_id) const {
    Lock lock(mu_);
    auto it = accounts_.find(account_id);
    if (it == accounts_.end()) return std::nullopt;
    return it->second;
}

std::optional<Account> Store::account_by_email(std::string_view email) const {
    Lock lock(mu_);
    auto it = email_index_.find(normalize_email(email));
    if (it == email_index_.end()) return std::nullopt;
    return accounts_.at(it->second);
}

std::optional<Account> Store::account_by_profile(const std::string& profile_id) const {
    Lock lock(mu_);
    auto it = profile_index_.find(profile_id);
    if (it == profile_index_.end()) return std::nullopt;
    return accounts_.at(it->second);
}

void Store::set_verified(const std::string& account_id, bool verified) {
    Lock lock(mu_);
    auto a = account_ref(account_id);
    a.verified = verified;
    commit(Json::array({Json{{"op", "putAccount"}, {"account", encode_account(a)}}}));
}

void Store::set_otp_enabled(const std::string& account_id, bool enabled) {
    Lock lock(mu_);
    auto a = account_ref(account_id);
    a.otp_enabled = enabled;
    commit(Json::array({Json{{"op", "putAccount"}, {"account", encode_account(a)}}}));
}

Profile Store::add_profile(const std::string& account_id, std::string alias) {
    Lock lock(mu_);
    auto a = account_ref(account_id);
    Profile p{next_id("prf-"), std::move(alias)};
    a.profiles.push_back(p);
    commit(Json::array({Json{{"op", "putAccount"}, {"account", encode_account(a)}}}));
    return p;
}

std::size_t Store::account_count() const {
    Lock lock(mu_);
    return accounts_.size();
}

OneTimeCode Store::put_code(const std::string& account_id, CodePurpose purpose, std::string code, Timestamp clock,
                            std::int64_t ttl_seconds) {
    if (ttl_seconds <= 0) throw std::invalid_argument("code ttl must be positive");
    Lock lock(mu_);
    account_ref(account_id);
    OneTimeCode c{next_id("otc-"), account_id, std::move(code), purpose, clock, Timestamp{clock.seconds + ttl_seconds}, false};
    commit(Json::array({Json{{"op", "putCode"}, {"code", encode_code(c)}}}));
    return c;
}

bool Store::consume_code(const std::string& account_id, CodePurpose purpose, const std::string& code, Timestamp clock) {
    Lock lock(mu_);
    for (const auto& [id, c] : codes_) {
        if (c.account_id != account_id || c.purpose != purpose || c.used || c.code != code) continue;
        if (clock >= c.expires_at) continue;
        auto used = c;
        used.used = true;
        commit(Json::array({Json{{"op", "putCode"}, {"code", encode_code(used)}}}));
        return true;
    }
    return false;
}

std::vector<OneTimeCode> Store::codes_for(const std::string& account_id) const {
    Lock lock(mu_);
    std::vector<OneTimeCode> out;
    for (const auto& [id, c] : codes_)
        if (c.account_id == account_id) out.push_back(c);
    return out;
}

// ---------------------------------------------------------------------------
// States, events, responses

std::optional<study::ParticipantState> Store::state(const std::string& study_key,
                                                    const std::string& participant_id) const {
    Lock lock(mu_);
    auto it = states_.find({study_key, participant_id});
    if (it == states_.end()) return std::nullopt;
    return it->second;
}

std::vector<study::ParticipantState> Store::states(const std::string& study_key) const {
    Lock lock(mu_);
    std::vector<study::ParticipantState> out;
    for (auto it = states_.lower_bound({study_key, ""}); it != states_.end() && it->first.first == study_key; ++it)
        out.push_back(it->second);
    return out;
}

std::int64_t Store::stored_version(const StateKey& key) const {
    auto it = states_.find(key);
    return it == states_.end() ? 0 : it->second.version;
}

WriteResult Store::put_state_versioned(study::ParticipantState state, std::int64_t expected) {
    EventCommit c;
    c.state = std::move(state);
    c.expected_version = expected;
    return commit_event(std::move(c));
}

Json Store::message_schedule_op(messaging::ScheduledMessage m) {
    m.id = next_id("msg-");
    m.status = messaging::MessageStatus::Pending;
    m.attempts = 0;
    return {{"op", "putMessage"}, {"message", messaging::encode_message(m)}};
}

void Store::cancel_ops(const std::string& participant_id, const std::string& template_key, Json& ops) const {
    for (const auto& [id, m] : messages_) {
        if (m.status != messaging::MessageStatus::Pending || m.participant_id != participant_id ||
            m.template_key != template_key)
            continue;
        auto cancelled = m;
        cancelled.status = messaging::MessageStatus::Cancelled;
        ops.push_back({{"op", "putMessage"}, {"message", messaging::encode_message(cancelled)}});
    }
}

WriteResult Store::commit_event(EventCommit commit_request) {
    Lock lock(mu_);
    auto& st = commit_request.state;
    StateKey key{st.study_key, st.participant_id};
    if (stored_version(key) != commit_request.expected_version) return WriteResult::Conflict;
    st.version = commit_request.expected_version + 1;

    Json ops = Json::array();
    // Cancellations apply to messages queued before this event; new ones
    // scheduled by the same event stay pending.
    for (const auto& c : commit_request.cancel) cancel_ops(c.participant_id, c.template_key, ops);
    ops.push_back({{"op", "putState"}, {"state", study::encode_state(st)}});
    if (commit_request.response)
        ops.push_back({{"op", "putResponse"},
                       {"responseId", next_id("rsp-")},
                       {"studyKey", st.study_key},
                       {"response", survey::encode_response(*commit_request.response)}});
    for (auto& m : commit_request.schedule) ops.push_back(message_schedule_op(std::move(m)));
    for (const auto& n : commit_request.notifications)
        ops.push_back({{"op", "putNotification"}, {"notification", encode_notification(n)}});
    if (!commit_request.audit.empty()) {
        Json entries = Json::array();
        for (const auto& a : commit_request.audit) entries.push_back(encode_audit(a));
        ops.push_back({{"op", "appendAudit"}, {"entries", std::move(entries)}});
    }
    commit(std::move(ops));
    return WriteResult::Ok;
}

std::vector<StoredResponse> Store::responses(const std::string& study_key) const {
    Lock lock(mu_);
    std::vector<StoredResponse> out;
    for (const auto& [id, r] : responses_)
        if (r.study_key == study_key) out.push_back(r);
    return out;
}

std::map<std::string, survey::SurveyResponse> Store::latest_responses(const std::string& study_key,
                                                                      const std::string& participant_id) const {
    Lock lock(mu_);
    std::map<std::string, survey::SurveyResponse> out;
    // Ids grow with commit order, so later entries win ties on submittedAt.
    for (const auto& [id, r] : responses_) {
        if (r.study_key != study_key || r.response.participant_ref != participant_id) continue;
        auto it = out.find(r.response.survey_key);
        if (it == out.end() || it->second.submitted_at <= r.response.submitted_at) out[r.response.survey_key] = r.response;
    }
    return out;
}

std::string Store::export_responses(const std::string& study_key, Timestamp from, Timestamp to,
                                    ExportFormat format) const {
    if (to < from) throw std::invalid_argument("export range end precedes start");
    std::vector<StoredResponse> rows;
    {
        Lock lock(mu_);
        if (!configs_.count(study_key)) throw StoreError(StoreErrorCode::UnknownStudy, study_key);
        for (const auto& [id, r] : responses_)
            if (r.study_key == study_key && from <= r.response.submitted_at && r.response.submitted_at < to)
                rows.push_back(r);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const StoredResponse& a, const StoredResponse& b) {
        return std::tie(a.response.submitted_at, a.response.participant_ref) <
               std::tie(b.response.submitted_at, b.response.participant_ref);
    });

    std::string out;
    if (format == ExportFormat::Ndjson) {
        for (const auto& r : rows) out += survey::encode_response(r.response).dump() + "\n";
        return out;
    }
    std::set<std::string> columns;
    for (const auto& r : rows)
        for (const auto& item : r.response.items)
            for (const auto& slot : item.slots) columns.insert(item.item_key + "." + slot.slot_key);
    out = "participantRef,surveyKey,versionId,openedAt,submittedAt";
    for (const auto& c : columns) out += "," + csv_cell(c);
    out += "\r\n";
    for (const auto& r : rows) {
        const auto& resp = r.response;
        out += csv_cell(resp.participant_ref) + "," + csv_cell(resp.survey_key) + "," + csv_cell(resp.version_id) + "," +
               std::to_string(resp.opened_at.seconds) + "," + std::to_string(resp.submitted_at.seconds);
        for (const auto& c : columns) {
            auto dot = c.find('.');
            const auto* v = resp.find(std::string_view(c).substr(0, dot), std::string_view(c).substr(dot + 1));
            out += ",";
            if (v) out += csv_cell(expr::display(survey::as_value(*v)));
        }
        out += "\r\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Configs, surveys, consents, templates

std::int64_t Store::put_config(const study::StudyConfig& config) {
    Lock lock(mu_);
    auto it = configs_.find(config.study_key);
    std::int64_t version = it == configs_.end() ? 1 : it->second.second + 1;
    commit(Json::array({Json{{"op", "putConfig"}, {"config", study::encode_rules(config)}, {"version", version}}}));
    return version;
}

std::optional<study::StudyConfig> Store::config(const std::string& study_key) const {
    Lock lock(mu_);
    auto it = configs_.find(study_key);
    if (it == configs_.end()) return std::nullopt;
    return it->second.first;
}

std::vector<std::string> Store::study_keys() const {
    Lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& [k, v] : configs_) out.push_back(k);
    return out;
}

void Store::put_survey(const std::string& study_key, const survey::SurveyDefinition& def) {
    Lock lock(mu_);
    if (surveys_.count({study_key, def.survey_key, def.version_id}))
        throw StoreError(StoreErrorCode::DuplicateVersion,
                         study_key + "/" + def.survey_key + " version " + def.version_id + " already exists");
    commit(Json::array({Json{{"op", "putSurvey"}, {"studyKey", study_key}, {"survey", survey::encode_survey(def)}}}));
}

std::shared_ptr<const survey::SurveyDefinition> Store::survey(const std::string& study_key,
                                                              const std::string& survey_key) const {
    Lock lock(mu_);
    auto it = latest_survey_.find({study_key, survey_key});
    if (it == latest_survey_.end()) return nullptr;
    return surveys_.at({study_key, survey_key, it->second});
}

std::shared_ptr<const survey::SurveyDefinition> Store::survey_version(const std::string& study_key,
                                                                      const std::string& survey_key,
                                                                      const std::string& version_id) const {
    Lock lock(mu_);
    auto it = surveys_.find({study_key, survey_key, version_id});
    return it == surveys_.end() ? nullptr : it->second;
}

void Store::put_consent(const ConsentRecord& c) {
    Lock lock(mu_);
    commit(Json::array({Json{{"op", "putConsent"}, {"consent", encode_consent(c)}}}));
}

std::optional<ConsentRecord> Store::consent(const std::string& profile_id, const std::string& study_key) const {
    Lock lock(mu_);
    auto it = consents_.find({profile_id, study_key});
    if (it == consents_.end()) return std::nullopt;
    return it->second;
}

void Store::put_template(const messaging::MessageTemplate& t) {
    Lock lock(mu_);
    commit(Json::array({Json{{"op", "putTemplate"}, {"template", messaging::encode_template(t)}}}));
}

std::optional<messaging::MessageTemplate> Store::message_template(const std::string& key) const {
    Lock lock(mu_);
    auto it = templates_.find(key);
    if (it == templates_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------
// Messages

std::vector<messaging::ScheduledMessage> Store::messages() const {
    Lock lock(mu_);
    std::vector<messaging::ScheduledMessage> out;
    for (const auto& [id, m] : messages_) out.push_back(m);
    return out;
}

std::string Store::Queue::schedule(messaging::ScheduledMessage m) {
    Lock lock(store_.mu_);
    auto op = store_.message_schedule_op(std::move(m));
    auto id = op["message"]["id"].get<std::string>();
    store_.commit(Json::array({std::move(op)}));
    return id;
}

std::size_t Store::Queue::cancel(const std::string& participant_id, const std::string& template_key) {
    Lock lock(store_.mu_);
    Json ops = Json::array();
    store_.cancel_ops(participant_id, template_key, ops);
    auto n = ops.size();
    store_.commit(std::move(ops));
    return n;
}

std::vector<messaging::ScheduledMessage> Store::Queue::due(Timestamp clock, std::size_t limit) {
    Lock lock(store_.mu_);
    std::vector<messaging::ScheduledMessage> out;
    for (const auto& [id, m] : store_.messages_)
        if (m.status == messaging::MessageStatus::Pending && m.due_at <= clock) out.push_back(m);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.due_at, a.id) < std::tie(b.due_at, b.id);
    });
    if (out.size() > limit) out.resize(limit);
    return out;
}

void Store::Queue::update(const messaging::ScheduledMessage& m) {
    Lock lock(store_.mu_);
    store_.commit(Json::array({Json{{"op", "putMessage"}, {"message", messaging::encode_message(m)}}}));
}

std::vector<Timestamp> Store::Queue::sent_after(Timestamp after) {
    Lock lock(store_.mu_);
    std::vector<Timestamp> out;
    for (const auto& [id, m] : store_.messages_)
        if (m.status == messaging::MessageStatus::Sent && m.sent_at && *m.sent_at > after) out.push_back(*m.sent_at);
    return out;
}

std::vector<study::ExternalNotification> Store::notifications() const {
    Lock lock(mu_);
    return notifications_;
}

std::vector<study::AuditEntry> Store::audit_log() const {
    Lock lock(mu_);
    return audit_;
}

// ---------------------------------------------------------------------------
// Leases and cleanup

bool Store::acquire_lease(const std::string& key, const std::string& holder, Timestamp clock, std::int64_t ttl_seconds) {
    Lock lock(mu_);
    auto it = leases_.find(key);
    if (it != leases_.end() && it->second.holder != holder && clock < it->second.expires_at) return false;
    commit(Json::array(
        {Json{{"op", "putLease"}, {"key", key}, {"holder", holder}, {"expiresAt", clock.seconds + ttl_seconds}}}));
    return true;
}

void Store::release_lease(const std::string& key, const std::string& holder) {
    Lock lock(mu_);
    auto it = leases_.find(key);
    if (it == leases_.end() || it->second.holder != holder) return;
    commit(Json::array({Json{{"op", "dropLease"}, {"key", key}}}));
}

std::size_t Store::cleanup_unverified(std::int64_t ttl_seconds, Timestamp clock) {
    if (ttl_seconds <= 0) throw std::invalid_argument("cleanup ttl must be positive");
    Lock lock(mu_);
    Json ops = Json::array();
    for (const auto& [id, a] : accounts_)
        if (!a.verified && a.created_at.seconds + ttl_seconds <= clock.seconds)
            ops.push_back({{"op", "deleteAccount"}, {"accountId", id}});
    auto n = ops.size();
    commit(std::move(ops));
    return n;
}

}  // namespace caselet::store
