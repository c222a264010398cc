#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "caselet/api/token.hpp"
#include "caselet/jobs/jobs.hpp"
#include "caselet/json.hpp"
#include "caselet/messaging/dispatch.hpp"
#include "caselet/store/password.hpp"
#include "caselet/store/store.hpp"
#include "caselet/survey/engine.hpp"

namespace caselet::api {

using Clock = std::function<Timestamp()>;

/// Source of session ids, session seeds and one-time codes.
class Entropy {
public:
    virtual ~Entropy() = default;
    virtual std::uint64_t next() = 0;

    std::string hex(std::size_t bytes);
    /// `n` decimal digits, leading zeros allowed.
    std::string digits(std::size_t n);
};

/// libsodium CSPRNG.
class SystemEntropy : public Entropy {
public:
    std::uint64_t next() override;
};

/// splitmix64; for simulation and tests.
class SeededEntropy : public Entropy {
public:
    explicit SeededEntropy(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() override;

private:
    std::uint64_t state_;
};

struct ServiceConfig {
    std::string token_secret;
    std::int64_t participant_token_ttl_seconds = 24 * 3600;
    std::int64_t session_ttl_seconds = 24 * 3600;  // inactivity
    std::int64_t code_ttl_seconds = 10 * 60;
    std::size_t min_password_length = 12;
    int auth_max_attempts = 10;
    std::int64_t auth_window_seconds = 15 * 60;
    int submit_attempts = 5;
    store::PasswordParams password = store::PasswordParams::interactive();
    jobs::JobSettings jobs;
    /// Templates used for verification and login codes.
    std::string verification_template = "verification";
    std::string login_code_template = "login-code";
};

struct Request {
    std::string method;  // upper case
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
    std::string authorization;  // raw header value
};

struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;

    /// Body parsed as JSON; throws for non-JSON bodies.
    Json json() const { return Json::parse(body); }
};

/// Handler failure mapped to `{"error": code, "detail": text}` plus extras.
class ApiError : public std::runtime_error {
public:
    ApiError(int status, std::string code, std::string detail, Json extra = Json::object());

    int status() const { return status_; }
    const std::string& code() const { return code_; }
    Json body() const;

private:
    int status_;
    std::string code_;
    Json extra_;
};

enum class Access { Public, Participant, Management };

/// Static description of one route, including the scope a management route
/// requires. `study_scoped` routes check the scope against the {study}
/// segment; the others require a global scope.
struct RouteSpec {
    std::string method;
    std::string pattern;  // e.g. "/v1/studies/{study}/enter"
    Access access = Access::Public;
    std::optional<Permission> permission;
    bool study_scoped = false;
};

/// Participant and management back-ends over one store. Transport
/// independent: `handle` maps a request to a response and never throws.
class Service {
public:
    Service(store::Store& store, ServiceConfig config, Clock clock, Entropy& entropy,
            messaging::MessageSink* sink = nullptr);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    Response handle(const Request& req);

    static const std::vector<RouteSpec>& routes();

    /// Signs a management token; used by the CLI and tests.
    std::string issue_management_token(const std::string& user, std::vector<Scope> scopes,
                                       std::int64_t ttl_seconds) const;
    const TokenSigner& signer() const { return signer_; }

    /// Installs the verification and login-code templates if they are absent.
    void install_default_templates();

    std::size_t open_sessions() const;

private:
    struct Call;
    struct SessionSlot;
    using Handler = Json (Service::*)(Call&);
    struct Route {
        RouteSpec spec;
        Handler handler;
    };
    static const std::vector<Route>& route_table();

    Response dispatch(const Request& req);
    void authorize(const RouteSpec& spec, Call& call);
    void count_auth_attempt(const std::string& key, Timestamp now);
    std::string participant_token(const std::string& account_id, Timestamp now) const;
    void send_code(const store::Account& account, store::CodePurpose purpose, Timestamp now);
    store::Account require_account(const Call& call) const;
    std::string require_profile(const Call& call, const Json& body) const;
    study::StudyConfig require_config(const std::string& study_key) const;
    std::shared_ptr<SessionSlot> require_session(const Call& call);
    /// Called with the session locked; drops it and throws SessionExpired
    /// after too long without activity.
    void expire_if_idle(const SessionSlot& slot, const Call& call);

    Json healthz(Call&);
    Json signup(Call&);
    Json login(Call&);
    Json otp_verify(Call&);
    Json otp_enable(Call&);
    Json get_account(Call&);
    Json add_profile(Call&);
    Json list_studies(Call&);
    Json enter_study(Call&);
    Json assignments(Call&);
    Json open_session(Call&);
    Json answer(Call&);
    Json move(Call&);
    Json submit(Call&);
    Json upload_survey(Call&);
    Json upload_rules(Call&);
    Json export_responses(Call&);
    Json list_participants(Call&);
    Json custom_event(Call&);
    Json run_job(Call&);
    Json put_template(Call&);

    store::Store& store_;
    ServiceConfig config_;
    Clock clock_;
    Entropy& entropy_;
    messaging::MessageSink* sink_;
    TokenSigner signer_;
    std::string dummy_hash_;

    mutable std::mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
    std::mutex auth_mu_;
    std::map<std::string, std::deque<Timestamp>> auth_attempts_;
    std::mutex entropy_mu_;
};

}  // namespace caselet::api
