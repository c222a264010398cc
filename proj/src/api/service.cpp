#include "caselet/api/service.hpp"

#include <sodium.h>

#include <algorithm>
#include <limits>
#include <set>

#include "caselet/expr/codec.hpp"
#include "caselet/jobs/events.hpp"
#include "caselet/messaging/template.hpp"
#include "caselet/study/engine.hpp"
#include "caselet/survey/document.hpp"

namespace caselet::api {

// ---------------------------------------------------------------------------
// Entropy

std::string Entropy::hex(std::size_t bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes * 2);
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < bytes; ++i) {
        if (i % 8 == 0) word = next();
        const auto b = static_cast<unsigned>(word & 0xff);
        word >>= 8;
        out += digits[b >> 4];
        out += digits[b & 0xf];
    }
    return out;
}

std::string Entropy::digits(std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        // Rejection sampling keeps the digits uniform.
        std::uint64_t v;
        do {
            v = next();
        } while (v >= std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % 10);
        out += static_cast<char>('0' + v % 10);
    }
    return out;
}

std::uint64_t SystemEntropy::next() {
    std::uint64_t v;
    randombytes_buf(&v, sizeof v);
    return v;
}

std::uint64_t SeededEntropy::next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Errors

ApiError::ApiError(int status, std::string code, std::string detail, Json extra)
    : std::runtime_error(std::move(detail)), status_(status), code_(std::move(code)), extra_(std::move(extra)) {}

Json ApiError::body() const {
    Json j = {{"error", code_}, {"detail", what()}};
    for (auto it = extra_.begin(); it != extra_.end(); ++it) j[it.key()] = it.value();
    return j;
}

// ---------------------------------------------------------------------------
// Request plumbing

struct Service::Call {
    const Request& req;
    Timestamp now;
    std::map<std::string, std::string> params;
    std::optional<TokenClaims> claims;
    int status = 200;
    std::optional<Response> raw;  // non-JSON result
    std::optional<Json> parsed;

    const Json& body() {
        if (!parsed) {
            auto doc = Json::parse(req.body.empty() ? std::string("{}") : req.body, nullptr, false);
            if (doc.is_discarded()) throw ApiError(400, "BadRequest", "request body is not valid JSON");
            parsed = std::move(doc);
        }
        return *parsed;
    }

    const std::string& param(const std::string& name) const { return params.at(name); }

    std::optional<std::string> query(const std::string& name) const {
        auto it = req.query.find(name);
        if (it == req.query.end()) return std::nullopt;
        return it->second;
    }
};

struct Service::SessionSlot {
    explicit SessionSlot(survey::SurveySession s) : session(std::move(s)) {}

    std::mutex mu;
    survey::SurveySession session;
    std::string account_id;
    std::string profile_id;
    std::string study_key;
    std::optional<std::string> locale;
    Timestamp last_activity;
};

namespace {

std::string string_field(const Json& body, const char* name, bool required = true) {
    if (!body.is_object() || !body.contains(name)) {
        if (required) throw ApiError(400, "BadRequest", std::string("missing field \"") + name + "\"");
        return {};
    }
    if (!body[name].is_string()) throw ApiError(400, "BadRequest", std::string("field \"") + name + "\" must be a string");
    return body[name].get<std::string>();
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        auto slash = path.find('/', pos);
        if (slash == std::string::npos) slash = path.size();
        if (slash > pos) out.push_back(path.substr(pos, slash - pos));
        pos = slash + 1;
    }
    return out;
}

bool match_route(const std::string& pattern, const std::string& path, std::map<std::string, std::string>& params) {
    auto want = split_path(pattern);
    auto got = split_path(path);
    if (want.size() != got.size()) return false;
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < want.size(); ++i) {
        if (want[i].size() > 2 && want[i].front() == '{' && want[i].back() == '}')
            out[want[i].substr(1, want[i].size() - 2)] = got[i];
        else if (want[i] != got[i])
            return false;
    }
    params = std::move(out);
    return true;
}

Json assignment_list(const study::ParticipantState& state, Timestamp now) {
    Json out = Json::array();
    for (const auto& a : study::active_assignments(state, now)) out.push_back(study::encode_assignment(a));
    return out;
}

Json failing_list(const std::vector<survey::ValidationResult>& failing) {
    Json out = Json::array();
    for (const auto& v : failing) out.push_back({{"itemKey", v.item_key}, {"key", v.key}});
    return out;
}

ApiError session_error(const survey::SessionError& e) {
    using survey::SessionErrorCode;
    const std::string code(survey::to_string(e.code()));
    switch (e.code()) {
        case SessionErrorCode::UnknownItem:
        case SessionErrorCode::SlotKindMismatch: return ApiError(400, code, e.what());
        case SessionErrorCode::NavigationBlocked: return ApiError(409, code, e.what(), {{"failing", failing_list(e.failing())}});
        case SessionErrorCode::SubmitBlocked: {
            std::vector<std::string> items;
            for (const auto& v : e.failing())
                if (std::find(items.begin(), items.end(), v.item_key) == items.end()) items.push_back(v.item_key);
            return ApiError(409, code, e.what(), {{"items", items}, {"failing", failing_list(e.failing())}});
        }
        case SessionErrorCode::AtBoundary:
        case SessionErrorCode::Closed: return ApiError(409, code, e.what());
    }
    return ApiError(500, "Internal", e.what());
}

expr::Value payload_value(const Json& j, const std::string& key) {
    if (j.is_boolean()) return expr::Value::boolean(j.get<bool>());
    if (j.is_number()) return expr::Value::number(j.get<double>());
    if (j.is_string()) return expr::Value::text(j.get<std::string>());
    if (j.is_object()) {
        try {
            return expr::decode_value(j);
        } catch (const std::exception& e) {
            throw ApiError(400, "BadRequest", "payload." + key + ": " + e.what());
        }
    }
    throw ApiError(400, "BadRequest", "payload." + key + " must be a scalar or tagged value");
}

Json parse_document(const std::string& body) {
    auto doc = Json::parse(body, nullptr, false);
    if (doc.is_discarded())
        throw ApiError(422, "ValidationFailed", "document is not valid JSON",
                       {{"issues", Json::array({Json{{"code", "MalformedDocument"}, {"where", ""}, {"detail", "not JSON"}}})}});
    return doc;
}

ApiError validation_failed(const std::string& code, const std::string& where, const std::string& detail) {
    return ApiError(422, "ValidationFailed", code + " at " + (where.empty() ? "document" : where),
                    {{"issues", Json::array({Json{{"code", code}, {"where", where}, {"detail", detail}}})}});
}

const char* kDefaultTemplates[] = {
    R"({"format":"caselet-template/1","templateKey":"verification","messageType":"loginCode","defaultLocale":"en",
        "subject":{"en":"Confirm your email"},
        "body":{"en":"Your verification code is {{getEventPayload(\"code\")}}."}})",
    R"({"format":"caselet-template/1","templateKey":"login-code","messageType":"loginCode","defaultLocale":"en",
        "subject":{"en":"Your login code"},
        "body":{"en":"Your login code is {{getEventPayload(\"code\")}}."}})",
};

}  // namespace

// ---------------------------------------------------------------------------
// Routing

const std::vector<Service::Route>& Service::route_table() {
    using P = Permission;
    static const std::vector<Route> table = {
        {{"GET", "/healthz", Access::Public, {}, false}, &Service::healthz},
        {{"POST", "/v1/auth/signup", Access::Public, {}, false}, &Service::signup},
        {{"POST", "/v1/auth/login", Access::Public, {}, false}, &Service::login},
        {{"POST", "/v1/auth/otp/verify", Access::Participant, {}, false}, &Service::otp_verify},
        {{"POST", "/v1/auth/otp/enable", Access::Participant, {}, false}, &Service::otp_enable},
        {{"GET", "/v1/account", Access::Participant, {}, false}, &Service::get_account},
        {{"POST", "/v1/account/profiles", Access::Participant, {}, false}, &Service::add_profile},
        {{"GET", "/v1/studies", Access::Participant, {}, false}, &Service::list_studies},
        {{"POST", "/v1/studies/{study}/enter", Access::Participant, {}, false}, &Service::enter_study},
        {{"GET", "/v1/studies/{study}/assignments", Access::Participant, {}, false}, &Service::assignments},
        {{"POST", "/v1/studies/{study}/surveys/{survey}/sessions", Access::Participant, {}, false},
         &Service::open_session},
        {{"POST", "/v1/sessions/{id}/answers", Access::Participant, {}, false}, &Service::answer},
        {{"POST", "/v1/sessions/{id}/move", Access::Participant, {}, false}, &Service::move},
        {{"POST", "/v1/sessions/{id}/submit", Access::Participant, {}, false}, &Service::submit},
        {{"PUT", "/m/v1/studies/{study}/surveys/{survey}", Access::Management, P::ManageConfig, true},
         &Service::upload_survey},
        {{"PUT", "/m/v1/studies/{study}/rules", Access::Management, P::ManageConfig, true}, &Service::upload_rules},
        {{"GET", "/m/v1/studies/{study}/responses", Access::Management, P::ReadResponses, true},
         &Service::export_responses},
        {{"GET", "/m/v1/studies/{study}/participants", Access::Management, P::ReadResponses, true},
         &Service::list_participants},
        {{"POST", "/m/v1/studies/{study}/events/custom", Access::Management, P::ManageConfig, true},
         &Service::custom_event},
        {{"POST", "/m/v1/jobs/{job}/run", Access::Management, P::Admin, false}, &Service::run_job},
        {{"PUT", "/m/v1/templates/{key}", Access::Management, P::ManageConfig, false}, &Service::put_template},
    };
    return table;
}

const std::vector<RouteSpec>& Service::routes() {
    static const std::vector<RouteSpec> specs = [] {
        std::vector<RouteSpec> out;
        for (const auto& r : route_table()) out.push_back(r.spec);
        return out;
    }();
    return specs;
}

Service::Service(store::Store& store, ServiceConfig config, Clock clock, Entropy& entropy,
                 messaging::MessageSink* sink)
    : store_(store),
      config_(std::move(config)),
      clock_(std::move(clock)),
      entropy_(entropy),
      sink_(sink),
      signer_(config_.token_secret) {
    if (config_.token_secret.empty()) throw std::invalid_argument("token secret must not be empty");
    // Compared against on unknown emails so both failure paths do the same work.
    dummy_hash_ = store::hash_password("caselet-dummy-password", config_.password);
}

Service::~Service() = default;

std::string Service::issue_management_token(const std::string& user, std::vector<Scope> scopes,
                                            std::int64_t ttl_seconds) const {
    return signer_.issue({TokenKind::Management, user, std::move(scopes), Timestamp{clock_().seconds + ttl_seconds}});
}

void Service::install_default_templates() {
    for (const char* doc : kDefaultTemplates) {
        auto t = messaging::load_template(Json::parse(doc));
        if (!store_.message_template(t.template_key)) store_.put_template(t);
    }
}

std::size_t Service::open_sessions() const {
    std::lock_guard lock(sessions_mu_);
    return sessions_.size();
}

Response Service::handle(const Request& req) {
    try {
        return dispatch(req);
    } catch (const ApiError& e) {
        return {e.status(), "application/json", e.body().dump()};
    } catch (const std::exception& e) {
        return {500, "application/json", ApiError(500, "Internal", e.what()).body().dump()};
    }
}

Response Service::dispatch(const Request& req) {
    const Route* found = nullptr;
    bool path_matched = false;
    std::map<std::string, std::string> params;
    for (const auto& r : route_table()) {
        std::map<std::string, std::string> p;
        if (!match_route(r.spec.pattern, req.path, p)) continue;
        path_matched = true;
        if (r.spec.method == req.method) {
            found = &r;
            params = std::move(p);
            break;
        }
    }
    if (!found) {
        if (path_matched) throw ApiError(405, "MethodNotAllowed", req.method + " " + req.path);
        throw ApiError(404, "NotFound", "no route for " + req.path);
    }
    Call call{req, clock_(), std::move(params), std::nullopt, 200, std::nullopt, std::nullopt};
    authorize(found->spec, call);
    Json result = (this->*found->handler)(call);
    if (call.raw) return *call.raw;
    return {call.status, "application/json", result.dump()};
}

void Service::authorize(const RouteSpec& spec, Call& call) {
    if (spec.access == Access::Public) return;
    const auto& header = call.req.authorization;
    static constexpr std::string_view prefix = "Bearer ";
    if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0)
        throw ApiError(401, "Unauthorized", "bearer token required");
    call.claims = signer_.verify(std::string_view(header).substr(prefix.size()), call.now);
    if (!call.claims) throw ApiError(401, "Unauthorized", "invalid or expired token");

    if (spec.access == Access::Participant) {
        if (call.claims->kind != TokenKind::Participant)
            throw ApiError(403, "Forbidden", "participant route needs a participant token");
        return;
    }
    if (call.claims->kind != TokenKind::Management)
        throw ApiError(403, "Forbidden", "management route needs a management token");
    const Scope required = spec.study_scoped ? Scope::study(call.param("study"), *spec.permission)
                                             : Scope::global(*spec.permission);
    if (!covers(call.claims->scopes, required))
        throw ApiError(403, "Forbidden", "token lacks scope " + format_scope(required));
}

// ---------------------------------------------------------------------------
// Helpers

void Service::count_auth_attempt(const std::string& key, Timestamp now) {
    std::lock_guard lock(auth_mu_);
    auto& log = auth_attempts_[key];
    while (!log.empty() && log.front().seconds <= now.seconds - config_.auth_window_seconds) log.pop_front();
    if (static_cast<int>(log.size()) >= config_.auth_max_attempts)
        throw ApiError(429, "RateLimited", "too many attempts; try again later");
    log.push_back(now);
}

std::string Service::participant_token(const std::string& account_id, Timestamp now) const {
    return signer_.issue(
        {TokenKind::Participant, account_id, {}, Timestamp{now.seconds + config_.participant_token_ttl_seconds}});
}

void Service::send_code(const store::Account& account, store::CodePurpose purpose, Timestamp now) {
    std::string code;
    {
        std::lock_guard lock(entropy_mu_);
        code = entropy_.digits(6);
    }
    store_.put_code(account.account_id, purpose, code, now, config_.code_ttl_seconds);
    messaging::ScheduledMessage m;
    m.participant_id = account.account_id;
    m.template_key =
        purpose == store::CodePurpose::Verify ? config_.verification_template : config_.login_code_template;
    m.due_at = now;
    m.payload["code"] = expr::Value::text(code);
    store_.queue().schedule(std::move(m));
}

store::Account Service::require_account(const Call& call) const {
    auto account = store_.account(call.claims->subject);
    if (!account) throw ApiError(401, "Unauthorized", "account no longer exists");
    return *account;
}

std::string Service::require_profile(const Call& call, const Json& body) const {
    auto account = require_account(call);
    auto profile_id = string_field(body, "profileId", false);
    if (profile_id.empty()) {
        if (account.profiles.empty()) throw ApiError(400, "BadRequest", "account has no profile");
        return account.profiles.front().profile_id;
    }
    for (const auto& p : account.profiles)
        if (p.profile_id == profile_id) return profile_id;
    throw ApiError(403, "Forbidden", "profile does not belong to this account");
}

study::StudyConfig Service::require_config(const std::string& study_key) const {
    auto config = store_.config(study_key);
    if (!config) throw ApiError(404, "UnknownStudy", "no study \"" + study_key + "\"");
    return *config;
}

std::shared_ptr<Service::SessionSlot> Service::require_session(const Call& call) {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(call.param("id"));
    // A foreign session looks exactly like a missing one.
    if (it == sessions_.end() || it->second->account_id != call.claims->subject)
        throw ApiError(404, "UnknownSession", "no such session");
    return it->second;
}

// ---------------------------------------------------------------------------
// Participant routes

Json Service::healthz(Call&) { return {{"status", "ok"}}; }

Json Service::signup(Call& call) {
    const auto& body = call.body();
    const auto email = store::normalize_email(string_field(body, "email"));
    const auto password = string_field(body, "password");
    if (!store::valid_email(email)) throw ApiError(400, "InvalidEmail", "email address is not valid");
    if (password.size() < config_.min_password_length)
        throw ApiError(400, "WeakPassword",
                       "password needs at least " + std::to_string(config_.min_password_length) + " characters");

    auto hash = store::hash_password(password, config_.password);
    call.status = 201;
    try {
        auto account = store_.create_account(email, std::move(hash), call.now);
        store_.add_profile(account.account_id, "default");
        send_code(account, store::CodePurpose::Verify, call.now);
        return {{"token", participant_token(account.account_id, call.now)}, {"verificationRequired", true}};
    } catch (const store::StoreError& e) {
        if (e.code() != store::StoreErrorCode::EmailTaken) throw;
    }
    // Same shape as success. The token names an account that does not exist,
    // so every call made with it fails authentication.
    std::string phantom;
    {
        std::lock_guard lock(entropy_mu_);
        phantom = "acc-x" + entropy_.digits(9);
    }
    return {{"token", participant_token(phantom, call.now)}, {"verificationRequired", true}};
}

Json Service::login(Call& call) {
    const auto& body = call.body();
    const auto email = store::normalize_email(string_field(body, "email"));
    const auto password = string_field(body, "password");
    const auto otp = string_field(body, "otp", false);
    count_auth_attempt(email, call.now);

    auto account = store_.account_by_email(email);
    const bool password_ok = store::verify_password(account ? account->password_hash : dummy_hash_, password);
    if (!account || !password_ok) throw ApiError(401, "InvalidCredentials", "email or password is wrong");

    if (account->otp_enabled) {
        if (otp.empty()) {
            send_code(*account, store::CodePurpose::Login, call.now);
            throw ApiError(401, "OtpRequired", "a one-time code was sent");
        }
        if (!store_.consume_code(account->account_id, store::CodePurpose::Login, otp, call.now))
            throw ApiError(401, "OtpInvalid", "one-time code is wrong, used or expired");
    }
    return {{"token", participant_token(account->account_id, call.now)},
            {"expiresAt", call.now.seconds + config_.participant_token_ttl_seconds}};
}

Json Service::otp_verify(Call& call) {
    auto account = require_account(call);
    const auto code = string_field(call.body(), "code");
    if (!store_.consume_code(account.account_id, store::CodePurpose::Verify, code, call.now))
        throw ApiError(400, "OtpInvalid", "verification code is wrong, used or expired");
    store_.set_verified(account.account_id, true);
    return {{"verified", true}};
}

Json Service::otp_enable(Call& call) {
    auto account = require_account(call);
    const auto& body = call.body();
    if (!body.contains("enabled") || !body["enabled"].is_boolean())
        throw ApiError(400, "BadRequest", "field \"enabled\" must be a boolean");
    store_.set_otp_enabled(account.account_id, body["enabled"].get<bool>());
    return {{"otpEnabled", body["enabled"].get<bool>()}};
}

Json Service::get_account(Call& call) {
    auto account = require_account(call);
    Json profiles = Json::array();
    for (const auto& p : account.profiles) profiles.push_back({{"profileId", p.profile_id}, {"alias", p.alias}});
    return {{"accountId", account.account_id},
            {"email", account.email},
            {"verified", account.verified},
            {"otpEnabled", account.otp_enabled},
            {"profiles", std::move(profiles)}};
}

Json Service::add_profile(Call& call) {
    auto account = require_account(call);
    auto alias = string_field(call.body(), "alias");
    auto profile = store_.add_profile(account.account_id, alias);
    call.status = 201;
    return {{"profileId", profile.profile_id}, {"alias", profile.alias}};
}

Json Service::list_studies(Call& call) {
    auto account = require_account(call);
    Json studies = Json::array();
    for (const auto& key : store_.study_keys()) {
        auto config = store_.config(key);
        if (!config) continue;
        Json profiles = Json::array();
        for (const auto& p : account.profiles) {
            auto state = store_.state(key, p.profile_id);
            Json entry = {{"profileId", p.profile_id}, {"entered", state.has_value()}};
            if (state) entry["status"] = study::to_string(state->status);
            profiles.push_back(std::move(entry));
        }
        studies.push_back(
            {{"studyKey", key}, {"consentVersion", config->consent_version}, {"profiles", std::move(profiles)}});
    }
    return {{"studies", std::move(studies)}};
}

Json Service::enter_study(Call& call) {
    const auto& body = call.body();
    auto config = require_config(call.param("study"));
    auto profile_id = require_profile(call, body);
    if (store_.state(config.study_key, profile_id))
        throw ApiError(409, "AlreadyEntered", "profile already entered this study");
    if (string_field(body, "consentVersion", false) != config.consent_version)
        throw ApiError(400, "ConsentMissing", "consent to version " + config.consent_version + " is required");

    store_.put_consent({profile_id, config.study_key, call.now, config.consent_version});
    jobs::EventOutcome outcome;
    try {
        jobs::ApplyOptions options;
        options.max_attempts = config_.submit_attempts;
        options.external_context = config_.jobs.external_context;
        outcome = jobs::apply_event(store_, config, profile_id, study::StudyEvent::enter(call.now), options);
    } catch (const jobs::AlreadyEntered&) {
        throw ApiError(409, "AlreadyEntered", "profile already entered this study");
    } catch (const jobs::CommitConflict& e) {
        throw ApiError(503, "Busy", e.what());
    }
    call.status = 201;
    return {{"studyKey", config.study_key},
            {"profileId", profile_id},
            {"status", study::to_string(outcome.state.status)},
            {"enteredAt", outcome.state.entered_at.seconds},
            {"assignments", assignment_list(outcome.state, call.now)}};
}

Json Service::assignments(Call& call) {
    auto config = require_config(call.param("study"));
    Json body = Json::object();
    if (auto p = call.query("profileId")) body["profileId"] = *p;
    auto profile_id = require_profile(call, body);
    auto state = store_.state(config.study_key, profile_id);
    if (!state) throw ApiError(409, "NotEntered", "profile has not entered this study");
    return {{"studyKey", config.study_key}, {"profileId", profile_id}, {"assignments", assignment_list(*state, call.now)}};
}

Json Service::open_session(Call& call) {
    const auto& body = call.body();
    auto config = require_config(call.param("study"));
    auto profile_id = require_profile(call, body);
    const auto& survey_key = call.param("survey");
    auto state = store_.state(config.study_key, profile_id);
    if (!state) throw ApiError(409, "NotEntered", "profile has not entered this study");
    auto active = study::active_assignments(*state, call.now);
    if (std::none_of(active.begin(), active.end(), [&](const auto& a) { return a.survey_key == survey_key; }))
        throw ApiError(409, "NotAssigned", "survey \"" + survey_key + "\" is not assigned right now");
    auto def = store_.survey(config.study_key, survey_key);
    if (!def) throw ApiError(404, "UnknownSurvey", "survey \"" + survey_key + "\" has not been uploaded");

    expr::EvalContext ctx;
    ctx.participant_state = *state;
    ctx.previous_responses = store_.latest_responses(config.study_key, profile_id);
    ctx.external_context = config_.jobs.external_context;
    ctx.now = call.now;

    std::uint64_t seed;
    std::string id;
    {
        std::lock_guard lock(entropy_mu_);
        seed = entropy_.next();
        id = "ses-" + entropy_.hex(16);
    }
    auto [session, snapshot] = survey::SurveySession::start(def, std::move(ctx), seed, call.now);
    auto slot = std::make_shared<SessionSlot>(std::move(session));
    slot->account_id = call.claims->subject;
    slot->profile_id = profile_id;
    slot->study_key = config.study_key;
    slot->last_activity = call.now;
    if (auto l = string_field(body, "locale", false); !l.empty())
        slot->locale = l;
    else if (auto q = call.query("locale"))
        slot->locale = *q;
    {
        std::lock_guard lock(sessions_mu_);
        std::erase_if(sessions_, [&](const auto& kv) {
            return kv.second->last_activity.seconds + config_.session_ttl_seconds < call.now.seconds;
        });
        sessions_[id] = slot;
    }
    call.status = 201;
    return {{"sessionId", id}, {"snapshot", survey::encode_snapshot(snapshot, slot->locale)}};
}

void Service::expire_if_idle(const SessionSlot& slot, const Call& call) {
    if (slot.last_activity.seconds + config_.session_ttl_seconds >= call.now.seconds) return;
    std::lock_guard lock(sessions_mu_);
    sessions_.erase(call.param("id"));
    throw ApiError(410, "SessionExpired", "session expired after inactivity");
}

Json Service::answer(Call& call) {
    const auto& body = call.body();
    auto item = string_field(body, "itemKey");
    auto slot_key = string_field(body, "slotKey");
    if (!body.contains("value")) throw ApiError(400, "BadRequest", "missing field \"value\"");
    survey::SlotValue value;
    try {
        value = body["value"].is_null() ? survey::SlotValue{expr::Value::undefined()}
                                        : survey::decode_slot_value(body["value"]);
    } catch (const std::exception& e) {
        throw ApiError(400, "BadRequest", std::string("value: ") + e.what());
    }
    auto slot = require_session(call);
    std::lock_guard lock(slot->mu);
    expire_if_idle(*slot, call);
    slot->session.set_now(call.now);
    try {
        auto snap = slot->session.apply_answer(item, slot_key, std::move(value));
        slot->last_activity = call.now;
        return {{"sessionId", call.param("id")}, {"snapshot", survey::encode_snapshot(snap, slot->locale)}};
    } catch (const survey::SessionError& e) {
        throw session_error(e);
    }
}

Json Service::move(Call& call) {
    auto direction = string_field(call.body(), "direction");
    if (direction != "next" && direction != "prev")
        throw ApiError(400, "BadRequest", "direction must be \"next\" or \"prev\"");
    auto slot = require_session(call);
    std::lock_guard lock(slot->mu);
    expire_if_idle(*slot, call);
    slot->session.set_now(call.now);
    try {
        auto snap = slot->session.navigate(direction == "next" ? survey::Direction::Next : survey::Direction::Prev);
        slot->last_activity = call.now;
        return {{"sessionId", call.param("id")}, {"snapshot", survey::encode_snapshot(snap, slot->locale)}};
    } catch (const survey::SessionError& e) {
        throw session_error(e);
    }
}

Json Service::submit(Call& call) {
    auto slot = require_session(call);
    std::lock_guard lock(slot->mu);
    expire_if_idle(*slot, call);
    auto config = require_config(slot->study_key);
    slot->session.set_now(call.now);
    // finalize closes the session; keep a copy to reopen it if the commit fails.
    const auto before = slot->session;
    survey::SurveyResponse response;
    try {
        response = slot->session.finalize(call.now);
    } catch (const survey::SessionError& e) {
        throw session_error(e);
    }
    response.participant_ref = slot->profile_id;

    jobs::EventOutcome outcome;
    try {
        jobs::ApplyOptions options;
        options.max_attempts = config_.submit_attempts;
        options.external_context = config_.jobs.external_context;
        outcome = jobs::apply_event(store_, config, slot->profile_id, study::StudyEvent::submit(response, call.now),
                                    options);
    } catch (const jobs::CommitConflict& e) {
        slot->session = before;
        throw ApiError(503, "Busy", e.what());
    } catch (...) {
        slot->session = before;
        throw;
    }
    {
        std::lock_guard sl(sessions_mu_);
        sessions_.erase(call.param("id"));
    }
    return {{"surveyKey", response.survey_key},
            {"versionId", response.version_id},
            {"submittedAt", response.submitted_at.seconds},
            {"assignments", assignment_list(outcome.state, call.now)}};
}

// ---------------------------------------------------------------------------
// Management routes

Json Service::upload_survey(Call& call) {
    auto config = require_config(call.param("study"));
    const auto& survey_key = call.param("survey");
    auto doc = parse_document(call.req.body);
    survey::SurveyDefinition def;
    try {
        def = survey::load_survey(doc);
    } catch (const survey::SurveyLoadError& e) {
        throw validation_failed(std::string(survey::to_string(e.code())), e.where(), e.detail());
    }
    if (def.survey_key != survey_key)
        throw validation_failed("KeyMismatch", "surveyKey", "document declares \"" + def.survey_key + "\"");
    if (!config.survey_keys.count(survey_key))
        throw validation_failed("UnknownSurvey", "surveyKey", "study rules do not declare \"" + survey_key + "\"");
    Json lint = Json::array();
    for (const auto& issue : survey::lint_survey(def))
        lint.push_back({{"kind", survey::to_string(issue.kind)}, {"subject", issue.subject}, {"detail", issue.detail}});
    try {
        store_.put_survey(config.study_key, def);
    } catch (const store::StoreError& e) {
        if (e.code() == store::StoreErrorCode::DuplicateVersion) throw ApiError(409, "DuplicateVersion", e.what());
        throw;
    }
    call.status = 201;
    return {{"surveyKey", def.survey_key}, {"versionId", def.version_id}, {"lint", std::move(lint)}};
}

Json Service::upload_rules(Call& call) {
    const auto& study_key = call.param("study");
    auto doc = parse_document(call.req.body);
    study::StudyConfig config;
    try {
        config = study::load_rules(doc);
    } catch (const study::RulesLoadError& e) {
        throw validation_failed(std::string(study::to_string(e.code())), e.where(), e.what());
    }
    if (config.study_key != study_key)
        throw validation_failed("KeyMismatch", "studyKey", "document declares \"" + config.study_key + "\"");
    auto version = store_.put_config(config);
    return {{"studyKey", study_key}, {"configVersion", version}, {"rules", config.rules.size()}};
}

Json Service::export_responses(Call& call) {
    auto config = require_config(call.param("study"));
    auto format = store::parse_export_format(call.query("format").value_or("ndjson"));
    if (!format) throw ApiError(400, "BadRequest", "format must be ndjson or csv");
    auto bound = [&](const char* name, std::int64_t fallback) {
        auto v = call.query(name);
        if (!v) return Timestamp{fallback};
        try {
            std::size_t used = 0;
            auto n = std::stoll(*v, &used);
            if (used != v->size()) throw std::invalid_argument(*v);
            return Timestamp{n};
        } catch (const std::exception&) {
            throw ApiError(400, "BadRequest", std::string(name) + " must be epoch seconds");
        }
    };
    auto from = bound("from", std::numeric_limits<std::int64_t>::min());
    auto to = bound("to", std::numeric_limits<std::int64_t>::max());
    call.raw = Response{200, *format == store::ExportFormat::Csv ? "text/csv" : "application/x-ndjson",
                        store_.export_responses(config.study_key, from, to, *format)};
    return nullptr;
}

Json Service::list_participants(Call& call) {
    auto config = require_config(call.param("study"));
    Json out = Json::array();
    for (const auto& s : store_.states(config.study_key)) out.push_back(study::encode_state(s));
    return {{"studyKey", config.study_key}, {"participants", std::move(out)}};
}

Json Service::custom_event(Call& call) {
    auto config = require_config(call.param("study"));
    const auto& body = call.body();
    auto event_key = string_field(body, "eventKey");
    std::map<std::string, expr::Value> payload;
    if (body.contains("payload")) {
        if (!body["payload"].is_object()) throw ApiError(400, "BadRequest", "payload must be an object");
        for (auto it = body["payload"].begin(); it != body["payload"].end(); ++it)
            payload[it.key()] = payload_value(it.value(), it.key());
    }
    std::vector<std::string> targets;
    if (body.contains("participants")) {
        if (!body["participants"].is_array()) throw ApiError(400, "BadRequest", "participants must be an array");
        for (const auto& p : body["participants"]) {
            if (!p.is_string()) throw ApiError(400, "BadRequest", "participant ids must be strings");
            targets.push_back(p.get<std::string>());
        }
    } else {
        for (const auto& s : store_.states(config.study_key))
            if (s.status == study::StudyStatus::Active) targets.push_back(s.participant_id);
    }

    const auto event = study::StudyEvent::custom(event_key, payload, call.now);
    Json processed = Json::array();
    Json errors = Json::array();
    jobs::ApplyOptions options;
    options.max_attempts = config_.submit_attempts;
    options.external_context = config_.jobs.external_context;
    for (const auto& pid : targets) {
        try {
            jobs::apply_event(store_, config, pid, event, options);
            processed.push_back(pid);
        } catch (const std::exception& e) {
            errors.push_back({{"participantId", pid}, {"detail", e.what()}});
        }
    }
    return {{"eventKey", event_key}, {"processed", std::move(processed)}, {"errors", std::move(errors)}};
}

Json Service::run_job(Call& call) {
    auto kind = jobs::parse_job_kind(call.param("job"));
    if (!kind) throw ApiError(404, "UnknownJob", "jobs are timer, messages and cleanup");
    if (*kind == jobs::JobKind::Messages && sink_ == nullptr)
        throw ApiError(503, "SinkUnavailable", "no message sink configured");
    struct NullSink : messaging::MessageSink {
        bool available() override { return false; }
        bool deliver(const messaging::OutboxRecord&) override { return false; }
    } null_sink;
    auto report = jobs::run_job(*kind, store_, call.now, sink_ ? *sink_ : null_sink, config_.jobs);
    if (report.skipped) throw ApiError(409, "LeaseHeld", "job is already running", {{"report", report.to_json()}});
    return report.to_json();
}

Json Service::put_template(Call& call) {
    const auto& key = call.param("key");
    auto doc = parse_document(call.req.body);
    messaging::MessageTemplate t;
    try {
        t = messaging::load_template(doc);
    } catch (const messaging::TemplateError& e) {
        throw validation_failed(std::string(messaging::to_string(e.code())), "", e.what());
    }
    if (t.template_key != key)
        throw validation_failed("KeyMismatch", "templateKey", "document declares \"" + t.template_key + "\"");
    store_.put_template(t);
    return {{"templateKey", key}};
}

}  // namespace caselet::api
