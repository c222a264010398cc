#include "caselet/sim/simulate.hpp"

#include <fstream>
#include <set>

#include "caselet/api/service.hpp"
#include "caselet/expr/codec.hpp"
#include "caselet/study/engine.hpp"

namespace caselet::sim {

namespace {

using expr::Timestamp;

[[noreturn]] void invalid(const std::string& what) { throw ScenarioInvalid(what); }

const Json& require(const Json& doc, const char* key, const std::string& where) {
    if (!doc.is_object() || !doc.contains(key)) invalid(where + ": missing \"" + key + "\"");
    return doc[key];
}

std::int64_t integer(const Json& doc, const char* key, const std::string& where) {
    const auto& v = require(doc, key, where);
    if (!v.is_number_integer()) invalid(where + "." + key + ": expected an integer");
    return v.get<std::int64_t>();
}

std::string text(const Json& doc, const char* key, const std::string& where) {
    const auto& v = require(doc, key, where);
    if (!v.is_string() || v.get<std::string>().empty()) invalid(where + "." + key + ": expected a non-empty string");
    return v.get<std::string>();
}

class RecordingSink : public messaging::MessageSink {
public:
    bool available() override { return true; }
    bool deliver(const messaging::OutboxRecord& r) override {
        records.push_back(r);
        return true;
    }
    std::vector<messaging::OutboxRecord> records;
};

std::string ndjson(const std::vector<Json>& lines) {
    std::string out;
    for (const auto& l : lines) out += l.dump() + "\n";
    return out;
}

Json active_json(const std::vector<study::AssignedSurvey>& active) {
    Json out = Json::array();
    for (const auto& a : active) out.push_back(study::encode_assignment(a));
    return out;
}

api::Response call(api::Service& service, const std::string& method, const std::string& path, const Json& body,
                   const std::string& token) {
    api::Request req;
    req.method = method;
    req.path = path;
    req.body = body.dump();
    if (!token.empty()) req.authorization = "Bearer " + token;
    return service.handle(req);
}

std::string error_code(const api::Response& r) {
    auto doc = Json::parse(r.body, nullptr, false);
    if (doc.is_object() && doc.contains("error")) return doc["error"].get<std::string>();
    return "status " + std::to_string(r.status);
}

bool ok(const api::Response& r) { return r.status >= 200 && r.status < 300; }

}  // namespace

Scenario load_scenario(const Json& doc) {
    if (!doc.is_object()) invalid("scenario must be an object");
    if (!doc.contains("format") || doc["format"] != kScenarioFormat)
        invalid(std::string("format must be \"") + kScenarioFormat + "\"");
    Scenario s;
    const auto seed = require(doc, "seed", "scenario");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
        invalid("scenario.seed: expected a non-negative integer");
    s.seed = seed.get<std::uint64_t>();
    s.start = Timestamp{integer(doc, "start", "scenario")};
    s.end = Timestamp{integer(doc, "end", "scenario")};
    if (s.end < s.start) invalid("scenario.end precedes start");
    if (doc.contains("clockStepSeconds")) s.clock_step_seconds = integer(doc, "clockStepSeconds", "scenario");
    if (s.clock_step_seconds <= 0) invalid("scenario.clockStepSeconds must be positive");
    s.rules = require(doc, "rules", "scenario");
    for (const char* key : {"surveys", "templates"}) {
        if (!doc.contains(key)) continue;
        if (!doc[key].is_array()) invalid(std::string("scenario.") + key + ": expected an array");
        auto& out = std::string(key) == "surveys" ? s.surveys : s.templates;
        for (const auto& d : doc[key]) out.push_back(d);
    }
    if (doc.contains("rateLimit")) {
        const auto& rl = doc["rateLimit"];
        auto field = [&](const char* key, int& target) {
            if (rl.contains(key)) target = static_cast<int>(integer(rl, key, "scenario.rateLimit"));
        };
        field("maxPerWindow", s.rate_limit.max_per_window);
        field("windowSeconds", s.rate_limit.window_seconds);
        field("batchSize", s.rate_limit.batch_size);
        field("maxAttempts", s.rate_limit.max_attempts);
        field("backoffBaseSeconds", s.rate_limit.backoff_base_seconds);
        try {
            s.rate_limit.validate();
        } catch (const std::invalid_argument& e) {
            invalid(std::string("scenario.rateLimit: ") + e.what());
        }
    }
    if (doc.contains("externalContext")) {
        if (!doc["externalContext"].is_object()) invalid("scenario.externalContext: expected an object");
        s.external_context = doc["externalContext"];
    }

    std::set<std::string> names;
    const auto& participants = require(doc, "participants", "scenario");
    if (!participants.is_array()) invalid("scenario.participants: expected an array");
    for (std::size_t i = 0; i < participants.size(); ++i) {
        const auto where = "scenario.participants[" + std::to_string(i) + "]";
        ScenarioParticipant p{text(participants[i], "profile", where), text(participants[i], "email", where),
                              Timestamp{integer(participants[i], "enterAt", where)}};
        if (!names.insert(p.profile).second) invalid(where + ": duplicate profile \"" + p.profile + "\"");
        if (p.enter_at < s.start || s.end < p.enter_at) invalid(where + ".enterAt is outside [start, end]");
        s.participants.push_back(std::move(p));
    }

    const auto& timeline = require(doc, "timeline", "scenario");
    if (!timeline.is_array()) invalid("scenario.timeline: expected an array");
    for (std::size_t i = 0; i < timeline.size(); ++i) {
        const auto where = "scenario.timeline[" + std::to_string(i) + "]";
        const auto& e = timeline[i];
        TimelineAction a;
        a.at = Timestamp{integer(e, "at", where)};
        if (a.at < s.start || s.end < a.at) invalid(where + ".at is outside [start, end]");
        if (!s.timeline.empty() && a.at < s.timeline.back().at) invalid(where + ": timeline is not sorted by time");
        const auto action = text(e, "action", where);
        if (action == "submit") {
            a.kind = ActionKind::Submit;
            a.participant = text(e, "participant", where);
            if (!names.count(a.participant)) invalid(where + ": unknown participant \"" + a.participant + "\"");
            a.survey_key = text(e, "surveyKey", where);
            if (e.contains("answers")) {
                if (!e["answers"].is_object()) invalid(where + ".answers: expected an object");
                for (auto it = e["answers"].begin(); it != e["answers"].end(); ++it) {
                    if (it.key().find('.') == std::string::npos)
                        invalid(where + ".answers: key \"" + it.key() + "\" is not item.slot");
                    a.answers.emplace_back(it.key(), it.value());
                }
            }
        } else if (action == "custom") {
            a.kind = ActionKind::Custom;
            a.event_key = text(e, "eventKey", where);
            if (e.contains("payload")) a.payload = e["payload"];
            if (e.contains("participants")) {
                for (const auto& p : e["participants"]) {
                    if (!p.is_string() || !names.count(p.get<std::string>()))
                        invalid(where + ".participants: unknown participant");
                    a.participants.push_back(p.get<std::string>());
                }
            }
        } else if (action == "advance") {
            a.kind = ActionKind::Advance;
        } else {
            invalid(where + ".action: unknown action \"" + action + "\"");
        }
        s.timeline.push_back(std::move(a));
    }
    return s;
}

SimulationReport simulate(const Scenario& scenario) {
    store::Store store;
    Timestamp now = scenario.start;
    api::SeededEntropy entropy(scenario.seed);
    RecordingSink sink;

    api::ServiceConfig config;
    config.token_secret = "caselet-simulation";
    config.password = store::PasswordParams::minimum();
    config.jobs.rate_limit = scenario.rate_limit;
    config.jobs.holder = "simulator";
    for (auto it = scenario.external_context.begin(); it != scenario.external_context.end(); ++it) {
        const auto& v = it.value();
        if (v.is_boolean())
            config.jobs.external_context[it.key()] = expr::Value::boolean(v.get<bool>());
        else if (v.is_number())
            config.jobs.external_context[it.key()] = expr::Value::number(v.get<double>());
        else if (v.is_string())
            config.jobs.external_context[it.key()] = expr::Value::text(v.get<std::string>());
        else
            config.jobs.external_context[it.key()] = expr::decode_value(v);
    }
    // Login codes are not part of the scenario, so throttling would only
    // get in the way of large participant counts sharing an instant.
    config.auth_max_attempts = 1 << 20;

    api::Service service(store, config, [&now] { return now; }, entropy, &sink);
    service.install_default_templates();
    auto driver_call = [&service](const std::string& method, const std::string& path, const Json& body,
                                  const std::string& token) { return call(service, method, path, body, token); };
    const auto admin = service.issue_management_token(
        "simulator",
        {api::Scope::global(api::Permission::ManageConfig), api::Scope::global(api::Permission::ReadResponses),
         api::Scope::global(api::Permission::Admin)},
        (scenario.end.seconds - scenario.start.seconds) + 86400);

    if (!scenario.rules.is_object() || !scenario.rules.contains("studyKey") || !scenario.rules["studyKey"].is_string())
        invalid("scenario.rules: missing studyKey");
    const auto rules = scenario.rules["studyKey"].get<std::string>();
    auto upload = [&](const std::string& path, const Json& doc) {
        auto r = driver_call("PUT", path, doc, admin);
        if (!ok(r)) invalid(path + ": " + r.body);
    };
    upload("/m/v1/studies/" + rules + "/rules", scenario.rules);
    for (const auto& t : scenario.templates) {
        if (!t.is_object() || !t.contains("templateKey") || !t["templateKey"].is_string())
            invalid("scenario.templates: template without templateKey");
        upload("/m/v1/templates/" + t["templateKey"].get<std::string>(), t);
    }
    for (const auto& s : scenario.surveys) {
        if (!s.is_object() || !s.contains("surveyKey") || !s["surveyKey"].is_string())
            invalid("scenario.surveys: survey without surveyKey");
        upload("/m/v1/studies/" + rules + "/surveys/" + s["surveyKey"].get<std::string>(), s);
    }
    const auto consent = store.config(rules)->consent_version;

    // Every instant at which something happens.
    std::set<std::int64_t> sweeps;
    for (auto t = scenario.start.seconds; t <= scenario.end.seconds; t += scenario.clock_step_seconds)
        sweeps.insert(t);
    std::set<std::int64_t> instants = sweeps;
    for (const auto& p : scenario.participants) instants.insert(p.enter_at.seconds);
    for (const auto& a : scenario.timeline) instants.insert(a.at.seconds);

    SimulationReport report;
    struct Session {
        std::string email;
        std::string password;
        std::string token;
        Timestamp expires_at;
    };
    std::map<std::string, Session> tokens;  // scenario name -> participant login
    std::size_t next_action = 0;

    auto record = [&](const std::string& who, std::string action, const api::Response& r) {
        report.actions.push_back({now, who, std::move(action), r.status, ok(r) ? std::string() : error_code(r)});
        return ok(r);
    };

    auto enrol = [&](const ScenarioParticipant& p) {
        const auto password = "simulated-password-" + p.profile;
        auto r = driver_call("POST", "/v1/auth/signup", {{"email", p.email}, {"password", password}}, "");
        if (!record(p.profile, "signup", r)) return;
        const auto token = r.json()["token"].get<std::string>();
        auto account = store.account_by_email(p.email);
        if (!account) return;
        for (const auto& c : store.codes_for(account->account_id)) {
            if (c.purpose != store::CodePurpose::Verify || c.used) continue;
            record(p.profile, "verify", driver_call("POST", "/v1/auth/otp/verify", {{"code", c.code}}, token));
        }
        const auto profile = store.account(account->account_id)->profiles.front().profile_id;
        report.profile_ids[p.profile] = profile;
        tokens[p.profile] = {p.email, password, token, Timestamp{now.seconds + config.participant_token_ttl_seconds}};
        record(p.profile, "enter",
               driver_call("POST", "/v1/studies/" + rules + "/enter", {{"profileId", profile}, {"consentVersion", consent}},
                           token));
    };

    // Logs in again once the participant token has expired.
    auto token_for = [&](const std::string& name) -> std::optional<std::string> {
        auto it = tokens.find(name);
        if (it == tokens.end()) return std::nullopt;
        auto& login = it->second;
        if (now < login.expires_at) return login.token;
        auto r = driver_call("POST", "/v1/auth/login", {{"email", login.email}, {"password", login.password}}, "");
        if (!record(name, "login", r)) return std::nullopt;
        login.token = r.json()["token"].get<std::string>();
        login.expires_at = Timestamp{r.json()["expiresAt"].get<std::int64_t>()};
        return login.token;
    };

    auto submit = [&](const TimelineAction& a) {
        const std::string label = "submit:" + a.survey_key;
        auto token = token_for(a.participant);
        if (!token) {
            report.actions.push_back({now, a.participant, label, 0, "NotEnrolled"});
            return;
        }
        const auto profile = report.profile_ids[a.participant];
        auto r = driver_call("POST", "/v1/studies/" + rules + "/surveys/" + a.survey_key + "/sessions",
                             {{"profileId", profile}}, *token);
        if (!record(a.participant, label + ":open", r)) return;
        auto opened = r.json();
        const auto session = "/v1/sessions/" + opened["sessionId"].get<std::string>();
        for (const auto& [key, value] : a.answers) {
            auto dot = key.find('.');
            r = driver_call("POST", session + "/answers",
                            {{"itemKey", key.substr(0, dot)}, {"slotKey", key.substr(dot + 1)}, {"value", value}},
                            *token);
            if (!record(a.participant, label + ":answer:" + key, r)) return;
        }
        auto snapshot = r.json()["snapshot"];
        while (snapshot["pageIndex"].get<std::size_t>() + 1 < snapshot["pageCount"].get<std::size_t>()) {
            r = driver_call("POST", session + "/move", {{"direction", "next"}}, *token);
            if (!record(a.participant, label + ":next", r)) return;
            snapshot = r.json()["snapshot"];
        }
        record(a.participant, label, driver_call("POST", session + "/submit", Json::object(), *token));
    };

    auto custom = [&](const TimelineAction& a) {
        Json body = {{"eventKey", a.event_key}, {"payload", a.payload}};
        if (!a.participants.empty()) {
            Json ids = Json::array();
            for (const auto& p : a.participants) {
                auto it = report.profile_ids.find(p);
                if (it != report.profile_ids.end()) ids.push_back(it->second);
            }
            body["participants"] = std::move(ids);
        }
        record("*", "custom:" + a.event_key, driver_call("POST", "/m/v1/studies/" + rules + "/events/custom", body, admin));
    };

    for (auto instant : instants) {
        now = Timestamp{instant};
        for (const auto& p : scenario.participants)
            if (p.enter_at == now) enrol(p);
        while (next_action < scenario.timeline.size() && scenario.timeline[next_action].at == now) {
            const auto& a = scenario.timeline[next_action++];
            if (a.kind == ActionKind::Submit) submit(a);
            if (a.kind == ActionKind::Custom) custom(a);
        }
        if (!sweeps.count(instant)) continue;

        report.sweeps.push_back(now);
        for (const char* job : {"timer", "messages"}) {
            auto r = driver_call("POST", std::string("/m/v1/jobs/") + job + "/run", Json::object(), admin);
            auto doc = r.json();
            if (ok(r)) {
                doc.erase("durationMs");
                doc["at"] = now.seconds;
            } else {
                doc = {{"job", job}, {"at", now.seconds}, {"error", error_code(r)}};
            }
            report.job_reports.push_back(std::move(doc));
        }
        for (const auto& p : scenario.participants) {
            auto id = report.profile_ids.find(p.profile);
            if (id == report.profile_ids.end()) continue;
            auto state = store.state(rules, id->second);
            if (!state) continue;
            report.samples.push_back({now, p.profile, *state, study::active_assignments(*state, now)});
        }
    }

    report.outbox = sink.records;
    report.messages = store.messages();
    report.audit = store.audit_log();
    report.export_csv = store.export_responses(rules, scenario.start, scenario.end, store::ExportFormat::Csv);
    return report;
}

std::map<std::string, std::string> SimulationReport::files() const {
    std::vector<Json> states, assignments, effects, outbox_lines, messages_lines, actions_lines;
    for (const auto& s : samples) {
        states.push_back({{"at", s.at.seconds}, {"participant", s.participant}, {"state", study::encode_state(s.state)}});
        assignments.push_back({{"at", s.at.seconds}, {"participant", s.participant}, {"active", active_json(s.active)}});
    }
    for (const auto& a : audit)
        effects.push_back({{"at", a.at.seconds}, {"participantId", a.participant_id}, {"what", a.what}, {"detail", a.detail}});
    for (const auto& r : outbox) outbox_lines.push_back(messaging::encode_outbox(r));
    for (const auto& m : messages) messages_lines.push_back(messaging::encode_message(m));
    for (const auto& a : actions) {
        Json line = {{"at", a.at.seconds}, {"participant", a.participant}, {"action", a.action}, {"status", a.status}};
        if (!a.error.empty()) line["error"] = a.error;
        actions_lines.push_back(std::move(line));
    }
    Json ids = Json::object();
    for (const auto& [name, id] : profile_ids) ids[name] = id;
    Json summary = {{"participants", ids},
                    {"sweeps", sweeps.size()},
                    {"actions", actions.size()},
                    {"failedActions", std::count_if(actions.begin(), actions.end(),
                                                    [](const auto& a) { return !a.error.empty(); })},
                    {"messages", messages.size()},
                    {"outbox", outbox.size()}};
    return {{"states.ndjson", ndjson(states)},
            {"assignments.ndjson", ndjson(assignments)},
            {"effects.ndjson", ndjson(effects)},
            {"outbox.ndjson", ndjson(outbox_lines)},
            {"messages.ndjson", ndjson(messages_lines)},
            {"actions.ndjson", ndjson(actions_lines)},
            {"jobs.ndjson", ndjson(job_reports)},
            {"export.csv", export_csv},
            {"summary.json", summary.dump(2) + "\n"}};
}

void SimulationReport::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : files()) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    }
}

}  // namespace caselet::sim
