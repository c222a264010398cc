// Operator CLI: server, scheduled jobs, simulator and document tools.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "caselet/api/http.hpp"
#include "caselet/api/service.hpp"
#include "caselet/expr/codec.hpp"
#include "caselet/expr/evaluator.hpp"
#include "caselet/expr/text.hpp"
#include "caselet/jobs/jobs.hpp"
#include "caselet/messaging/template.hpp"
#include "caselet/sim/simulate.hpp"
#include "caselet/study/rules.hpp"
#include "caselet/survey/document.hpp"

using namespace caselet;

namespace {

// The only wall-clock read in the project; everything below takes a Timestamp.
expr::Timestamp wall_clock() {
    return expr::Timestamp{
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count()};
}

Json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    auto doc = Json::parse(buf.str(), nullptr, false);
    if (doc.is_discarded()) throw std::runtime_error(path + " is not valid JSON");
    return doc;
}

std::map<std::string, expr::Value> value_map(const Json& doc, const std::string& where) {
    std::map<std::string, expr::Value> out;
    if (!doc.is_object()) throw std::runtime_error(where + " must be an object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const auto& v = it.value();
        if (v.is_boolean())
            out[it.key()] = expr::Value::boolean(v.get<bool>());
        else if (v.is_number())
            out[it.key()] = expr::Value::number(v.get<double>());
        else if (v.is_string())
            out[it.key()] = expr::Value::text(v.get<std::string>());
        else
            out[it.key()] = expr::decode_value(v);
    }
    return out;
}

/// Context file: {"currentResponse", "previousResponses": {key: response},
/// "state", "payload", "external"}, every field optional.
expr::EvalContext load_context(const std::string& path) {
    expr::EvalContext ctx;
    if (path.empty()) return ctx;
    auto doc = read_json(path);
    if (doc.contains("currentResponse")) ctx.current_response = survey::decode_response(doc["currentResponse"]);
    if (doc.contains("previousResponses"))
        for (auto it = doc["previousResponses"].begin(); it != doc["previousResponses"].end(); ++it)
            ctx.previous_responses[it.key()] = survey::decode_response(it.value());
    if (doc.contains("state")) ctx.participant_state = study::decode_state(doc["state"]);
    if (doc.contains("payload")) ctx.event_payload = value_map(doc["payload"], "payload");
    if (doc.contains("external")) ctx.external_context = value_map(doc["external"], "external");
    return ctx;
}

int cmd_validate(const std::string& path) {
    auto doc = read_json(path);
    const auto format = doc.is_object() && doc.contains("format") && doc["format"].is_string()
                            ? doc["format"].get<std::string>()
                            : std::string();
    try {
        if (format == survey::kSurveyFormat) {
            auto def = survey::load_survey(doc);
            for (const auto& issue : survey::lint_survey(def))
                std::cerr << "warning: " << survey::to_string(issue.kind) << " " << issue.subject << ": " << issue.detail
                          << "\n";
            std::cout << "survey " << def.survey_key << " " << def.version_id << " ok\n";
        } else if (format == study::kRulesFormat) {
            auto config = study::load_rules(doc);
            std::cout << "rules " << config.study_key << " (" << config.rules.size() << " rules) ok\n";
        } else if (format == messaging::kTemplateFormat) {
            auto t = messaging::load_template(doc);
            std::cout << "template " << t.template_key << " ok\n";
        } else if (format == sim::kScenarioFormat) {
            auto s = sim::load_scenario(doc);
            std::cout << "scenario with " << s.participants.size() << " participants ok\n";
        } else {
            std::cerr << path << ": unknown document format \"" << format << "\"\n";
            return 2;
        }
    } catch (const survey::SurveyLoadError& e) {
        std::cerr << path << ": " << survey::to_string(e.code()) << " at " << e.where() << ": " << e.detail() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << path << ": " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int cmd_eval(const std::string& source, const std::string& context_path, std::int64_t now) {
    auto e = expr::parse_text(source);
    auto ctx = load_context(context_path);
    ctx.now = expr::Timestamp{now};
    auto result = expr::evaluate(e, ctx);
    std::cout << expr::display(result.value) << "\n";
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int cmd_run_job(const std::string& kind_name, const std::string& store_path, const std::string& outbox,
                std::optional<std::int64_t> now) {
    auto kind = jobs::parse_job_kind(kind_name);
    if (!kind) {
        std::cerr << "unknown job \"" << kind_name << "\"; expected timer, messages or cleanup\n";
        return 2;
    }
    auto store = store::Store::open_file(store_path);
    messaging::OutboxFileSink sink(outbox);
    auto settings = api::job_settings_from_env();
    settings.holder = "cli-" + store::random_hex(4);
    auto report = jobs::run_job(*kind, *store, now ? expr::Timestamp{*now} : wall_clock(), sink, settings);
    std::cout << report.to_json().dump() << "\n";
    if (report.skipped) {
        std::cerr << "job " << kind_name << " is already running\n";
        return 3;
    }
    for (const auto& e : report.errors) std::cerr << "error: " << e << "\n";
    return report.errors.empty() ? 0 : 1;
}

int cmd_simulate(const std::string& path, const std::string& out_dir) {
    auto scenario = sim::load_scenario(read_json(path));
    auto report = sim::simulate(scenario);
    report.write(out_dir);
    std::cout << "wrote " << report.files().size() << " files to " << out_dir << " (" << report.sweeps.size()
              << " sweeps, " << report.outbox.size() << " messages sent)\n";
    return 0;
}

int cmd_issue_token(const std::string& user, const std::vector<std::string>& scope_texts, std::int64_t ttl) {
    const char* secret = std::getenv("CASELET_TOKEN_SECRET");
    if (secret == nullptr || *secret == '\0') {
        std::cerr << "CASELET_TOKEN_SECRET is required\n";
        return 2;
    }
    std::vector<api::Scope> scopes;
    for (const auto& s : scope_texts) {
        auto scope = api::parse_scope(s);
        if (!scope) {
            std::cerr << "bad scope \"" << s << "\"; expected global:<permission> or study:<key>:<permission>\n";
            return 2;
        }
        scopes.push_back(*scope);
    }
    api::TokenSigner signer(secret);
    std::cout << signer.issue({api::TokenKind::Management, user, scopes, expr::Timestamp{wall_clock().seconds + ttl}})
              << "\n";
    return 0;
}

int cmd_serve() {
    auto settings = api::settings_from_env();
    auto store = store::Store::open_file(settings.store_path);
    messaging::OutboxFileSink sink(settings.outbox_path);
    api::SystemEntropy entropy;
    api::Service service(*store, settings.service, wall_clock, entropy, &sink);
    service.install_default_templates();
    std::cerr << "listening on " << settings.host << ":" << settings.port << "\n";
    api::serve(service, settings.host, settings.port);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"caselet study platform"};
    app.require_subcommand(1);

    auto* serve = app.add_subcommand("serve", "Run the HTTP API (configured through CASELET_* variables)");

    auto* run_job = app.add_subcommand("run-job", "Run one scheduled job: timer, messages or cleanup");
    std::string job_kind;
    std::string store_path = std::getenv("CASELET_STORE") ? std::getenv("CASELET_STORE") : "caselet.journal";
    std::string outbox = std::getenv("CASELET_OUTBOX") ? std::getenv("CASELET_OUTBOX") : "outbox.ndjson";
    std::optional<std::int64_t> job_now;
    run_job->add_option("kind", job_kind)->required();
    run_job->add_option("--store", store_path, "Journal file");
    run_job->add_option("--outbox", outbox, "Outbox file");
    run_job->add_option("--now", job_now, "Clock in epoch seconds (default: system time)");

    auto* simulate = app.add_subcommand("simulate", "Replay a scenario on a virtual clock");
    std::string scenario_path;
    std::string out_dir = "report";
    simulate->add_option("scenario", scenario_path)->required();
    simulate->add_option("--out", out_dir, "Report directory");

    auto* validate = app.add_subcommand("validate", "Check a survey, rules, template or scenario document");
    std::string doc_path;
    validate->add_option("file", doc_path)->required();

    auto* eval = app.add_subcommand("eval", "Evaluate an expression");
    std::string source;
    std::string context_path;
    std::int64_t eval_now = 0;
    eval->add_option("expression", source)->required();
    eval->add_option("--context", context_path, "Context JSON file");
    eval->add_option("--now", eval_now, "Clock in epoch seconds (default 0)");

    auto* issue = app.add_subcommand("issue-token", "Sign a management token with CASELET_TOKEN_SECRET");
    std::string user = "operator";
    std::vector<std::string> scopes;
    std::int64_t ttl = 3600;
    issue->add_option("--user", user, "Subject");
    issue->add_option("--scope", scopes, "global:<permission> or study:<key>:<permission>")->required();
    issue->add_option("--ttl", ttl, "Lifetime in seconds");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) return cmd_serve();
        if (*run_job) return cmd_run_job(job_kind, store_path, outbox, job_now);
        if (*simulate) return cmd_simulate(scenario_path, out_dir);
        if (*validate) return cmd_validate(doc_path);
        if (*eval) return cmd_eval(source, context_path, eval_now);
        if (*issue) return cmd_issue_token(user, scopes, ttl);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
