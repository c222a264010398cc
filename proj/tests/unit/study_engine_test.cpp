#include <doctest.h>

#include "caselet/expr/codec.hpp"
#include "caselet/expr/text.hpp"
#include "support/generators.hpp"
#include "support/replay.hpp"

using namespace caselet;
using namespace caselet::study;
using expr::call;
using expr::lit;

namespace {

constexpr std::int64_t kT = 1'700'000'000;
constexpr std::int64_t kWeek = 604800;

StudyConfig config_with(std::vector<StudyRule> rules) {
    StudyConfig c;
    c.study_key = "s";
    c.survey_keys = {"intake", "weekly"};
    c.external_endpoints = {{"lab", "https://lab.example"}};
    c.rules = std::move(rules);
    return c;
}

ParticipantState fresh(std::string id = "p") {
    ParticipantState s;
    s.participant_id = std::move(id);
    s.study_key = "s";
    return s;
}

survey::SurveyResponse response_for(std::string key) {
    survey::SurveyResponse r;
    r.survey_key = std::move(key);
    r.version_id = "v1";
    return r;
}

Expression parse(const char* text) { return expr::parse_text(text); }

const Json& rule_doc() {
    static const Json doc = Json::parse(R"({
      "format": "caselet-rules/1", "studyKey": "s", "surveyKeys": ["intake", "weekly"],
      "externalEndpoints": {"lab": "https://lab.example"},
      "rules": [{"on": {"event": "ENTER"}, "actions": [{"type": "ADD_SURVEY", "surveyKey": "intake", "category": "prio"}]}]
    })");
    return doc;
}

RulesError rules_error(const Json& doc, std::string* where = nullptr) {
    try {
        load_rules(doc);
    } catch (const RulesLoadError& e) {
        if (where) *where = e.where();
        return e.code();
    }
    FAIL("rules loaded without error");
    return RulesError::MalformedDocument;
}

}  // namespace

TEST_CASE("ENTER adds the intake survey") {
    auto config = load_rules(rule_doc());
    auto [state, fx] = process_event(config, fresh(), StudyEvent::enter(Timestamp{kT}), {}, Timestamp{kT});
    REQUIRE(state.assigned.size() == 1);
    CHECK(state.assigned[0] == AssignedSurvey{"intake", SurveyCategory::Prio, std::nullopt, std::nullopt});
    CHECK(state.entered_at == Timestamp{kT});
    CHECK(state.version == 1);
    CHECK(fx.messages_to_schedule.empty());
}

TEST_CASE("SUBMIT intake assigns weekly and schedules a reminder a week out") {
    auto config = config_with({{{EventKind::Submit, "intake"},
                                {{AddSurvey{"weekly", SurveyCategory::Normal, parse("timestampWithOffset(0)"), std::nullopt}},
                                 {ScheduleMessage{"reminder", parse("timestampWithOffset(604800)")}}}}});
    auto start = fresh();
    start.assigned.push_back({"intake", SurveyCategory::Prio, std::nullopt, std::nullopt});
    auto [state, fx] =
        process_event(config, start, StudyEvent::submit(response_for("intake"), Timestamp{kT}), {}, Timestamp{kT});
    REQUIRE(state.assigned.size() == 1);
    CHECK(state.assigned[0].survey_key == "weekly");
    CHECK(state.assigned[0].valid_from == Timestamp{kT});
    CHECK(state.last_submissions.at("intake") == Timestamp{kT});
    REQUIRE(fx.messages_to_schedule.size() == 1);
    CHECK(fx.messages_to_schedule[0] == MessageToSchedule{"p", "reminder", Timestamp{kT + 604800}});
}

TEST_CASE("TIMER schedules a reminder once the last weekly is over a week old") {
    auto config = config_with({{{EventKind::Timer, std::nullopt},
                                {{IfAction{parse("lt(getLastSubmissionDate(\"weekly\"), timestampWithOffset(-604800))"),
                                           {{ScheduleMessage{"reminder", parse("now()")}}},
                                           {}}}}}});
    auto overdue = fresh();
    overdue.last_submissions["weekly"] = Timestamp{kT - 8 * 86400};
    auto [s1, fx1] = process_event(config, overdue, StudyEvent::timer(Timestamp{kT}), {}, Timestamp{kT});
    REQUIRE(fx1.messages_to_schedule.size() == 1);
    CHECK(fx1.messages_to_schedule[0].due_at == Timestamp{kT});

    auto recent = fresh();
    recent.last_submissions["weekly"] = Timestamp{kT - 6 * 86400};
    CHECK(process_event(config, recent, StudyEvent::timer(Timestamp{kT}), {}, Timestamp{kT}).second.messages_to_schedule.empty());
    // Never submitted: the comparison sees Undefined and stays false.
    CHECK(process_event(config, fresh(), StudyEvent::timer(Timestamp{kT}), {}, Timestamp{kT}).second.messages_to_schedule.empty());
}

TEST_CASE("rules fire in order and later actions see earlier effects") {
    auto config = config_with({{{EventKind::Enter, std::nullopt},
                                {{UpdateFlag{"k", lit("first")}}, {UpdateFlag{"n", lit(1)}}}},
                               {{EventKind::Enter, std::nullopt},
                                {{UpdateFlag{"k", lit("second")}},
                                 {UpdateFlag{"n", call("sum", call("getStudyFlag", lit("n")), lit(1))}},
                                 {UpdateFlag{"gone", call("getStudyFlag", lit("missing"))}},
                                 {UpdateFlag{"at", parse("now()")}}}}});
    auto start = fresh();
    start.flags["gone"] = Value::boolean(true);
    auto [state, fx] = process_event(config, start, StudyEvent::enter(Timestamp{kT}), {}, Timestamp{kT});
    CHECK(state.flags.at("k") == Value::text("second"));
    CHECK(state.flags.at("n") == Value::number(2));
    CHECK_FALSE(state.flags.count("gone"));  // Undefined removes the flag
    CHECK(state.flags.at("at") == Value::number(static_cast<double>(kT)));
    bool warned = false;
    for (const auto& a : fx.audit) warned = warned || (a.what == "warning" && a.detail.find("missing") != std::string::npos);
    CHECK(warned);
}

TEST_CASE("action semantics") {
    auto start = fresh();
    for (int i = 0; i < 3; ++i) start.assigned.push_back({"weekly", SurveyCategory::Normal, Timestamp{i}, std::nullopt});
    start.assigned.push_back({"intake", SurveyCategory::Prio, std::nullopt, std::nullopt});
    auto run = [&](Action a, StudyEvent ev = StudyEvent::custom("go", {{"who", Value::text("lab")}}, Timestamp{kT})) {
        auto config = config_with({{{EventKind::Custom, "go"}, {std::move(a)}}});
        return process_event(config, start, ev, {}, Timestamp{kT});
    };

    auto first = run({RemoveSurvey{"weekly", RemoveSelector::First}}).first.assigned;
    REQUIRE(first.size() == 3);
    CHECK(first[0].valid_from == Timestamp{1});
    auto last = run({RemoveSurvey{"weekly", RemoveSelector::Last}}).first.assigned;
    REQUIRE(last.size() == 3);
    CHECK(last[1].valid_from == Timestamp{1});
    CHECK(last[2].survey_key == "intake");
    CHECK(run({RemoveSurvey{"weekly", RemoveSelector::All}}).first.assigned.size() == 1);

    CHECK(run({UpdateStatus{StudyStatus::Paused}}).first.status == StudyStatus::Paused);

    auto dup = run({AddSurvey{"weekly", SurveyCategory::Optional, std::nullopt, std::nullopt}}).first.assigned;
    CHECK(dup.size() == 5);

    // validUntil before validFrom violates the window invariant: skipped.
    auto bad = run({AddSurvey{"weekly", SurveyCategory::Normal, parse("timestampWithOffset(10)"), parse("timestampWithOffset(0)")}});
    CHECK(bad.first.assigned.size() == 4);

    auto notify = run({NotifyExternal{"lab", {{"who", call("getEventPayload", lit("who"))}}}}).second;
    REQUIRE(notify.external_notifications.size() == 1);
    CHECK(notify.external_notifications[0].url == "https://lab.example");
    CHECK(notify.external_notifications[0].payload.at("who") == Value::text("lab"));

    auto cancel = run({CancelMessages{"reminder"}}).second;
    CHECK(cancel.messages_to_cancel == std::vector<MessageCancellation>{{"p", "reminder"}});

    CHECK(run({ScheduleMessage{"x", lit("soon")}}).second.messages_to_schedule.empty());

    // A CUSTOM rule keyed on another event does not fire.
    auto other = run({UpdateStatus{StudyStatus::Finished}}, StudyEvent::custom("other", {}, Timestamp{kT}));
    CHECK(other.first.status == StudyStatus::Active);
    CHECK(other.first.version == 1);
}

TEST_CASE("SUBMIT context exposes the submitted response and previous responses") {
    auto config = config_with({{{EventKind::Submit, std::nullopt},
                                {{UpdateFlag{"now", call("getResponseValue", lit("Q"), lit("v"))}},
                                 {UpdateFlag{"before", call("getPrevResponseValue", lit("weekly"), lit("Q"), lit("v"))}},
                                 {UpdateFlag{"ctx", call("getContext", lit("site"))}}}}});
    auto current = response_for("weekly");
    current.items.push_back({"Q", {{"v", Value::number(5)}}});
    auto prev = response_for("weekly");
    prev.items.push_back({"Q", {{"v", Value::number(3)}}});
    EventInputs inputs{{{"site", Value::text("north")}}, {{"weekly", prev}}};
    auto [state, fx] = process_event(config, fresh(), StudyEvent::submit(current, Timestamp{kT}), inputs, Timestamp{kT});
    CHECK(state.flags.at("now") == Value::number(5));
    CHECK(state.flags.at("before") == Value::number(3));
    CHECK(state.flags.at("ctx") == Value::text("north"));
}

TEST_CASE("process_event rejects a state from another study") {
    auto config = load_rules(rule_doc());
    auto other = fresh();
    other.study_key = "elsewhere";
    CHECK_THROWS_AS(process_event(config, other, StudyEvent::enter(Timestamp{kT}), {}, Timestamp{kT}), std::invalid_argument);
}

TEST_CASE("active_assignments filters by window and orders by category") {
    auto s = fresh();
    s.assigned = {{"later", SurveyCategory::Prio, Timestamp{kT + 100}, std::nullopt},
                  {"n1", SurveyCategory::Normal, std::nullopt, std::nullopt},
                  {"o", SurveyCategory::Optional, std::nullopt, Timestamp{kT}},
                  {"p", SurveyCategory::Prio, Timestamp{kT}, Timestamp{kT}},
                  {"n2", SurveyCategory::Normal, std::nullopt, std::nullopt},
                  {"expired", SurveyCategory::Prio, std::nullopt, Timestamp{kT - 1}}};
    std::vector<std::string> keys;
    for (const auto& a : active_assignments(s, Timestamp{kT})) keys.push_back(a.survey_key);
    CHECK(keys == std::vector<std::string>{"p", "n1", "n2", "o"});
}

TEST_CASE("properties over random event sequences") {
    testing::Gen gen(7);
    auto config = config_with(
        {{{EventKind::Enter, std::nullopt}, {{AddSurvey{"intake", SurveyCategory::Prio, std::nullopt, std::nullopt}}}},
         {{EventKind::Submit, "intake"},
          {{AddSurvey{"weekly", SurveyCategory::Normal, parse("timestampWithOffset(0)"), parse("timestampWithOffset(604800)")}}}},
         {{EventKind::Submit, "weekly"},
          {{AddSurvey{"weekly", SurveyCategory::Optional, parse("timestampWithOffset(-50)"), parse("timestampWithOffset(50)")}},
           {AddSurvey{"weekly", SurveyCategory::Normal, parse("timestampWithOffset(100)"), std::nullopt}}}},
         {{EventKind::Timer, std::nullopt}, {{RemoveSurvey{"weekly", RemoveSelector::Last}}}}});
    for (int run = 0; run < 100; ++run) {
        auto state = fresh();
        std::int64_t t = kT;
        for (int step = 0; step < 30; ++step) {
            t += static_cast<std::int64_t>(gen.below(3 * 86400));
            StudyEvent ev;
            switch (gen.below(4)) {
                case 0: ev = StudyEvent::enter(Timestamp{t}); break;
                case 1: ev = StudyEvent::timer(Timestamp{t}); break;
                default: ev = StudyEvent::submit(response_for(gen.chance(0.3) ? "intake" : "weekly"), Timestamp{t});
            }
            auto [next, fx] = process_event(config, state, ev, {}, Timestamp{t});
            CHECK(next.version == state.version + 1);
            if (ev.kind == EventKind::Submit) {
                const auto& key = ev.response->survey_key;
                CHECK(next.last_submissions.at(key) == Timestamp{t});
                // The automatic removal takes at most one entry; rules may then add more.
                auto count = [&](const ParticipantState& s) {
                    return std::count_if(s.assigned.begin(), s.assigned.end(),
                                         [&](const AssignedSurvey& a) { return a.survey_key == key; });
                };
                auto added_here = std::count_if(fx.audit.begin(), fx.audit.end(), [&](const AuditEntry& a) {
                    return a.what == "ADD_SURVEY" && a.detail == key;
                });
                CHECK(count(next) == count(state) - std::min<long>(1, count(state)) + added_here);
            }
            for (const auto& a : next.assigned)
                if (a.valid_from && a.valid_until) CHECK(*a.valid_from <= *a.valid_until);
            auto probe = Timestamp{t + static_cast<std::int64_t>(gen.below(2 * kWeek)) - kWeek};
            for (const auto& a : active_assignments(next, probe)) {
                CHECK((!a.valid_from || *a.valid_from <= probe));
                CHECK((!a.valid_until || probe <= *a.valid_until));
            }
            state = std::move(next);
        }
    }
}

TEST_CASE("run_timer_sweep") {
    auto config = config_with({{{EventKind::Timer, std::nullopt},
                                {{IfAction{parse("lt(getLastSubmissionDate(\"weekly\"), timestampWithOffset(-604800))"),
                                           {{ScheduleMessage{"reminder", parse("now()")}}},
                                           {}}}}}});
    SUBCASE("skips paused and finished participants") {
        std::vector<ParticipantState> states{fresh("a"), fresh("b"), fresh("c"), fresh("d")};
        states[3].status = StudyStatus::Finished;
        auto out = run_timer_sweep(config, states, Timestamp{kT});
        CHECK(out.size() == 3);
        for (const auto& r : out) CHECK(r.state->version == 1);
        CHECK(run_timer_sweep(config, std::vector<ParticipantState>{}, Timestamp{kT}).empty());
    }
    SUBCASE("10 participants, 4 overdue") {
        // Last weekly submissions in days before the sweep; overdue means strictly more than 7 days.
        const int days_ago[] = {1, 3, 7, 8, 2, 10, 6, 14, 5, 9};
        std::vector<ParticipantState> states;
        int expected = 0;
        for (int i = 0; i < 10; ++i) {
            auto s = fresh("p" + std::to_string(i));
            s.last_submissions["weekly"] = Timestamp{kT - days_ago[i] * 86400};
            expected += days_ago[i] * 86400 > kWeek;
            states.push_back(s);
        }
        CHECK(expected == 4);
        std::size_t sent = 0;
        for (const auto& r : run_timer_sweep(config, states, Timestamp{kT})) sent += r.effects.messages_to_schedule.size();
        CHECK(sent == 4);
    }
    SUBCASE("a failing participant does not stop the sweep") {
        std::vector<ParticipantState> states{fresh("a"), fresh("b"), fresh("c")};
        states[1].study_key = "other";
        auto out = run_timer_sweep(config, states, Timestamp{kT});
        REQUIRE(out.size() == 3);
        CHECK(out[0].state.has_value());
        CHECK_FALSE(out[1].state.has_value());
        CHECK_FALSE(out[1].error.empty());
        CHECK(out[2].state.has_value());
    }
}

TEST_CASE("rules documents round-trip and reject bad input") {
    auto golden = testing::load_json_file(std::string(CASELET_SOURCE_DIR) + "/tests/golden/study_replay.json");
    auto config = load_rules(golden.at("rules"));
    CHECK(config.rules.size() == 5);
    CHECK(load_rules(encode_rules(config)) == config);
    CHECK(load_rules(Json::parse(encode_rules(config).dump())) == config);

    std::string where;
    auto doc = rule_doc();
    doc["rules"][0]["actions"][0]["surveyKey"] = "nope";
    CHECK(rules_error(doc, &where) == RulesError::UnknownSurvey);
    CHECK(where == "rules[0].actions[0].surveyKey");

    doc = rule_doc();
    doc["rules"][0]["actions"] = Json::array();
    CHECK(rules_error(doc) == RulesError::EmptyActions);

    doc = rule_doc();
    doc["rules"][0]["actions"][0] = Json::parse(R"({"type":"UPDATE_FLAG","key":"x","value":{"name":"nope","args":[]}})");
    CHECK(rules_error(doc, &where) == RulesError::InvalidExpression);
    CHECK(where == "rules[0].actions[0].value");

    doc = rule_doc();
    doc["rules"][0]["actions"][0] = Json::parse(R"({"type":"NOTIFY_EXTERNAL","endpointKey":"x"})");
    CHECK(rules_error(doc) == RulesError::UnknownEndpoint);

    doc = rule_doc();
    doc["rules"][0]["actions"][0] = Json::parse(R"({"type":"UPDATE_STATUS","status":"sleeping"})");
    CHECK(rules_error(doc) == RulesError::MalformedDocument);

    doc = rule_doc();
    doc["format"] = "caselet-rules/2";
    CHECK(rules_error(doc) == RulesError::MalformedDocument);
}

TEST_CASE("events round-trip") {
    auto golden = testing::load_json_file(std::string(CASELET_SOURCE_DIR) + "/tests/golden/study_replay.json");
    for (const auto& doc : golden.at("events")) {
        auto e = decode_event(doc);
        CHECK(decode_event(encode_event(e)) == e);
    }
}

TEST_CASE("golden event log replays to the hand-derived result") {
    auto golden = testing::load_json_file(std::string(CASELET_SOURCE_DIR) + "/tests/golden/study_replay.json");
    const auto& expected = golden.at("expected");
    auto first = testing::replay_fixture(golden);
    REQUIRE(first.states.size() == expected.at("states").size());
    for (std::size_t i = 0; i < first.states.size(); ++i) {
        const auto& want = expected["states"][i];
        const auto& got = first.states[i];
        INFO("after event " << i);
        CHECK(got.version == want["version"].get<std::int64_t>());
        CHECK(to_string(got.status) == want["status"].get<std::string>());
        std::vector<std::string> keys;
        for (const auto& a : got.assigned) keys.push_back(a.survey_key);
        CHECK(keys == want["assigned"].get<std::vector<std::string>>());
    }
    CHECK(encode_state(first.states.back()) == expected.at("finalState"));
    auto fx = encode_effects(first.effects);
    CHECK(fx["messagesToSchedule"] == expected.at("messagesToSchedule"));
    CHECK(fx["messagesToCancel"] == expected.at("messagesToCancel"));
    CHECK(fx["externalNotifications"] == expected.at("externalNotifications"));

    auto second = testing::replay_fixture(golden);
    CHECK(encode_state(second.states.back()).dump() == encode_state(first.states.back()).dump());
    CHECK(encode_effects(second.effects).dump() == fx.dump());
}
