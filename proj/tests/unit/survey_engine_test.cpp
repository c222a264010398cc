#include <doctest.h>

#include "caselet/survey/document.hpp"
#include "caselet/survey/engine.hpp"
#include "support/survey_gen.hpp"

using namespace caselet;
using namespace caselet::survey;
using expr::Value;

namespace {

constexpr std::int64_t kNow = 1'700'000'000;

std::shared_ptr<const SurveyDefinition> load(const char* text) {
    return std::make_shared<const SurveyDefinition>(load_survey(Json::parse(text)));
}

// Q1 (yes/no) on page 1; Q2 shown only when Q1 == "yes"; page 2 holds a
// required number question N with range [0, 10] and a soft nudge.
const char* kAdaptive = R"({
  "format": "caselet-survey/1", "surveyKey": "intake", "versionId": "v1",
  "items": [
    {"itemKey": "Q1", "kind": "question", "components": [
      {"role": "title", "text": {"en": "Fever?", "de": "Fieber?"}},
      {"role": "responseGroup", "response": {"slotKey": "scg", "type": "singleChoice",
        "options": [{"key": "yes", "label": {"en": "Yes"}}, {"key": "no", "label": {"en": "No"}}]}}]},
    {"itemKey": "Q2", "kind": "question",
     "condition": {"name": "eq", "args": [{"name": "getResponseValue", "args": [{"str": "Q1"}, {"str": "scg"}]}, {"str": "yes"}]},
     "components": [
      {"role": "title", "text": {"en": "Since {{relativeDate: timestampWithOffset(-259200)}}"}},
      {"role": "responseGroup", "response": {"slotKey": "t", "type": "textInput", "maxLen": 20}}]},
    {"itemKey": "p1", "kind": "pageBreak"},
    {"itemKey": "N", "kind": "question", "components": [
      {"role": "responseGroup", "response": {"slotKey": "n", "type": "numberInput", "min": 0, "max": 10}}],
     "validations": [
      {"key": "required", "severity": "hard", "rule": {"name": "hasResponse", "args": [{"str": "N"}, {"str": "n"}]}},
      {"key": "nudge", "severity": "soft", "rule": {"bool": false}}]}
  ]})";

std::vector<std::string> keys(const RenderedSnapshot& s) {
    std::vector<std::string> out;
    for (const auto& i : s.items) out.push_back(i.item_key);
    return out;
}

const ValidationResult* result(const RenderedSnapshot& s, const std::string& item, const std::string& key) {
    for (const auto& i : s.items)
        for (const auto& v : i.validations)
            if (i.item_key == item && v.key == key) return &v;
    return nullptr;
}

SessionErrorCode error_of(auto&& fn) {
    try {
        fn();
    } catch (const SessionError& e) {
        return e.code();
    }
    FAIL("expected a SessionError");
    return SessionErrorCode::Closed;
}

}  // namespace

TEST_CASE("start_session renders page 0") {
    auto [session, snap] = SurveySession::start(load(kAdaptive), {}, 1, expr::Timestamp{kNow});
    CHECK(snap.page_index == 0);
    CHECK(snap.page_count == 2);
    CHECK(keys(snap) == std::vector<std::string>{"Q1"});
    CHECK(snap.can_go_next);
    CHECK_FALSE(snap.can_go_prev);
    CHECK_FALSE(snap.can_submit);
    CHECK(session.opened_at() == expr::Timestamp{kNow});
}

TEST_CASE("answers reveal and hide items; hidden answers are retained") {
    auto [s, snap] = SurveySession::start(load(kAdaptive), {}, 1, expr::Timestamp{kNow});
    snap = s.apply_answer("Q1", "scg", Value::text("yes"));
    CHECK(keys(snap) == std::vector<std::string>{"Q1", "Q2"});
    // Three days back renders as a whole-day difference.
    CHECK(snap.items[1].components[0].text.at("en") == "Since -3d");

    s.apply_answer("Q2", "t", Value::text("two days"));
    snap = s.apply_answer("Q1", "scg", Value::text("no"));
    CHECK(keys(snap) == std::vector<std::string>{"Q1"});
    REQUIRE(s.buffered("Q2", "t") != nullptr);

    snap = s.apply_answer("Q1", "scg", Value::text("yes"));
    REQUIRE(snap.items.size() == 2);
    REQUIRE(snap.items[1].slot->value.has_value());
    CHECK(*snap.items[1].slot->value == SlotValue{Value::text("two days")});
}

TEST_CASE("apply_answer rejects unknown items and mismatched kinds") {
    auto [s, snap] = SurveySession::start(load(kAdaptive), {}, 1, expr::Timestamp{kNow});
    CHECK(error_of([&] { s.apply_answer("QX", "scg", Value::text("yes")); }) == SessionErrorCode::UnknownItem);
    CHECK(error_of([&] { s.apply_answer("Q1", "other", Value::text("yes")); }) == SessionErrorCode::UnknownItem);
    CHECK(error_of([&] { s.apply_answer("p1", "x", Value::text("yes")); }) == SessionErrorCode::UnknownItem);
    CHECK(error_of([&] { s.apply_answer("N", "n", Value::text("3")); }) == SessionErrorCode::SlotKindMismatch);
    CHECK(error_of([&] { s.apply_answer("Q1", "scg", Value::text("maybe")); }) == SessionErrorCode::SlotKindMismatch);
    CHECK(error_of([&] { s.apply_answer("Q1", "scg", Selection{"yes"}); }) == SessionErrorCode::SlotKindMismatch);
}

TEST_CASE("range violations and required answers gate navigation") {
    auto [s, snap] = SurveySession::start(load(kAdaptive), {}, 1, expr::Timestamp{kNow});
    CHECK(error_of([&] { s.navigate(Direction::Prev); }) == SessionErrorCode::AtBoundary);
    snap = s.navigate(Direction::Next);
    CHECK(snap.page_index == 1);
    CHECK_FALSE(snap.can_go_next);  // N is required and empty
    CHECK_FALSE(snap.can_submit);
    CHECK_FALSE(result(snap, "N", "required")->passed);

    snap = s.apply_answer("N", "n", Value::number(42));
    const auto* range = result(snap, "N", "rangeCheck");
    REQUIRE(range != nullptr);
    CHECK_FALSE(range->passed);
    CHECK_FALSE(snap.can_submit);
    CHECK(error_of([&] { s.finalize(expr::Timestamp{kNow + 60}); }) == SessionErrorCode::SubmitBlocked);

    snap = s.apply_answer("N", "n", Value::number(7));
    CHECK(result(snap, "N", "rangeCheck")->passed);
    CHECK_FALSE(result(snap, "N", "nudge")->passed);  // soft: does not block
    CHECK(snap.can_submit);
    CHECK(error_of([&] { s.navigate(Direction::Next); }) == SessionErrorCode::AtBoundary);
    snap = s.navigate(Direction::Prev);
    CHECK(snap.page_index == 0);
}

TEST_CASE("navigate reports the failing validations") {
    auto def = load(R"({"format": "caselet-survey/1", "surveyKey": "s", "versionId": "1", "items": [
        {"itemKey": "A", "kind": "question",
         "components": [{"role": "responseGroup", "response": {"slotKey": "x", "type": "textInput", "maxLen": 3}}],
         "validations": [{"key": "required", "severity": "hard", "rule": {"name": "hasResponse", "args": [{"str": "A"}, {"str": "x"}]}}]},
        {"itemKey": "b", "kind": "pageBreak"},
        {"itemKey": "B", "kind": "question",
         "components": [{"role": "responseGroup", "response": {"slotKey": "x", "type": "textInput", "maxLen": 3}}]}]})");
    auto [s, snap] = SurveySession::start(def, {}, 1, expr::Timestamp{kNow});
    try {
        s.navigate(Direction::Next);
        FAIL("expected NavigationBlocked");
    } catch (const SessionError& e) {
        CHECK(e.code() == SessionErrorCode::NavigationBlocked);
        REQUIRE(e.failing().size() == 1);
        CHECK(e.failing()[0].item_key == "A");
        CHECK(e.failing()[0].key == "required");
    }
    s.apply_answer("A", "x", Value::text("ok"));
    CHECK(s.navigate(Direction::Next).page_index == 1);

    // Clearing page 1's answer from page 2 blocks submission and names it.
    s.apply_answer("A", "x", Value{});
    try {
        s.finalize(expr::Timestamp{kNow + 5});
        FAIL("expected SubmitBlocked");
    } catch (const SessionError& e) {
        CHECK(e.code() == SessionErrorCode::SubmitBlocked);
        REQUIRE(e.failing().size() == 1);
        CHECK(e.failing()[0].item_key == "A");
    }
}

TEST_CASE("finalize keeps only visible answered items") {
    auto [s, snap] = SurveySession::start(load(kAdaptive), {}, 1, expr::Timestamp{kNow});
    s.apply_answer("Q1", "scg", Value::text("yes"));
    s.apply_answer("Q2", "t", Value::text("hidden soon"));
    s.apply_answer("Q1", "scg", Value::text("no"));
    s.navigate(Direction::Next);
    s.apply_answer("N", "n", Value::number(3));
    auto resp = s.finalize(expr::Timestamp{kNow + 120});
    CHECK(resp.survey_key == "intake");
    CHECK(resp.version_id == "v1");
    CHECK(resp.opened_at == expr::Timestamp{kNow});
    CHECK(resp.submitted_at == expr::Timestamp{kNow + 120});
    CHECK(resp.find_item("Q2") == nullptr);
    REQUIRE(resp.find("Q1", "scg") != nullptr);
    CHECK(*resp.find("N", "n") == SlotValue{Value::number(3)});
    CHECK(error_of([&] { s.apply_answer("N", "n", Value::number(4)); }) == SessionErrorCode::Closed);
}

TEST_CASE("hidden page breaks collapse pages") {
    auto def = load(R"({"format": "caselet-survey/1", "surveyKey": "s", "versionId": "1", "items": [
        {"itemKey": "A", "kind": "question", "components": [{"role": "responseGroup", "response":
            {"slotKey": "x", "type": "singleChoice", "options": [{"key": "split", "label": {"en": "s"}}, {"key": "join", "label": {"en": "j"}}]}}]},
        {"itemKey": "b", "kind": "pageBreak",
         "condition": {"name": "eq", "args": [{"name": "getResponseValue", "args": [{"str": "A"}, {"str": "x"}]}, {"str": "split"}]}},
        {"itemKey": "B", "kind": "display", "components": [{"role": "title", "text": {"en": "Hi"}}]}]})");
    auto [s, snap] = SurveySession::start(def, {}, 1, expr::Timestamp{kNow});
    CHECK(snap.page_count == 1);
    CHECK(snap.can_submit);
    snap = s.apply_answer("A", "x", Value::text("split"));
    CHECK(snap.page_count == 2);
    s.navigate(Direction::Next);
    snap = s.apply_answer("A", "x", Value::text("join"));
    CHECK(snap.page_count == 1);
    CHECK(snap.page_index == 0);
}

TEST_CASE("randomized groups shuffle deterministically from the seed") {
    auto def = load(R"({"format": "caselet-survey/1", "surveyKey": "s", "versionId": "1", "items": [
        {"itemKey": "G", "kind": "group", "randomizeChildren": true, "children": [
          {"itemKey": "a", "kind": "display", "components": [{"role": "title", "text": {"en": "a"}}]},
          {"itemKey": "b", "kind": "display", "components": [{"role": "title", "text": {"en": "b"}}]},
          {"itemKey": "c", "kind": "display", "components": [{"role": "title", "text": {"en": "c"}}]},
          {"itemKey": "d", "kind": "display", "components": [{"role": "title", "text": {"en": "d"}}]},
          {"itemKey": "e", "kind": "display", "components": [{"role": "title", "text": {"en": "e"}}]}]}]})");
    auto order_for = [&](std::uint64_t seed) {
        auto [s, snap] = SurveySession::start(def, {}, seed, expr::Timestamp{kNow});
        return keys(snap);
    };
    CHECK(order_for(17) == order_for(17));

    std::set<std::vector<std::string>> seen;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto o = order_for(seed);
        CHECK(std::set<std::string>(o.begin(), o.end()).size() == 5);
        seen.insert(o);
    }
    CHECK(seen.size() > 1);
}

TEST_CASE("shuffled_indices is a permutation") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto p = shuffled_indices(7, seed);
        std::set<std::size_t> s(p.begin(), p.end());
        CHECK(s.size() == 7);
        CHECK(*s.rbegin() == 6);
    }
    CHECK(shuffled_indices(0, 1).empty());
}

TEST_CASE("option conditions and locale-filtered snapshot encoding") {
    auto def = load(R"({"format": "caselet-survey/1", "surveyKey": "s", "versionId": "1", "items": [
        {"itemKey": "Q", "kind": "question", "components": [
          {"role": "title", "text": {"en": "Hello {{getStudyFlag(\"name\")}}", "de": "Hallo"}},
          {"role": "responseGroup", "response": {"slotKey": "m", "type": "multipleChoice", "options": [
            {"key": "x", "label": {"en": "X"}},
            {"key": "y", "label": {"en": "Y"}, "condition": {"name": "getContext", "args": [{"str": "showY"}]}}]}}]}]})");
    expr::EvalContext ctx;
    ctx.external_context["showY"] = Value::boolean(false);
    study::ParticipantState st;
    st.flags["name"] = Value::text("Ada");
    ctx.participant_state = st;
    auto [s, snap] = SurveySession::start(def, ctx, 1, expr::Timestamp{kNow});
    REQUIRE(snap.items.size() == 1);
    CHECK(snap.items[0].components[0].text.at("en") == "Hello Ada");
    CHECK(snap.items[0].slot->options[0].visible);
    CHECK_FALSE(snap.items[0].slot->options[1].visible);

    snap = s.apply_answer("Q", "m", Selection{"x", "y"});
    auto de = encode_snapshot(snap, std::string("de"));
    CHECK(de["items"][0]["components"][0]["text"].dump() == R"({"de":"Hallo"})");
    CHECK(de["items"][0]["response"]["value"].dump() == R"({"selected":["x","y"]})");
    auto fallback = encode_snapshot(snap, std::string("fr"));
    CHECK(fallback["items"][0]["components"][0]["text"].dump() == R"({"de":"Hallo"})");
    auto all = encode_snapshot(snap);
    CHECK(all["items"][0]["components"][0]["text"].size() == 2);
    CHECK(all.begin().key() == "pageIndex");
}

TEST_CASE("identical inputs produce byte-identical snapshots and responses") {
    testing::Gen plans(5);
    for (int round = 0; round < 20; ++round) {
        auto plan = testing::random_plan(plans);
        auto def = std::make_shared<const SurveyDefinition>(load_survey(testing::plan_document(plan)));
        auto run = [&] {
            testing::Gen gen(1000 + round);
            auto [s, snap] = SurveySession::start(def, {}, 77, expr::Timestamp{kNow});
            std::string log = encode_snapshot(snap).dump();
            auto qs = plan.questions();
            for (int step = 0; step < 15 && !qs.empty(); ++step) {
                const auto* q = qs[gen.below(qs.size())];
                s.set_now(expr::Timestamp{kNow + step});
                log += encode_snapshot(s.apply_answer(q->key, "v", testing::random_answer(gen, *q))).dump();
            }
            return log;
        };
        CHECK(run() == run());
    }
}
