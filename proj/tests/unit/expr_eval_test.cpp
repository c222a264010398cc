#include <doctest.h>

#include "caselet/expr/evaluator.hpp"
#include "caselet/expr/text.hpp"
#include "support/generators.hpp"
#include "support/reference_eval.hpp"

using namespace caselet;
using namespace caselet::expr;

namespace {

constexpr std::int64_t kNow = 1'700'000'000;
constexpr std::int64_t kDay = 86'400;

EvalResult run(std::string_view src, const EvalContext& ctx = {}) { return evaluate(parse_text(src), ctx); }

EvalContext with_state() {
    EvalContext ctx;
    ctx.now = Timestamp{kNow};
    study::ParticipantState st;
    st.participant_id = "p1";
    st.study_key = "flu";
    st.flags["name"] = Value::text("Ada");
    st.flags["score"] = Value::number(4);
    st.last_submissions["weekly"] = Timestamp{kNow - 3 * kDay};
    ctx.participant_state = st;
    return ctx;
}

}  // namespace

TEST_CASE("boolean logic") {
    auto r = run("and(true, not(false))");
    CHECK(r.value == Value::boolean(true));
    CHECK(r.warnings.empty());
    CHECK(run("or(false, false)").value == Value::boolean(false));
    CHECK(run("not(getContext(\"x\"))").value == Value::boolean(true));
}

TEST_CASE("missing context references give Undefined and one warning each") {
    auto r = run("getStudyFlag(\"cohort\")");
    CHECK(r.value.is_undefined());
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("cohort") != std::string::npos);

    auto two = run("sum(getContext(\"a\"), getEventPayload(\"b\"))");
    CHECK(two.value.is_undefined());
    CHECK(two.warnings.size() == 2);

    auto status = run("hasStudyStatus(\"active\")");
    CHECK(status.value == Value::boolean(false));
    CHECK(status.warnings.size() == 1);
}

TEST_CASE("weekly interval check against last submission") {
    // now - 7d < now - 3d
    auto r = run("lt(timestampWithOffset(-604800, now()), getLastSubmissionDate(\"weekly\"))", with_state());
    CHECK(r.value == Value::boolean(true));
    CHECK(r.warnings.empty());

    auto ctx = with_state();
    ctx.participant_state->last_submissions["weekly"] = Timestamp{kNow - 8 * kDay};
    CHECK(run("lt(getLastSubmissionDate(\"weekly\"), timestampWithOffset(-604800))", ctx).value ==
          Value::boolean(true));
}

TEST_CASE("comparison rules") {
    CHECK(run("eq(1, 1.0)").value == Value::boolean(true));
    CHECK(run("lt(\"abc\", \"abd\")").value == Value::boolean(true));
    CHECK(run("lt(\"Z\", \"a\")").value == Value::boolean(true));
    CHECK(run("gt(\"é\", \"z\")").value == Value::boolean(true));

    auto cross = run("eq(1, \"1\")");
    CHECK(cross.value == Value::boolean(false));
    CHECK(cross.warnings.size() == 1);

    // Undefined operands make every comparison false, ne included.
    for (const char* op : {"eq", "ne", "lt", "lte", "gt", "gte"}) {
        auto r = run(std::string(op) + "(getContext(\"missing\"), 1)");
        CHECK(r.value == Value::boolean(false));
    }

    // Timestamps compare numerically, with each other and with numbers.
    EvalContext ctx;
    ctx.now = Timestamp{100};
    CHECK(run("lt(now(), timestampWithOffset(1))", ctx).value == Value::boolean(true));
    CHECK(run("eq(now(), 100)", ctx).value == Value::boolean(true));
}

TEST_CASE("arithmetic") {
    CHECK(run("sum(1, 2)").value == Value::number(3));
    CHECK(run("sub(10, 4)").value == Value::number(6));
    CHECK(run("mul(2, 3, 4)").value == Value::number(24));
    CHECK(run("sum(1, getContext(\"x\"))").value.is_undefined());

    auto text = run("sum(1, \"2\")");
    CHECK(text.value.is_undefined());
    CHECK(text.warnings.size() == 1);

    auto overflow = run("mul(1e300, 1e300)");
    CHECK(overflow.value.is_undefined());
    CHECK(overflow.warnings.size() == 1);

    EvalContext ctx;
    ctx.now = Timestamp{1000};
    CHECK(run("sum(now(), 1)", ctx).value == Value::number(1001));
    // Numbers used as a reference timestamp truncate toward zero.
    CHECK(run("timestampWithOffset(-1.9, 10.7)", ctx).value == Value::timestamp(9));
    CHECK(run("timestampWithOffset(60)", ctx).value == Value::timestamp(1060));
}

TEST_CASE("short-circuit suppresses warnings of unevaluated branches") {
    auto r = run("and(false, getContext(\"x\"))");
    CHECK(r.value == Value::boolean(false));
    CHECK(r.warnings.empty());
    auto o = run("or(true, getContext(\"x\"))");
    CHECK(o.value == Value::boolean(true));
    CHECK(o.warnings.empty());
}

TEST_CASE("response and state accessors") {
    EvalContext ctx = with_state();
    survey::SurveyResponse resp;
    resp.survey_key = "intake";
    resp.items.push_back({"Q1", {{"scg", Value::text("yes")}}});
    resp.items.push_back({"Q2", {{"mcg", survey::Selection{"a", "c"}}}});
    resp.items.push_back({"Q3", {{"txt", Value::text("")}}});
    ctx.current_response = resp;
    ctx.previous_responses["intake"] = resp;
    ctx.event_payload["positive"] = Value::boolean(true);
    ctx.external_context["temp"] = Value::number(21.5);

    CHECK(run("eq(getResponseValue(\"Q1\", \"scg\"), \"yes\")", ctx).value == Value::boolean(true));
    CHECK(run("getResponseValue(\"Q2\", \"mcg\")", ctx).value == Value::text("a,c"));
    CHECK(run("hasResponse(\"Q1\", \"scg\")", ctx).value == Value::boolean(true));
    CHECK(run("hasResponse(\"Q3\", \"txt\")", ctx).value == Value::boolean(false));
    CHECK(run("hasResponse(\"Q9\", \"x\")", ctx).value == Value::boolean(false));
    CHECK(run("countSelected(\"Q2\")", ctx).value == Value::number(2));
    CHECK(run("countSelected(\"Q1\")", ctx).value == Value::number(1));
    CHECK(run("countSelected(\"Q9\")", ctx).value == Value::number(0));
    CHECK(run("getPrevResponseValue(\"intake\", \"Q1\", \"scg\")", ctx).value == Value::text("yes"));
    CHECK(run("getPrevResponseValue(\"weekly\", \"Q1\", \"scg\")", ctx).warnings.size() == 1);
    CHECK(run("getStudyFlag(\"name\")", ctx).value == Value::text("Ada"));
    CHECK(run("getStudyFlag(\"score\")", ctx).value == Value::number(4));
    CHECK(run("hasStudyStatus(\"active\")", ctx).value == Value::boolean(true));
    CHECK(run("hasStudyStatus(\"paused\")", ctx).value == Value::boolean(false));
    CHECK(run("getEventPayload(\"positive\")", ctx).value == Value::boolean(true));
    CHECK(run("getContext(\"temp\")", ctx).value == Value::number(21.5));
    CHECK(run("getLastSubmissionDate(\"weekly\")", ctx).value == Value::timestamp(kNow - 3 * kDay));

    auto missing = run("getResponseValue(\"Q7\", \"scg\")", ctx);
    CHECK(missing.value.is_undefined());
    REQUIRE(missing.warnings.size() == 1);
    CHECK(missing.warnings[0].find("Q7.scg") != std::string::npos);
}

TEST_CASE("evaluation is deterministic and matches the reference evaluator") {
    testing::Gen gen(2024);
    int undefined = 0, booleans = 0;
    for (int i = 0; i < 1000; ++i) {
        auto e = gen.pure_tree(6);
        auto a = evaluate(e, {});
        auto b = evaluate(e, {});
        auto expected = testing::ref_eval(e);
        INFO(print_text(e));
        CHECK(testing::same(expected, a.value));
        CHECK(a.value == b.value);
        CHECK(a.warnings == b.warnings);
        undefined += a.value.is_undefined();
        booleans += a.value.is_boolean();
    }
    // The generator must exercise more than one outcome kind.
    CHECK(undefined > 0);
    CHECK(booleans > 100);
}
