#include <doctest.h>

#include "caselet/survey/document.hpp"
#include "caselet/survey/engine.hpp"
#include "support/survey_gen.hpp"

using namespace caselet;
using namespace caselet::survey;

namespace {

std::vector<std::string> question_keys(const RenderedSnapshot& s) {
    std::vector<std::string> out;
    for (const auto& i : s.items)
        if (i.kind == ItemKind::Question) out.push_back(i.item_key);
    return out;
}

}  // namespace

// Random surveys driven by random answers and navigation. After every step
// the session must agree with the oracle on pagination, visibility and
// whether Next/Submit are allowed; finalize must keep exactly the visible
// answered items.
TEST_CASE("navigation and submission gating matches the oracle") {
    testing::Gen gen(2024);
    for (int run = 0; run < 200; ++run) {
        auto plan = testing::random_plan(gen);
        auto def = std::make_shared<const SurveyDefinition>(load_survey(testing::plan_document(plan)));
        auto [s, snap] = SurveySession::start(def, {}, gen.below(1000), expr::Timestamp{1'700'000'000});
        auto order = [&](const std::string& g) -> const std::vector<std::size_t>& { return s.child_order(g); };
        std::map<std::string, SlotValue> answers;
        auto qs = plan.questions();

        for (int step = 0; step < 25; ++step) {
            auto oracle = testing::oracle_view(plan, answers, order);
            INFO("run " << run << " step " << step);
            REQUIRE(snap.page_count == oracle.pages.size());
            REQUIRE(snap.page_index < oracle.pages.size());
            CHECK(question_keys(snap) == oracle.pages[snap.page_index]);
            bool page_ok = oracle.failing[snap.page_index].empty();
            bool last = snap.page_index + 1 == oracle.pages.size();
            CHECK(snap.can_go_next == page_ok);
            CHECK(snap.can_submit == (last && page_ok));
            CHECK(snap.can_go_prev == (snap.page_index > 0));

            auto roll = gen.below(10);
            if (roll < 6 && !qs.empty()) {
                const auto* q = qs[gen.below(qs.size())];
                auto v = testing::random_answer(gen, *q);
                snap = s.apply_answer(q->key, "v", v);
                const auto* cleared = std::get_if<expr::Value>(&v);
                if (cleared && cleared->is_undefined()) answers.erase(q->key);
                else answers[q->key] = v;
            } else if (roll < 9) {
                auto before = snap.page_index;
                try {
                    snap = s.navigate(Direction::Next);
                    CHECK(page_ok);
                    CHECK_FALSE(last);
                    CHECK(snap.page_index == before + 1);
                } catch (const SessionError& e) {
                    CHECK((e.code() == SessionErrorCode::AtBoundary ? last : !page_ok));
                    snap = s.snapshot();
                }
            } else {
                try {
                    snap = s.navigate(Direction::Prev);
                } catch (const SessionError& e) {
                    CHECK(e.code() == SessionErrorCode::AtBoundary);
                    snap = s.snapshot();
                }
            }
        }

        auto oracle = testing::oracle_view(plan, answers, order);
        bool all_ok = true;
        for (const auto& f : oracle.failing) all_ok = all_ok && f.empty();
        bool last = snap.page_index + 1 == oracle.pages.size();
        try {
            auto resp = s.finalize(expr::Timestamp{1'700'000'600});
            CHECK(last);
            CHECK(all_ok);
            std::set<std::string> kept;
            for (const auto& item : resp.items) kept.insert(item.item_key);
            std::set<std::string> expected;
            for (const auto& [k, v] : answers)
                if (oracle.visible.count(k) && is_answered(v)) expected.insert(k);
            CHECK(kept == expected);
        } catch (const SessionError& e) {
            CHECK(e.code() == SessionErrorCode::SubmitBlocked);
            CHECK_FALSE((last && all_ok));
        }
    }
}
