#pragma once

// Random surveys built from a test-side plan, plus an oracle that recomputes
// visibility, pagination and hard-validation failures from the plan alone.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "caselet/json.hpp"
#include "caselet/survey/response.hpp"
#include "support/generators.hpp"

namespace caselet::testing {

struct ShowIf {
    std::string item;    // single-choice question earlier in document order
    std::string option;  // visible iff that question's answer equals option
};

struct QuestionPlan {
    std::string key;
    enum Kind { Choice, Number, Text } kind = Choice;
    bool required = false;  // hard hasResponse validation
    bool soft = false;      // soft validation that always fails
    std::optional<ShowIf> show_if;
};

struct NodePlan {
    enum Kind { Question, Break, Group } kind = Question;
    QuestionPlan question;               // Question
    std::string group_key;               // Group
    bool randomize = false;              // Group
    std::vector<QuestionPlan> children;  // Group
    std::optional<ShowIf> show_if;       // Break / Group
};

struct SurveyPlan {
    std::vector<NodePlan> nodes;

    std::vector<const QuestionPlan*> questions() const {
        std::vector<const QuestionPlan*> out;
        for (const auto& n : nodes) {
            if (n.kind == NodePlan::Question) out.push_back(&n.question);
            for (const auto& c : n.children) out.push_back(&c);
        }
        return out;
    }
};

inline constexpr const char* kChoiceOptions[] = {"a", "b", "c"};
inline constexpr std::size_t kTextMax = 5;

inline Json plan_condition(const ShowIf& s) {
    return Json::parse(R"({"name":"eq","args":[{"name":"getResponseValue","args":[{"str":")" + s.item +
                       R"("},{"str":"v"}]},{"str":")" + s.option + R"("}]})");
}

inline Json plan_question(const QuestionPlan& q) {
    Json slot = Json::object();
    slot["slotKey"] = "v";
    switch (q.kind) {
        case QuestionPlan::Choice: {
            slot["type"] = "singleChoice";
            Json opts = Json::array();
            for (const char* o : kChoiceOptions) opts.push_back({{"key", o}, {"label", {{"en", std::string("Option ") + o}}}});
            slot["options"] = opts;
            break;
        }
        case QuestionPlan::Number:
            slot["type"] = "numberInput";
            slot["min"] = 0;
            slot["max"] = 10;
            break;
        case QuestionPlan::Text:
            slot["type"] = "textInput";
            slot["maxLen"] = kTextMax;
            break;
    }
    Json item = Json::object();
    item["itemKey"] = q.key;
    item["kind"] = "question";
    if (q.show_if) item["condition"] = plan_condition(*q.show_if);
    item["components"] = Json::array({Json{{"role", "title"}, {"text", {{"en", "Question " + q.key}}}},
                                      Json{{"role", "responseGroup"}, {"response", slot}}});
    Json vals = Json::array();
    if (q.required)
        vals.push_back(Json::parse(R"({"key":"required","severity":"hard","rule":{"name":"hasResponse","args":[{"str":")" +
                                   q.key + R"("},{"str":"v"}]},"message":{"en":"Please answer"}})"));
    if (q.soft)
        vals.push_back(Json::parse(R"({"key":"nudge","severity":"soft","rule":{"bool":false},"message":{"en":"Sure?"}})"));
    if (!vals.empty()) item["validations"] = vals;
    return item;
}

inline Json plan_document(const SurveyPlan& plan, const std::string& survey_key = "gen") {
    Json items = Json::array();
    int breaks = 0;
    for (const auto& n : plan.nodes) {
        switch (n.kind) {
            case NodePlan::Question: items.push_back(plan_question(n.question)); break;
            case NodePlan::Break: {
                Json b = {{"itemKey", "break" + std::to_string(breaks++)}, {"kind", "pageBreak"}};
                if (n.show_if) b["condition"] = plan_condition(*n.show_if);
                items.push_back(b);
                break;
            }
            case NodePlan::Group: {
                Json children = Json::array();
                for (const auto& c : n.children) children.push_back(plan_question(c));
                Json g = {{"itemKey", n.group_key}, {"kind", "group"}};
                if (n.show_if) g["condition"] = plan_condition(*n.show_if);
                g["children"] = children;
                if (n.randomize) g["randomizeChildren"] = true;
                items.push_back(g);
                break;
            }
        }
    }
    Json doc = Json::object();
    doc["format"] = "caselet-survey/1";
    doc["surveyKey"] = survey_key;
    doc["versionId"] = "v1";
    doc["items"] = items;
    return doc;
}

inline SurveyPlan random_plan(Gen& gen) {
    SurveyPlan plan;
    std::vector<std::string> choice_keys;  // candidates for conditions
    int q = 0, g = 0;
    auto question = [&](bool allow_condition) {
        QuestionPlan p;
        p.key = "Q" + std::to_string(q++);
        p.kind = static_cast<QuestionPlan::Kind>(gen.below(3));
        p.required = gen.chance(0.4);
        p.soft = gen.chance(0.15);
        if (allow_condition && !choice_keys.empty() && gen.chance(0.35))
            p.show_if = ShowIf{choice_keys[gen.below(choice_keys.size())], kChoiceOptions[gen.below(3)]};
        return p;
    };
    auto nodes = 3 + gen.below(8);
    for (std::size_t i = 0; i < nodes; ++i) {
        auto roll = gen.below(10);
        NodePlan n;
        if (roll < 6) {
            n.kind = NodePlan::Question;
            n.question = question(true);
            if (n.question.kind == QuestionPlan::Choice) choice_keys.push_back(n.question.key);
        } else if (roll < 8) {
            n.kind = NodePlan::Break;
            if (!choice_keys.empty() && gen.chance(0.3))
                n.show_if = ShowIf{choice_keys[gen.below(choice_keys.size())], kChoiceOptions[gen.below(3)]};
        } else {
            n.kind = NodePlan::Group;
            n.group_key = "G" + std::to_string(g++);
            n.randomize = gen.chance(0.5);
            if (!choice_keys.empty() && gen.chance(0.3))
                n.show_if = ShowIf{choice_keys[gen.below(choice_keys.size())], kChoiceOptions[gen.below(3)]};
            auto kids = gen.below(4);
            // Children only reference questions before the group, so shuffling
            // cannot turn a reference into a forward one.
            for (std::size_t k = 0; k < kids; ++k) n.children.push_back(question(true));
            for (const auto& c : n.children)
                if (c.kind == QuestionPlan::Choice) choice_keys.push_back(c.key);
        }
        plan.nodes.push_back(std::move(n));
    }
    return plan;
}

/// Oracle view of a session derived only from the plan and the answers.
struct OracleView {
    std::vector<std::vector<std::string>> pages;  // visible question keys per page
    std::set<std::string> visible;
    std::vector<std::vector<std::string>> failing;  // failing hard validation item keys per page
};

/// `answers` maps question key -> answer as the test recorded it; `order`
/// returns the shuffled child order of a group.
template <typename OrderFn>
OracleView oracle_view(const SurveyPlan& plan, const std::map<std::string, survey::SlotValue>& answers, OrderFn order) {
    OracleView out;
    std::map<std::string, survey::SlotValue> working = answers;
    auto shown = [&](const std::optional<ShowIf>& s) {
        if (!s) return true;
        auto it = working.find(s->item);
        if (it == working.end()) return false;
        const auto* v = std::get_if<expr::Value>(&it->second);
        return v && v->is_text() && v->as_text() == s->option;
    };
    std::vector<std::string> page;
    auto visit = [&](const QuestionPlan& qp, bool parent) {
        bool vis = parent && shown(qp.show_if);
        if (!vis) {
            working.erase(qp.key);
            return;
        }
        out.visible.insert(qp.key);
        page.push_back(qp.key);
    };
    for (const auto& n : plan.nodes) {
        if (n.kind == NodePlan::Question) {
            visit(n.question, true);
        } else if (n.kind == NodePlan::Break) {
            if (shown(n.show_if) && !page.empty()) out.pages.push_back(std::exchange(page, {}));
        } else {
            bool vis = shown(n.show_if);
            const auto& ord = order(n.group_key);
            for (std::size_t i = 0; i < n.children.size(); ++i) visit(n.children[ord[i]], vis);
        }
    }
    if (!page.empty() || out.pages.empty()) out.pages.push_back(std::move(page));

    std::map<std::string, const QuestionPlan*> by_key;
    for (const auto* q : plan.questions()) by_key[q->key] = q;
    for (const auto& p : out.pages) {
        std::vector<std::string> fails;
        for (const auto& key : p) {
            const auto* q = by_key[key];
            auto it = working.find(key);
            bool answered = it != working.end() && survey::is_answered(it->second);
            if (q->required && !answered) fails.push_back(key);
            if (answered) {
                const auto& v = std::get<expr::Value>(it->second);
                if (q->kind == QuestionPlan::Number && (v.as_number() < 0 || v.as_number() > 10)) fails.push_back(key);
                if (q->kind == QuestionPlan::Text && v.as_text().size() > kTextMax) fails.push_back(key);
            }
        }
        out.failing.push_back(std::move(fails));
    }
    return out;
}

inline survey::SlotValue random_answer(Gen& gen, const QuestionPlan& q) {
    if (gen.chance(0.1)) return expr::Value{};  // clear
    switch (q.kind) {
        case QuestionPlan::Choice: return expr::Value::text(kChoiceOptions[gen.below(3)]);
        case QuestionPlan::Number: return expr::Value::number(static_cast<double>(gen.below(16)) - 3);
        case QuestionPlan::Text: return expr::Value::text(std::string(gen.below(8), 'x'));
    }
    return expr::Value{};
}

}  // namespace caselet::testing
