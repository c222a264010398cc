#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "caselet/expr/context.hpp"
#include "caselet/json.hpp"
#include "caselet/survey/model.hpp"
#include "caselet/survey/response.hpp"

namespace caselet::survey {

using LocalizedText = std::map<std::string, std::string>;

struct ValidationResult {
    std::string item_key;
    std::string key;
    Severity severity = Severity::Hard;
    bool passed = true;
    LocalizedText message;

    friend bool operator==(const ValidationResult&, const ValidationResult&) = default;
};

struct RenderedOption {
    std::string key;
    LocalizedText label;
    bool visible = true;

    friend bool operator==(const RenderedOption&, const RenderedOption&) = default;
};

struct RenderedComponent {
    ComponentRole role = ComponentRole::Title;
    LocalizedText text;

    friend bool operator==(const RenderedComponent&, const RenderedComponent&) = default;
};

struct RenderedSlot {
    const ResponseSlotSpec* spec = nullptr;  // points into the session's definition
    std::vector<RenderedOption> options;
    std::optional<SlotValue> value;          // buffered answer, if any

    friend bool operator==(const RenderedSlot& a, const RenderedSlot& b) {
        return a.spec == b.spec && a.options == b.options && a.value == b.value;
    }
};

struct RenderedItem {
    std::string item_key;
    ItemKind kind = ItemKind::Question;
    std::vector<RenderedComponent> components;
    std::optional<RenderedSlot> slot;
    std::vector<ValidationResult> validations;

    friend bool operator==(const RenderedItem&, const RenderedItem&) = default;
};

struct RenderedSnapshot {
    std::size_t page_index = 0;
    std::size_t page_count = 1;
    std::vector<RenderedItem> items;
    bool can_go_next = true;
    bool can_go_prev = false;
    bool can_submit = false;
    std::vector<std::string> warnings;

    friend bool operator==(const RenderedSnapshot&, const RenderedSnapshot&) = default;
};

/// UI contract encoding. With a locale, texts are narrowed to that locale
/// (falling back to the first available one).
Json encode_snapshot(const RenderedSnapshot& s, const std::optional<std::string>& locale = std::nullopt);

enum class SessionErrorCode { UnknownItem, SlotKindMismatch, NavigationBlocked, AtBoundary, SubmitBlocked, Closed };

std::string_view to_string(SessionErrorCode c);

class SessionError : public std::runtime_error {
public:
    SessionError(SessionErrorCode code, std::string detail, std::vector<ValidationResult> failing = {});

    SessionErrorCode code() const { return code_; }
    /// Failing hard validations for NavigationBlocked / SubmitBlocked.
    const std::vector<ValidationResult>& failing() const { return failing_; }

private:
    SessionErrorCode code_;
    std::vector<ValidationResult> failing_;
};

enum class Direction { Next, Prev };

/// One participant filling in one survey. Single writer: callers serialize
/// operations on a session.
class SurveySession {
public:
    static std::pair<SurveySession, RenderedSnapshot> start(std::shared_ptr<const SurveyDefinition> def,
                                                            expr::EvalContext ctx, std::uint64_t seed,
                                                            Timestamp clock);

    /// A Value of Undefined clears the slot.
    RenderedSnapshot apply_answer(const std::string& item_key, const std::string& slot_key, SlotValue value);
    RenderedSnapshot navigate(Direction dir);
    SurveyResponse finalize(Timestamp clock);

    RenderedSnapshot snapshot() const;
    /// Moves the context clock forward between operations.
    void set_now(Timestamp now) { ctx_.now = now; }

    const SurveyDefinition& definition() const { return *def_; }
    std::size_t page_index() const { return page_index_; }
    std::uint64_t seed() const { return seed_; }
    Timestamp opened_at() const { return opened_at_; }
    bool closed() const { return closed_; }
    /// Child order of a group after seeded shuffling (identity when not randomized).
    const std::vector<std::size_t>& child_order(const std::string& group_key) const;
    /// Buffered answer, including for items that are currently hidden.
    const SlotValue* buffered(const std::string& item_key, const std::string& slot_key) const;

private:
    SurveySession() = default;

    struct Entry {
        const SurveyItem* item;
        bool visible;
    };
    struct Layout {
        std::vector<Entry> entries;               // flattened document order
        std::vector<std::vector<const SurveyItem*>> pages;  // visible non-break items
        SurveyResponse visible_response;          // answers of visible items only
        std::vector<std::string> warnings;
    };

    Layout layout() const;
    void walk(const std::vector<SurveyItem>& items, const std::string& parent, bool parent_visible,
              expr::EvalContext& ctx, Layout& out) const;
    RenderedItem render_item(const SurveyItem& item, const expr::EvalContext& ctx,
                             std::vector<std::string>& warnings) const;
    RenderedSnapshot render(const Layout& lay) const;
    std::vector<ValidationResult> failing_hard(const Layout& lay, std::optional<std::size_t> page) const;
    SurveyResponse buffered_response() const;
    void require_open() const;

    std::shared_ptr<const SurveyDefinition> def_;
    expr::EvalContext ctx_;
    std::size_t page_index_ = 0;
    std::uint64_t seed_ = 0;
    Timestamp opened_at_;
    bool closed_ = false;
    std::map<std::string, std::vector<std::size_t>> order_;
    std::map<std::string, std::map<std::string, SlotValue>> buffer_;
};

/// Renders DynamicText for every locale. Undefined placeholders render as
/// empty text and add a warning.
LocalizedText resolve_text(const DynamicText& text, const expr::EvalContext& ctx, std::vector<std::string>& warnings);
/// Renders a single locale's segments.
std::string resolve_segments(const std::vector<Segment>& segments, const expr::EvalContext& ctx,
                             std::vector<std::string>& warnings);

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace caselet::survey
