#include "caselet/survey/engine.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "caselet/expr/codec.hpp"
#include "caselet/expr/evaluator.hpp"

namespace caselet::survey {

std::string_view to_string(SessionErrorCode c) {
    switch (c) {
        case SessionErrorCode::UnknownItem: return "UnknownItem";
        case SessionErrorCode::SlotKindMismatch: return "SlotKindMismatch";
        case SessionErrorCode::NavigationBlocked: return "NavigationBlocked";
        case SessionErrorCode::AtBoundary: return "AtBoundary";
        case SessionErrorCode::SubmitBlocked: return "SubmitBlocked";
        case SessionErrorCode::Closed: return "Closed";
    }
    return "?";
}

SessionError::SessionError(SessionErrorCode code, std::string detail, std::vector<ValidationResult> failing)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), failing_(std::move(failing)) {}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::int64_t kDay = 86'400;

std::string format_placeholder(const expr::Value& v, PlaceholderFormat fmt, Timestamp now,
                               std::vector<std::string>& warnings) {
    if (v.is_undefined()) {
        warnings.emplace_back("placeholder resolved to Undefined, rendered empty");
        return {};
    }
    switch (fmt) {
        case PlaceholderFormat::Plain: return expr::display(v);
        case PlaceholderFormat::Integer: {
            auto d = v.numeric();
            if (!d) break;
            return std::to_string(static_cast<std::int64_t>(std::trunc(*d)));
        }
        case PlaceholderFormat::RelativeDate: {
            auto d = v.numeric();
            if (!d) break;
            auto days = static_cast<std::int64_t>(std::trunc((*d - static_cast<double>(now.seconds)) / kDay));
            return (days < 0 ? "-" : "+") + std::to_string(days < 0 ? -days : days) + "d";
        }
    }
    warnings.emplace_back("placeholder value " + expr::describe(v) + " does not fit format " +
                          std::string(to_string(fmt)));
    return {};
}

// Implicit constraints derived from the slot definition. They pass while the
// slot is unanswered.
std::optional<ValidationResult> slot_constraint(const SurveyItem& item, const ResponseSlotSpec& slot,
                                                const SlotValue* value) {
    ValidationResult r;
    r.item_key = item.item_key;
    r.severity = Severity::Hard;
    const expr::Value* v = value ? std::get_if<expr::Value>(value) : nullptr;
    switch (slot.kind) {
        case SlotKind::TextInput:
            r.key = "maxLength";
            r.message["en"] = "At most " + std::to_string(slot.max_len) + " characters";
            r.passed = !(v && v->is_text() && v->as_text().size() > slot.max_len);
            return r;
        case SlotKind::NumberInput:
            if (!slot.min && !slot.max) return std::nullopt;
            r.key = "rangeCheck";
            r.message["en"] = "Value out of range";
            if (v && v->is_number()) {
                double d = v->as_number();
                r.passed = !(slot.min && d < *slot.min) && !(slot.max && d > *slot.max);
            }
            return r;
        case SlotKind::DateInput:
            if (!slot.min_date && !slot.max_date) return std::nullopt;
            r.key = "rangeCheck";
            r.message["en"] = "Date out of range";
            if (v && v->is_timestamp()) {
                auto t = v->as_timestamp();
                r.passed = !(slot.min_date && t < *slot.min_date) && !(slot.max_date && t > *slot.max_date);
            }
            return r;
        default: return std::nullopt;
    }
}

std::vector<ValidationResult> validate_item(const SurveyItem& item, const expr::EvalContext& ctx,
                                            std::vector<std::string>& warnings) {
    std::vector<ValidationResult> out;
    for (const auto& v : item.validations) {
        auto res = expr::evaluate(v.rule, ctx);
        warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
        out.push_back({item.item_key, v.key, v.severity, expr::truthy(res.value), resolve_text(v.message, ctx, warnings)});
    }
    if (const auto* slot = item.slot()) {
        const SlotValue* value = ctx.current_response ? ctx.current_response->find(item.item_key, slot->slot_key) : nullptr;
        if (auto implicit = slot_constraint(item, *slot, value)) {
            bool authored = std::any_of(out.begin(), out.end(), [&](const auto& r) { return r.key == implicit->key; });
            if (!authored) out.push_back(std::move(*implicit));
        }
    }
    return out;
}

Json encode_text(const LocalizedText& t, const std::optional<std::string>& locale) {
    Json out = Json::object();
    if (locale && !t.empty()) {
        auto it = t.find(*locale);
        if (it == t.end()) it = t.begin();
        out[it->first] = it->second;
        return out;
    }
    for (const auto& [k, v] : t) out[k] = v;
    return out;
}

void erase_item(SurveyResponse& r, const std::string& key) {
    std::erase_if(r.items, [&](const ItemAnswer& a) { return a.item_key == key; });
}

}  // namespace

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::uint64_t state = seed;
    for (std::size_t i = n; i > 1; --i) {
        // Rejection sampling keeps the draw unbiased.
        std::uint64_t bound = i;
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t r;
        do r = splitmix64(state);
        while (r >= limit);
        std::swap(idx[i - 1], idx[r % bound]);
    }
    return idx;
}

std::string resolve_segments(const std::vector<Segment>& segments, const expr::EvalContext& ctx,
                             std::vector<std::string>& warnings) {
    std::string s;
    for (const auto& seg : segments) {
        if (const auto* lit = std::get_if<std::string>(&seg)) {
            s += *lit;
            continue;
        }
        const auto& ph = std::get<Placeholder>(seg);
        auto res = expr::evaluate(ph.expr, ctx);
        warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
        s += format_placeholder(res.value, ph.format, ctx.now, warnings);
    }
    return s;
}

LocalizedText resolve_text(const DynamicText& text, const expr::EvalContext& ctx, std::vector<std::string>& warnings) {
    LocalizedText out;
    for (const auto& [locale, segments] : text.locales) out[locale] = resolve_segments(segments, ctx, warnings);
    return out;
}

namespace {

void assign_orders(const std::vector<SurveyItem>& items, std::uint64_t seed,
                   std::map<std::string, std::vector<std::size_t>>& order) {
    for (const auto& item : items) {
        if (item.kind != ItemKind::Group) continue;
        auto& o = order[item.item_key];
        if (item.randomize_children) {
            o = shuffled_indices(item.children.size(), seed ^ fnv1a(item.item_key));
        } else {
            o.resize(item.children.size());
            for (std::size_t i = 0; i < o.size(); ++i) o[i] = i;
        }
        assign_orders(item.children, seed, order);
    }
}

}  // namespace

std::pair<SurveySession, RenderedSnapshot> SurveySession::start(std::shared_ptr<const SurveyDefinition> def,
                                                                expr::EvalContext ctx, std::uint64_t seed,
                                                                Timestamp clock) {
    SurveySession s;
    s.def_ = std::move(def);
    s.ctx_ = std::move(ctx);
    s.ctx_.now = clock;
    s.seed_ = seed;
    s.opened_at_ = clock;
    assign_orders(s.def_->items, seed, s.order_);
    auto snap = s.snapshot();
    return {std::move(s), std::move(snap)};
}

const std::vector<std::size_t>& SurveySession::child_order(const std::string& group_key) const {
    static const std::vector<std::size_t> empty;
    auto it = order_.find(group_key);
    return it == order_.end() ? empty : it->second;
}

const SlotValue* SurveySession::buffered(const std::string& item_key, const std::string& slot_key) const {
    auto it = buffer_.find(item_key);
    if (it == buffer_.end()) return nullptr;
    auto jt = it->second.find(slot_key);
    return jt == it->second.end() ? nullptr : &jt->second;
}

void SurveySession::require_open() const {
    if (closed_) throw SessionError(SessionErrorCode::Closed, "session already submitted");
}

SurveyResponse SurveySession::buffered_response() const {
    SurveyResponse r;
    r.survey_key = def_->survey_key;
    r.version_id = def_->version_id;
    if (ctx_.participant_state) r.participant_ref = ctx_.participant_state->participant_id;
    r.opened_at = opened_at_;
    r.submitted_at = ctx_.now;
    // Document order, so forward references see the same shape every time.
    auto visit = [&](auto&& self, const std::vector<SurveyItem>& items, const std::string& parent) -> void {
        const auto* order = parent.empty() ? nullptr : &child_order(parent);
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto& item = items[order ? (*order)[i] : i];
            if (auto it = buffer_.find(item.item_key); it != buffer_.end()) {
                ItemAnswer a{item.item_key, {}};
                for (const auto& [slot, v] : it->second) a.slots.push_back({slot, v});
                r.items.push_back(std::move(a));
            }
            if (item.kind == ItemKind::Group) self(self, item.children, item.item_key);
        }
    };
    visit(visit, def_->items, "");
    return r;
}

// ctx.current_response is the working response: every buffered answer, minus
// those of items already found hidden earlier in document order.
void SurveySession::walk(const std::vector<SurveyItem>& items, const std::string& parent, bool parent_visible,
                         expr::EvalContext& ctx, Layout& out) const {
    const auto* order = parent.empty() ? nullptr : &child_order(parent);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[order ? (*order)[i] : i];
        bool visible = parent_visible;
        if (visible && item.condition) {
            auto res = expr::evaluate(*item.condition, ctx);
            out.warnings.insert(out.warnings.end(), res.warnings.begin(), res.warnings.end());
            visible = expr::truthy(res.value);
        }
        out.entries.push_back({&item, visible});
        if (!visible && item.kind == ItemKind::Question) erase_item(*ctx.current_response, item.item_key);
        if (item.kind == ItemKind::Group) walk(item.children, item.item_key, visible, ctx, out);
    }
}

SurveySession::Layout SurveySession::layout() const {
    Layout lay;
    expr::EvalContext ctx = ctx_;
    ctx.current_response = buffered_response();
    walk(def_->items, "", true, ctx, lay);
    lay.visible_response = std::move(*ctx.current_response);

    std::vector<const SurveyItem*> page;
    for (const auto& e : lay.entries) {
        if (!e.visible || e.item->kind == ItemKind::Group) continue;
        if (e.item->kind == ItemKind::PageBreak) {
            if (!page.empty()) lay.pages.push_back(std::exchange(page, {}));
            continue;
        }
        page.push_back(e.item);
    }
    if (!page.empty() || lay.pages.empty()) lay.pages.push_back(std::move(page));
    return lay;
}

RenderedItem SurveySession::render_item(const SurveyItem& item, const expr::EvalContext& ctx,
                                        std::vector<std::string>& warnings) const {
    RenderedItem out;
    out.item_key = item.item_key;
    out.kind = item.kind;
    for (const auto& c : item.components) {
        if (c.response) {
            RenderedSlot slot;
            slot.spec = &*c.response;
            for (const auto& o : c.response->options) {
                RenderedOption ro{o.key, resolve_text(o.label, ctx, warnings), true};
                if (o.condition) {
                    auto res = expr::evaluate(*o.condition, ctx);
                    warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
                    ro.visible = expr::truthy(res.value);
                }
                slot.options.push_back(std::move(ro));
            }
            if (const auto* v = buffered(item.item_key, c.response->slot_key)) slot.value = *v;
            out.slot = std::move(slot);
        } else {
            out.components.push_back({c.role, resolve_text(c.text, ctx, warnings)});
        }
    }
    if (item.kind == ItemKind::Question) out.validations = validate_item(item, ctx, warnings);
    return out;
}

std::vector<ValidationResult> SurveySession::failing_hard(const Layout& lay, std::optional<std::size_t> page) const {
    expr::EvalContext ctx = ctx_;
    ctx.current_response = lay.visible_response;
    std::vector<std::string> ignored;
    std::vector<ValidationResult> out;
    for (std::size_t p = 0; p < lay.pages.size(); ++p) {
        if (page && *page != p) continue;
        for (const auto* item : lay.pages[p]) {
            if (item->kind != ItemKind::Question) continue;
            for (auto& r : validate_item(*item, ctx, ignored))
                if (r.severity == Severity::Hard && !r.passed) out.push_back(std::move(r));
        }
    }
    return out;
}

RenderedSnapshot SurveySession::render(const Layout& lay) const {
    RenderedSnapshot snap;
    snap.page_count = lay.pages.size();
    snap.page_index = std::min(page_index_, snap.page_count - 1);
    snap.warnings = lay.warnings;

    expr::EvalContext ctx = ctx_;
    ctx.current_response = lay.visible_response;
    bool gate = true;
    for (const auto* item : lay.pages[snap.page_index]) {
        auto rendered = render_item(*item, ctx, snap.warnings);
        for (const auto& v : rendered.validations)
            if (v.severity == Severity::Hard && !v.passed) gate = false;
        snap.items.push_back(std::move(rendered));
    }
    snap.can_go_next = gate;
    snap.can_go_prev = snap.page_index > 0;
    snap.can_submit = gate && snap.page_index + 1 == snap.page_count;
    return snap;
}

RenderedSnapshot SurveySession::snapshot() const { return render(layout()); }

RenderedSnapshot SurveySession::apply_answer(const std::string& item_key, const std::string& slot_key,
                                             SlotValue value) {
    require_open();
    const auto* item = def_->find(item_key);
    if (item == nullptr || item->kind != ItemKind::Question)
        throw SessionError(SessionErrorCode::UnknownItem, "no question \"" + item_key + "\"");
    const auto* slot = item->slot();
    if (slot == nullptr || slot->slot_key != slot_key)
        throw SessionError(SessionErrorCode::UnknownItem, "question \"" + item_key + "\" has no slot \"" + slot_key + "\"");

    auto mismatch = [&](const std::string& why) {
        return SessionError(SessionErrorCode::SlotKindMismatch,
                            item_key + "." + slot_key + " (" + std::string(to_string(slot->kind)) + "): " + why);
    };

    const auto* scalar = std::get_if<expr::Value>(&value);
    if (scalar && scalar->is_undefined()) {
        if (auto it = buffer_.find(item_key); it != buffer_.end()) {
            it->second.erase(slot_key);
            if (it->second.empty()) buffer_.erase(it);
        }
    } else {
        switch (slot->kind) {
            case SlotKind::SingleChoice:
                if (!scalar || !scalar->is_text()) throw mismatch("expected an option key");
                if (slot->option(scalar->as_text()) == nullptr) throw mismatch("unknown option \"" + scalar->as_text() + "\"");
                break;
            case SlotKind::MultipleChoice: {
                const auto* sel = std::get_if<Selection>(&value);
                if (sel == nullptr) throw mismatch("expected a list of option keys");
                std::set<std::string> seen;
                for (const auto& k : *sel) {
                    if (slot->option(k) == nullptr) throw mismatch("unknown option \"" + k + "\"");
                    if (!seen.insert(k).second) throw mismatch("option \"" + k + "\" selected twice");
                }
                break;
            }
            case SlotKind::TextInput:
                if (!scalar || !scalar->is_text()) throw mismatch("expected text");
                break;
            case SlotKind::NumberInput:
                if (!scalar || !scalar->is_number()) throw mismatch("expected a number");
                break;
            case SlotKind::DateInput:
                if (!scalar || !scalar->is_timestamp()) throw mismatch("expected a timestamp");
                break;
        }
        buffer_[item_key][slot_key] = std::move(value);
    }

    auto lay = layout();
    page_index_ = std::min(page_index_, lay.pages.size() - 1);
    return render(lay);
}

RenderedSnapshot SurveySession::navigate(Direction dir) {
    require_open();
    auto lay = layout();
    page_index_ = std::min(page_index_, lay.pages.size() - 1);
    if (dir == Direction::Prev) {
        if (page_index_ == 0) throw SessionError(SessionErrorCode::AtBoundary, "already on the first page");
        --page_index_;
        return render(lay);
    }
    if (auto failing = failing_hard(lay, page_index_); !failing.empty())
        throw SessionError(SessionErrorCode::NavigationBlocked, "hard validations fail on this page", std::move(failing));
    if (page_index_ + 1 >= lay.pages.size()) throw SessionError(SessionErrorCode::AtBoundary, "already on the last page");
    ++page_index_;
    return render(lay);
}

SurveyResponse SurveySession::finalize(Timestamp clock) {
    require_open();
    ctx_.now = clock;
    auto lay = layout();
    page_index_ = std::min(page_index_, lay.pages.size() - 1);
    if (page_index_ + 1 != lay.pages.size())
        throw SessionError(SessionErrorCode::SubmitBlocked, "submission is only possible from the last page");
    if (auto failing = failing_hard(lay, std::nullopt); !failing.empty())
        throw SessionError(SessionErrorCode::SubmitBlocked, "hard validations fail", std::move(failing));

    SurveyResponse r = std::move(lay.visible_response);
    for (auto& item : r.items) std::erase_if(item.slots, [](const SlotAnswer& s) { return !is_answered(s.value); });
    std::erase_if(r.items, [](const ItemAnswer& a) { return a.slots.empty(); });
    r.opened_at = opened_at_;
    r.submitted_at = std::max(clock, opened_at_);
    closed_ = true;
    return r;
}

Json encode_snapshot(const RenderedSnapshot& s, const std::optional<std::string>& locale) {
    Json items = Json::array();
    for (const auto& it : s.items) {
        Json item = Json::object();
        item["itemKey"] = it.item_key;
        item["kind"] = to_string(it.kind);
        Json comps = Json::array();
        for (const auto& c : it.components) {
            Json comp = Json::object();
            comp["role"] = to_string(c.role);
            comp["text"] = encode_text(c.text, locale);
            comps.push_back(std::move(comp));
        }
        item["components"] = std::move(comps);
        if (it.slot) {
            const auto& spec = *it.slot->spec;
            Json resp = Json::object();
            resp["slotKey"] = spec.slot_key;
            resp["type"] = to_string(spec.kind);
            if (spec.is_choice()) {
                Json opts = Json::array();
                for (const auto& o : it.slot->options) {
                    Json opt = Json::object();
                    opt["key"] = o.key;
                    opt["label"] = encode_text(o.label, locale);
                    opt["visible"] = o.visible;
                    opts.push_back(std::move(opt));
                }
                resp["options"] = std::move(opts);
            }
            if (spec.kind == SlotKind::TextInput) resp["maxLen"] = spec.max_len;
            if (spec.min) resp["min"] = expr::encode_number(*spec.min);
            if (spec.max) resp["max"] = expr::encode_number(*spec.max);
            if (spec.min_date) resp["min"] = spec.min_date->seconds;
            if (spec.max_date) resp["max"] = spec.max_date->seconds;
            if (it.slot->value) resp["value"] = encode_slot_value(*it.slot->value);
            item["response"] = std::move(resp);
        }
        Json vals = Json::array();
        for (const auto& v : it.validations) {
            Json val = Json::object();
            val["key"] = v.key;
            val["severity"] = to_string(v.severity);
            val["passed"] = v.passed;
            val["message"] = encode_text(v.message, locale);
            vals.push_back(std::move(val));
        }
        item["validations"] = std::move(vals);
        items.push_back(std::move(item));
    }
    Json out = Json::object();
    out["pageIndex"] = s.page_index;
    out["pageCount"] = s.page_count;
    out["items"] = std::move(items);
    out["canGoNext"] = s.can_go_next;
    out["canGoPrev"] = s.can_go_prev;
    out["canSubmit"] = s.can_submit;
    out["warnings"] = s.warnings;
    return out;
}

}  // namespace caselet::survey
