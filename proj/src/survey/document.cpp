#include "caselet/survey/document.hpp"

#include <cctype>
#include <set>

#include "caselet/expr/codec.hpp"
#include "caselet/expr/text.hpp"

namespace caselet::survey {

std::string_view to_string(LoadError e) {
    switch (e) {
        case LoadError::MalformedDocument: return "MalformedDocument";
        case LoadError::DuplicateItemKey: return "DuplicateItemKey";
        case LoadError::InvalidExpression: return "InvalidExpression";
        case LoadError::StructureViolation: return "StructureViolation";
    }
    return "?";
}

std::string_view to_string(LintKind k) {
    switch (k) {
        case LintKind::DanglingReference: return "DanglingReference";
        case LintKind::UnreachableItem: return "UnreachableItem";
        case LintKind::EmptyGroup: return "EmptyGroup";
        case LintKind::NoQuestions: return "NoQuestions";
    }
    return "?";
}

SurveyLoadError::SurveyLoadError(LoadError code, std::string where, std::string detail)
    : std::runtime_error(std::string(to_string(code)) + "(" + where + ")" + (detail.empty() ? "" : ": " + detail)),
      code_(code),
      where_(std::move(where)),
      detail_(std::move(detail)) {}

namespace {

[[noreturn]] void malformed(const std::string& path, const std::string& detail) {
    throw SurveyLoadError(LoadError::MalformedDocument, path, detail);
}

[[noreturn]] void structure(const std::string& path, const std::string& detail) {
    throw SurveyLoadError(LoadError::StructureViolation, path, detail);
}

const Json* field(const Json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

std::string required_string(const Json& obj, const char* key, const std::string& path) {
    const auto* f = field(obj, key);
    if (f == nullptr || !f->is_string()) malformed(path + "." + key, "expected a string");
    return f->get<std::string>();
}

std::optional<double> optional_number(const Json& obj, const char* key, const std::string& path) {
    const auto* f = field(obj, key);
    if (f == nullptr) return std::nullopt;
    if (!f->is_number()) malformed(path + "." + key, "expected a number");
    return f->get<double>();
}

const Json& required_array(const Json& obj, const char* key, const std::string& path) {
    const auto* f = field(obj, key);
    if (f == nullptr || !f->is_array()) malformed(path + "." + key, "expected an array");
    return *f;
}

Expression load_expression(const Json& doc, const std::string& path) {
    try {
        return expr::decode(doc);
    } catch (const expr::ExpressionError& e) {
        throw SurveyLoadError(LoadError::InvalidExpression, path, e.what());
    }
}

std::optional<Expression> optional_expression(const Json& obj, const char* key, const std::string& path) {
    const auto* f = field(obj, key);
    if (f == nullptr) return std::nullopt;
    return load_expression(*f, path + "." + key);
}

bool valid_key(std::string_view key) {
    if (key.empty()) return false;
    for (char c : key)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')) return false;
    return key.front() != '.' && key.back() != '.' && key.find("..") == std::string_view::npos;
}

std::optional<PlaceholderFormat> parse_format(std::string_view s) {
    if (s == "plain") return PlaceholderFormat::Plain;
    if (s == "relativeDate") return PlaceholderFormat::RelativeDate;
    if (s == "integer") return PlaceholderFormat::Integer;
    return std::nullopt;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

ResponseSlotSpec load_slot(const Json& doc, const std::string& path) {
    if (!doc.is_object()) malformed(path, "expected an object");
    ResponseSlotSpec slot;
    slot.slot_key = required_string(doc, "slotKey", path);
    if (!valid_key(slot.slot_key)) structure(path + ".slotKey", "invalid key \"" + slot.slot_key + "\"");
    auto type = required_string(doc, "type", path);
    if (type == "singleChoice")
        slot.kind = SlotKind::SingleChoice;
    else if (type == "multipleChoice")
        slot.kind = SlotKind::MultipleChoice;
    else if (type == "textInput")
        slot.kind = SlotKind::TextInput;
    else if (type == "numberInput")
        slot.kind = SlotKind::NumberInput;
    else if (type == "dateInput")
        slot.kind = SlotKind::DateInput;
    else
        structure(path + ".type", "unknown slot type \"" + type + "\"");

    if (slot.is_choice()) {
        const auto& options = required_array(doc, "options", path);
        std::set<std::string> seen;
        for (std::size_t i = 0; i < options.size(); ++i) {
            auto opath = path + ".options[" + std::to_string(i) + "]";
            const auto& o = options[i];
            if (!o.is_object()) malformed(opath, "expected an object");
            ChoiceOption opt;
            opt.key = required_string(o, "key", opath);
            if (!seen.insert(opt.key).second) structure(opath + ".key", "duplicate option key \"" + opt.key + "\"");
            const auto* label = field(o, "label");
            if (label == nullptr) malformed(opath + ".label", "missing");
            opt.label = load_dynamic_text(*label, opath + ".label");
            opt.condition = optional_expression(o, "condition", opath);
            slot.options.push_back(std::move(opt));
        }
        if (slot.options.empty()) structure(path + ".options", "choice slot without options");
    } else if (field(doc, "options") != nullptr) {
        structure(path + ".options", "options only apply to choice slots");
    }

    switch (slot.kind) {
        case SlotKind::TextInput: {
            auto max_len = optional_number(doc, "maxLen", path);
            if (!max_len || *max_len < 1 || *max_len != static_cast<double>(static_cast<std::size_t>(*max_len)))
                structure(path + ".maxLen", "textInput needs a positive integer maxLen");
            slot.max_len = static_cast<std::size_t>(*max_len);
            break;
        }
        case SlotKind::NumberInput:
            slot.min = optional_number(doc, "min", path);
            slot.max = optional_number(doc, "max", path);
            if (slot.min && slot.max && *slot.min > *slot.max) structure(path, "min exceeds max");
            break;
        case SlotKind::DateInput: {
            auto ts = [&](const char* key) -> std::optional<Timestamp> {
                const auto* f = field(doc, key);
                if (f == nullptr) return std::nullopt;
                if (!f->is_number_integer()) malformed(path + "." + key, "expected integer seconds");
                return Timestamp{f->get<std::int64_t>()};
            };
            slot.min_date = ts("min");
            slot.max_date = ts("max");
            if (slot.min_date && slot.max_date && *slot.min_date > *slot.max_date) structure(path, "min exceeds max");
            break;
        }
        default: break;
    }
    return slot;
}

Component load_component(const Json& doc, const std::string& path) {
    if (!doc.is_object()) malformed(path, "expected an object");
    Component c;
    auto role = required_string(doc, "role", path);
    if (role == "title" || role == "subtitle") {
        c.role = role == "title" ? ComponentRole::Title : ComponentRole::Subtitle;
        const auto* text = field(doc, "text");
        if (text == nullptr) malformed(path + ".text", "missing");
        if (field(doc, "response") != nullptr) structure(path, role + " component cannot carry a response");
        c.text = load_dynamic_text(*text, path + ".text");
    } else if (role == "responseGroup") {
        c.role = ComponentRole::ResponseGroup;
        const auto* resp = field(doc, "response");
        if (resp == nullptr) malformed(path + ".response", "missing");
        if (field(doc, "text") != nullptr) structure(path, "responseGroup component cannot carry text");
        c.response = load_slot(*resp, path + ".response");
    } else {
        structure(path + ".role", "unknown role \"" + role + "\"");
    }
    return c;
}

Validation load_validation(const Json& doc, const std::string& path) {
    if (!doc.is_object()) malformed(path, "expected an object");
    Validation v;
    v.key = required_string(doc, "key", path);
    auto severity = required_string(doc, "severity", path);
    if (severity == "hard")
        v.severity = Severity::Hard;
    else if (severity == "soft")
        v.severity = Severity::Soft;
    else
        structure(path + ".severity", "unknown severity \"" + severity + "\"");
    const auto* rule = field(doc, "rule");
    if (rule == nullptr) malformed(path + ".rule", "missing");
    v.rule = load_expression(*rule, path + ".rule");
    if (const auto* msg = field(doc, "message"))
        v.message = load_dynamic_text(*msg, path + ".message");
    else
        v.message = DynamicText::plain("en", v.key);
    return v;
}

SurveyItem load_item(const Json& doc, const std::string& path, std::set<std::string>& keys) {
    if (!doc.is_object()) malformed(path, "expected an object");
    SurveyItem item;
    item.item_key = required_string(doc, "itemKey", path);
    if (!valid_key(item.item_key)) structure(path + ".itemKey", "invalid key \"" + item.item_key + "\"");
    if (!keys.insert(item.item_key).second) throw SurveyLoadError(LoadError::DuplicateItemKey, item.item_key);

    auto kind = required_string(doc, "kind", path);
    if (kind == "group")
        item.kind = ItemKind::Group;
    else if (kind == "question")
        item.kind = ItemKind::Question;
    else if (kind == "display")
        item.kind = ItemKind::Display;
    else if (kind == "pageBreak")
        item.kind = ItemKind::PageBreak;
    else
        structure(path + ".kind", "unknown kind \"" + kind + "\"");

    item.condition = optional_expression(doc, "condition", path);

    const auto* components = field(doc, "components");
    const auto* children = field(doc, "children");
    const auto* validations = field(doc, "validations");
    const auto* randomize = field(doc, "randomizeChildren");

    if (components != nullptr) {
        if (!components->is_array()) malformed(path + ".components", "expected an array");
        for (std::size_t i = 0; i < components->size(); ++i)
            item.components.push_back(
                load_component((*components)[i], path + ".components[" + std::to_string(i) + "]"));
    }
    if (validations != nullptr) {
        if (!validations->is_array()) malformed(path + ".validations", "expected an array");
        std::set<std::string> vkeys;
        for (std::size_t i = 0; i < validations->size(); ++i) {
            auto vpath = path + ".validations[" + std::to_string(i) + "]";
            auto v = load_validation((*validations)[i], vpath);
            if (!vkeys.insert(v.key).second) structure(vpath + ".key", "duplicate validation key \"" + v.key + "\"");
            item.validations.push_back(std::move(v));
        }
    }
    if (randomize != nullptr) {
        if (!randomize->is_boolean()) malformed(path + ".randomizeChildren", "expected a boolean");
        item.randomize_children = randomize->get<bool>();
    }
    if (children != nullptr) {
        if (!children->is_array()) malformed(path + ".children", "expected an array");
        if (item.kind != ItemKind::Group) structure(path + ".children", "only groups have children");
        for (std::size_t i = 0; i < children->size(); ++i)
            item.children.push_back(load_item((*children)[i], path + ".children[" + std::to_string(i) + "]", keys));
    }

    std::size_t response_groups = 0;
    for (const auto& c : item.components) response_groups += c.response.has_value();

    switch (item.kind) {
        case ItemKind::PageBreak:
            if (!item.components.empty() || !item.validations.empty() || children != nullptr || item.randomize_children)
                structure(path, "pageBreak items carry no components, children or validations");
            break;
        case ItemKind::Question:
            if (response_groups != 1) structure(path, "a question needs exactly one responseGroup component");
            if (item.randomize_children) structure(path, "only groups randomize children");
            break;
        case ItemKind::Display:
            if (response_groups != 0) structure(path, "display items cannot collect responses");
            if (!item.validations.empty()) structure(path, "display items carry no validations");
            if (item.randomize_children) structure(path, "only groups randomize children");
            break;
        case ItemKind::Group:
            if (!item.components.empty() || !item.validations.empty())
                structure(path, "groups carry children only");
            break;
    }
    return item;
}

Json encode_slot(const ResponseSlotSpec& slot) {
    Json out = Json::object();
    out["slotKey"] = slot.slot_key;
    out["type"] = to_string(slot.kind);
    if (slot.is_choice()) {
        Json options = Json::array();
        for (const auto& o : slot.options) {
            Json opt = Json::object();
            opt["key"] = o.key;
            opt["label"] = encode_dynamic_text(o.label);
            if (o.condition) opt["condition"] = expr::encode(*o.condition);
            options.push_back(std::move(opt));
        }
        out["options"] = std::move(options);
    }
    if (slot.kind == SlotKind::TextInput) out["maxLen"] = slot.max_len;
    if (slot.min) out["min"] = expr::encode_number(*slot.min);
    if (slot.max) out["max"] = expr::encode_number(*slot.max);
    if (slot.min_date) out["min"] = slot.min_date->seconds;
    if (slot.max_date) out["max"] = slot.max_date->seconds;
    return out;
}

Json encode_item(const SurveyItem& item) {
    Json out = Json::object();
    out["itemKey"] = item.item_key;
    out["kind"] = to_string(item.kind);
    if (item.condition) out["condition"] = expr::encode(*item.condition);
    if (!item.components.empty()) {
        Json comps = Json::array();
        for (const auto& c : item.components) {
            Json comp = Json::object();
            comp["role"] = to_string(c.role);
            if (c.response)
                comp["response"] = encode_slot(*c.response);
            else
                comp["text"] = encode_dynamic_text(c.text);
            comps.push_back(std::move(comp));
        }
        out["components"] = std::move(comps);
    }
    if (item.kind == ItemKind::Group) {
        Json children = Json::array();
        for (const auto& child : item.children) children.push_back(encode_item(child));
        out["children"] = std::move(children);
    }
    if (!item.validations.empty()) {
        Json vals = Json::array();
        for (const auto& v : item.validations) {
            Json val = Json::object();
            val["key"] = v.key;
            val["severity"] = to_string(v.severity);
            val["rule"] = expr::encode(v.rule);
            val["message"] = encode_dynamic_text(v.message);
            vals.push_back(std::move(val));
        }
        out["validations"] = std::move(vals);
    }
    if (item.randomize_children) out["randomizeChildren"] = true;
    return out;
}

void collect_expressions(const SurveyItem& item, const std::string& path,
                         std::vector<std::pair<std::string, const Expression*>>& out) {
    auto text_exprs = [&](const DynamicText& t, const std::string& tpath) {
        for (const auto& [locale, segments] : t.locales)
            for (std::size_t i = 0; i < segments.size(); ++i)
                if (const auto* ph = std::get_if<Placeholder>(&segments[i]))
                    out.emplace_back(tpath + "." + locale + "[" + std::to_string(i) + "]", &ph->expr);
    };
    if (item.condition) out.emplace_back(path + ".condition", &*item.condition);
    for (std::size_t i = 0; i < item.components.size(); ++i) {
        auto cpath = path + ".components[" + std::to_string(i) + "]";
        const auto& c = item.components[i];
        if (!c.response) {
            text_exprs(c.text, cpath + ".text");
            continue;
        }
        for (std::size_t j = 0; j < c.response->options.size(); ++j) {
            auto opath = cpath + ".response.options[" + std::to_string(j) + "]";
            const auto& o = c.response->options[j];
            text_exprs(o.label, opath + ".label");
            if (o.condition) out.emplace_back(opath + ".condition", &*o.condition);
        }
    }
    for (std::size_t i = 0; i < item.validations.size(); ++i) {
        auto vpath = path + ".validations[" + std::to_string(i) + "]";
        out.emplace_back(vpath + ".rule", &item.validations[i].rule);
        text_exprs(item.validations[i].message, vpath + ".message");
    }
    for (std::size_t i = 0; i < item.children.size(); ++i)
        collect_expressions(item.children[i], path + ".children[" + std::to_string(i) + "]", out);
}

void lint_items(const std::vector<SurveyItem>& items, std::vector<LintIssue>& out, std::size_t& questions) {
    for (const auto& item : items) {
        if (item.kind == ItemKind::Question) ++questions;
        if (item.condition && item.condition->is_literal() && item.condition->as_literal() == expr::Value::boolean(false))
            out.push_back({LintKind::UnreachableItem, item.item_key, "condition is literally false"});
        if (item.kind == ItemKind::Group && item.children.empty())
            out.push_back({LintKind::EmptyGroup, item.item_key, "group has no children"});
        lint_items(item.children, out, questions);
    }
}

void dangling(const Expression& e, const SurveyDefinition& def, std::set<std::string>& reported,
              std::vector<LintIssue>& out) {
    if (!e.is_call()) return;
    const auto& c = e.as_call();
    bool refers_to_item = c.name == "getResponseValue" || c.name == "hasResponse" || c.name == "countSelected";
    if (refers_to_item && !c.args.empty() && c.args[0].is_literal() && c.args[0].as_literal().is_text()) {
        const auto& key = c.args[0].as_literal().as_text();
        if (def.find(key) == nullptr && reported.insert(key).second)
            out.push_back({LintKind::DanglingReference, key, c.name + " refers to an item not in this survey"});
    }
    for (const auto& a : c.args) dangling(a, def, reported, out);
}

}  // namespace

std::vector<Segment> parse_template_string(std::string_view s) {
    std::vector<Segment> out;
    std::string literal;
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto open = s.find("{{", pos);
        if (open == std::string_view::npos) {
            literal += s.substr(pos);
            break;
        }
        auto close = s.find("}}", open + 2);
        if (close == std::string_view::npos)
            throw expr::ExpressionError(expr::ErrorCode::SyntaxError, "unterminated placeholder", open);
        literal += s.substr(pos, open - pos);
        if (!literal.empty()) out.emplace_back(std::exchange(literal, {}));

        auto inner = trim(s.substr(open + 2, close - open - 2));
        Placeholder ph;
        for (auto fmt : {PlaceholderFormat::RelativeDate, PlaceholderFormat::Integer, PlaceholderFormat::Plain}) {
            auto prefix = std::string(to_string(fmt)) + ":";
            if (inner.substr(0, prefix.size()) == prefix) {
                ph.format = fmt;
                inner = trim(inner.substr(prefix.size()));
                break;
            }
        }
        ph.expr = expr::parse_text(inner);
        out.emplace_back(std::move(ph));
        pos = close + 2;
    }
    if (!literal.empty()) out.emplace_back(std::move(literal));
    return out;
}

DynamicText load_dynamic_text(const Json& doc, const std::string& path) {
    if (!doc.is_object() || doc.empty()) malformed(path, "expected an object keyed by locale");
    DynamicText text;
    for (const auto& [locale, body] : doc.items()) {
        auto lpath = path + "." + locale;
        std::vector<Segment> segments;
        if (body.is_string()) {
            try {
                segments = parse_template_string(body.get<std::string>());
            } catch (const expr::ExpressionError& e) {
                throw SurveyLoadError(LoadError::InvalidExpression, lpath, e.what());
            }
        } else if (body.is_array()) {
            for (std::size_t i = 0; i < body.size(); ++i) {
                auto spath = lpath + "[" + std::to_string(i) + "]";
                const auto& seg = body[i];
                if (!seg.is_object()) malformed(spath, "expected an object");
                if (const auto* t = field(seg, "text")) {
                    if (!t->is_string()) malformed(spath + ".text", "expected a string");
                    segments.emplace_back(t->get<std::string>());
                    continue;
                }
                const auto* e = field(seg, "expr");
                if (e == nullptr) malformed(spath, "segment needs \"text\" or \"expr\"");
                Placeholder ph;
                ph.expr = load_expression(*e, spath + ".expr");
                if (const auto* f = field(seg, "format")) {
                    auto parsed = f->is_string() ? parse_format(f->get<std::string>()) : std::nullopt;
                    if (!parsed) structure(spath + ".format", "unknown placeholder format");
                    ph.format = *parsed;
                }
                segments.emplace_back(std::move(ph));
            }
        } else {
            malformed(lpath, "expected a string or a segment list");
        }
        text.locales[locale] = std::move(segments);
    }
    return text;
}

Json encode_dynamic_text(const DynamicText& text) {
    Json out = Json::object();
    for (const auto& [locale, segments] : text.locales) {
        Json list = Json::array();
        for (const auto& seg : segments) {
            Json s = Json::object();
            if (const auto* lit = std::get_if<std::string>(&seg)) {
                s["text"] = *lit;
            } else {
                const auto& ph = std::get<Placeholder>(seg);
                s["expr"] = expr::encode(ph.expr);
                s["format"] = to_string(ph.format);
            }
            list.push_back(std::move(s));
        }
        out[locale] = std::move(list);
    }
    return out;
}

SurveyDefinition load_survey(const Json& doc) {
    if (!doc.is_object()) malformed("$", "survey document must be an object");
    const auto* format = field(doc, "format");
    if (format == nullptr || *format != kSurveyFormat)
        malformed("format", std::string("expected \"") + kSurveyFormat + "\"");
    SurveyDefinition def;
    def.survey_key = required_string(doc, "surveyKey", "$");
    def.version_id = required_string(doc, "versionId", "$");
    if (!valid_key(def.survey_key)) structure("surveyKey", "invalid key \"" + def.survey_key + "\"");
    if (const auto* meta = field(doc, "metadata")) {
        if (!meta->is_object()) malformed("metadata", "expected an object");
        for (const auto& [k, v] : meta->items()) {
            if (!v.is_string()) malformed("metadata." + k, "expected a string");
            def.metadata[k] = v.get<std::string>();
        }
    }
    const auto& items = required_array(doc, "items", "$");
    std::set<std::string> keys;
    for (std::size_t i = 0; i < items.size(); ++i)
        def.items.push_back(load_item(items[i], "items[" + std::to_string(i) + "]", keys));
    return def;
}

Json encode_survey(const SurveyDefinition& def) {
    Json out = Json::object();
    out["format"] = kSurveyFormat;
    out["surveyKey"] = def.survey_key;
    out["versionId"] = def.version_id;
    if (!def.metadata.empty()) {
        Json meta = Json::object();
        for (const auto& [k, v] : def.metadata) meta[k] = v;
        out["metadata"] = std::move(meta);
    }
    Json items = Json::array();
    for (const auto& item : def.items) items.push_back(encode_item(item));
    out["items"] = std::move(items);
    return out;
}

std::vector<std::pair<std::string, const Expression*>> expressions_of(const SurveyDefinition& def) {
    std::vector<std::pair<std::string, const Expression*>> out;
    for (std::size_t i = 0; i < def.items.size(); ++i)
        collect_expressions(def.items[i], "items[" + std::to_string(i) + "]", out);
    return out;
}

std::vector<LintIssue> lint_survey(const SurveyDefinition& def) {
    std::vector<LintIssue> out;
    std::set<std::string> reported;
    for (const auto& [path, e] : expressions_of(def)) dangling(*e, def, reported, out);
    std::size_t questions = 0;
    lint_items(def.items, out, questions);
    if (questions == 0) out.push_back({LintKind::NoQuestions, def.survey_key, "survey has no question items"});
    return out;
}

}  // namespace caselet::survey
