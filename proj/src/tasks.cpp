#include "morph/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "morph/error.hpp"
#include "morph/util.hpp"

namespace morph::tasks {

namespace {

bool is_slot_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Lowercase slot names in template order.
std::vector<std::string> slots_of(const std::string& text) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        auto j = i + 1;
        while (j < text.size() && is_slot_char(text[j])) ++j;
        if (j > i + 1 && j < text.size() && text[j] == '}') {
            out.push_back(text.substr(i + 1, j - i - 1));
            i = j;
        }
    }
    return out;
}

std::vector<std::string> words_lower(std::string_view raw) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : raw) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::optional<std::string> single_label(std::string_view raw, const std::set<std::string>& labels, std::string& error) {
    std::set<std::string> found;
    for (const auto& w : words_lower(raw)) {
        if (labels.count(w)) found.insert(w);
    }
    if (found.size() == 1) return *found.begin();
    error = found.empty() ? "no label found" : "ambiguous: several labels found";
    return std::nullopt;
}

std::optional<double> first_unit_number(std::string_view raw) {
    std::size_t i = 0;
    while (i < raw.size()) {
        if (!std::isdigit(static_cast<unsigned char>(raw[i])) &&
            !(raw[i] == '.' && i + 1 < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i + 1])))) {
            ++i;
            continue;
        }
        auto j = i;
        while (j < raw.size() && (std::isdigit(static_cast<unsigned char>(raw[j])) || raw[j] == '.')) ++j;
        auto token = raw.substr(i, j - i);
        while (!token.empty() && token.back() == '.') token.remove_suffix(1);
        double v = 0;
        auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec == std::errc() && p == token.data() + token.size() && v >= 0.0 && v <= 1.0) return v;
        i = j;
    }
    return std::nullopt;
}

}  // namespace

PromptSet PromptSet::from_json(const json& doc) {
    PromptSet set;
    try {
        if (doc.value("schema_version", 0) != 1) throw ConfigError("task prompts: unsupported schema_version");
        set.name_ = doc.at("prompt_set").get<std::string>();
        for (const auto& p : doc.at("prompts")) {
            TaskPrompt tp;
            tp.task = parse_task_kind(p.at("task").get<std::string>());
            tp.id = p.at("id").get<std::string>();
            tp.template_text = p.at("template").get<std::string>();
            tp.answer_format_instruction = p.value("answer_format_instruction", "");
            auto slots = slots_of(tp.template_text);
            auto expected = component_names(tp.task);
            auto sorted = slots;
            std::sort(sorted.begin(), sorted.end());
            std::sort(expected.begin(), expected.end());
            if (sorted != expected) {
                throw ConfigError("task prompt " + tp.id + " must use each component of " +
                                  std::string(to_string(tp.task)) + " exactly once");
            }
            if (!set.prompts_.emplace(tp.task, tp).second) {
                throw ConfigError("task prompts: two prompts for " + std::string(to_string(tp.task)));
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("task prompts: ") + e.what());
    } catch (const ParseError& e) {
        throw ConfigError(std::string("task prompts: ") + e.what());
    }
    return set;
}

PromptSet PromptSet::load(const std::filesystem::path& path) {
    try {
        return from_json(json::parse(util::read_text_file(path)));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

PromptSet PromptSet::load_named(const std::filesystem::path& prompts_dir, const std::string& name) {
    auto set = load(prompts_dir / ("tasks." + name + ".json"));
    if (set.name_ != name) throw ConfigError("prompt set file declares '" + set.name_ + "', expected '" + name + "'");
    return set;
}

const TaskPrompt& PromptSet::for_task(TaskKind t) const {
    auto it = prompts_.find(t);
    if (it == prompts_.end()) throw NotFoundError("prompt set '" + name_ + "' has no prompt for " + std::string(to_string(t)));
    return it->second;
}

const TaskPrompt& PromptSet::by_id(const std::string& id) const {
    for (const auto& [t, p] : prompts_) {
        if (p.id == id) return p;
    }
    throw NotFoundError("no task prompt '" + id + "'");
}

std::string render_task_prompt(const TaskPrompt& prompt, const TaskInput& input) {
    input.validate(prompt.task);
    std::string out;
    const auto& text = prompt.template_text;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '{') {
            auto j = i + 1;
            while (j < text.size() && is_slot_char(text[j])) ++j;
            if (j > i + 1 && j < text.size() && text[j] == '}') {
                out += json(input.at(text.substr(i + 1, j - i - 1))).dump();
                i = j;
                continue;
            }
        }
        out += text[i];
    }
    if (!prompt.answer_format_instruction.empty()) out += "\n" + prompt.answer_format_instruction;
    return out;
}

void to_json(json& j, const NormalizedOutput& o) {
    j = json{{"ok", o.ok}, {"value", o.value}, {"raw", o.raw}};
    if (o.intensity) j["intensity"] = *o.intensity;
    if (!o.error.empty()) j["error"] = o.error;
}

void from_json(const json& j, NormalizedOutput& o) {
    o.ok = j.at("ok").get<bool>();
    o.value = j.value("value", "");
    o.raw = j.value("raw", "");
    o.error = j.value("error", "");
    o.intensity.reset();
    if (j.contains("intensity") && j["intensity"].is_number()) o.intensity = j["intensity"].get<double>();
}

NormalizedOutput parse_task_output(TaskKind task, std::string_view raw) {
    NormalizedOutput out;
    out.task = task;
    out.raw = std::string(raw);
    if (util::is_blank(raw)) {
        out.error = "empty response";
        return out;
    }
    switch (task) {
        case TaskKind::NLI: {
            static const std::set<std::string> labels{"entailment", "contradiction", "neutral"};
            if (auto l = single_label(raw, labels, out.error)) {
                out.ok = true;
                out.value = *l;
            }
            break;
        }
        case TaskKind::SA: {
            static const std::set<std::string> labels{"positive", "negative"};
            if (auto l = single_label(raw, labels, out.error)) {
                out.ok = true;
                out.value = *l;
                out.intensity = first_unit_number(raw);
            }
            break;
        }
        case TaskKind::QAc:
        case TaskKind::RE:
            out.ok = true;
            out.value = util::trim(raw);
            break;
    }
    return out;
}

}  // namespace morph::tasks
