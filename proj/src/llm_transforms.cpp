#include "morph/llm_transforms.hpp"

#include <algorithm>
#include <regex>

#include "morph/error.hpp"
#include "morph/util.hpp"

namespace morph::llmx {

namespace {

bool is_slot_char(char c) { return (c >= 'A' && c <= 'Z') || c == '_' || (c >= '0' && c <= '9'); }

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

ExpectedChange parse_expected_change(const std::string& s) {
    if (s == "MustDiffer") return ExpectedChange::MustDiffer;
    if (s == "MayEqual") return ExpectedChange::MayEqual;
    throw ConfigError("expected_change must be MustDiffer or MayEqual, not '" + s + "'");
}

bool entity_at(std::string_view text, std::size_t i, std::string_view e) {
    if (e.empty() || text.compare(i, e.size(), e) != 0) return false;
    auto end = i + e.size();
    bool left_ok = i == 0 || !is_word_byte(static_cast<unsigned char>(text[i - 1])) ||
                   !is_word_byte(static_cast<unsigned char>(e.front()));
    bool right_ok = end == text.size() || !is_word_byte(static_cast<unsigned char>(text[end])) ||
                    !is_word_byte(static_cast<unsigned char>(e.back()));
    return left_ok && right_ok;
}

// Longest-first single-pass substitution over whole-word matches.
std::string substitute(std::string_view text, const std::vector<std::pair<std::string_view, std::string_view>>& table) {
    auto order = table;
    std::stable_sort(order.begin(), order.end(), [](auto& a, auto& b) { return a.first.size() > b.first.size(); });
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        bool replaced = false;
        for (const auto& [from, to] : order) {
            if (entity_at(text, i, from)) {
                out += to;
                i += from.size();
                replaced = true;
                break;
            }
        }
        if (!replaced) out += text[i++];
    }
    return out;
}

const std::regex& echo_prefix() {
    static const std::regex re(
        R"(^(?:(?:here is|here's|sure[,!]?\s*here is)[^:\n]{0,60}:|(?:paraphrased text|paraphrase|rewritten text|changed text|modified text|output|answer|result|translation|new sentence|text)\s*:)\s*)",
        std::regex::icase);
    return re;
}

std::string strip_quotes_once(const std::string& s) {
    static const std::vector<std::pair<std::string, std::string>> pairs{
        {"\"", "\""}, {"'", "'"}, {"`", "`"}, {"\xE2\x80\x9C", "\xE2\x80\x9D"}, {"\xE2\x80\x98", "\xE2\x80\x99"},
        {"\xC2\xAB", "\xC2\xBB"}};
    for (const auto& [open, close] : pairs) {
        if (s.size() < open.size() + close.size()) continue;
        if (s.compare(0, open.size(), open) != 0 || s.compare(s.size() - close.size(), close.size(), close) != 0) continue;
        auto inner = s.substr(open.size(), s.size() - open.size() - close.size());
        if (inner.find(open) != std::string::npos || inner.find(close) != std::string::npos) continue;
        return inner;
    }
    return s;
}

json call_entry(int attempt, const llm::ChatResponse* r, const std::string& error) {
    json j{{"attempt", attempt}};
    if (r) j["raw"] = r->text;
    if (!error.empty()) j["error"] = error;
    return j;
}

}  // namespace

// ---- prompts ----

std::vector<std::string> TransformPrompt::slots() const {
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

std::string TransformPrompt::fill(const std::map<std::string, std::string>& values) const {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '{') {
            auto j = i + 1;
            while (j < text.size() && is_slot_char(text[j])) ++j;
            if (j > i + 1 && j < text.size() && text[j] == '}') {
                auto name = text.substr(i + 1, j - i - 1);
                auto it = values.find(name);
                if (it == values.end()) throw PreconditionError("template " + id + ": no value for {" + name + "}");
                out += it->second;
                i = j;
                continue;
            }
        }
        out += text[i];
    }
    return out;
}

PromptLibrary PromptLibrary::from_json(const json& doc) {
    PromptLibrary lib;
    try {
        if (doc.value("schema_version", 0) != 1) throw ConfigError("transform prompts: unsupported schema_version");
        for (const auto& t : doc.at("templates")) {
            TransformPrompt p;
            p.id = t.at("id").get<std::string>();
            p.text = t.at("text").get<std::string>();
            for (const auto& ex : t.value("examples", json::array())) {
                p.examples.emplace_back(ex.at("input").get<std::string>(), ex.at("output").get<std::string>());
            }
            p.expected_change = parse_expected_change(t.value("expected_change", std::string("MustDiffer")));
            auto slots = p.slots();
            if (std::count(slots.begin(), slots.end(), "TEXT") != 1) {
                throw ConfigError("template " + p.id + " must contain {TEXT} exactly once");
            }
            auto sorted = slots;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
                throw ConfigError("template " + p.id + " repeats a slot");
            }
            if (!lib.prompts_.emplace(p.id, p).second) throw ConfigError("duplicate template id " + p.id);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("transform prompts: ") + e.what());
    }
    return lib;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& path) {
    try {
        return from_json(json::parse(util::read_text_file(path)));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

const TransformPrompt& PromptLibrary::get(const std::string& id) const {
    auto it = prompts_.find(id);
    if (it == prompts_.end()) throw NotFoundError("no transform template '" + id + "'");
    return it->second;
}

std::vector<std::string> PromptLibrary::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, p] : prompts_) out.push_back(id);
    return out;
}

std::string_view to_string(FailureKind k) {
    switch (k) {
        case FailureKind::NoChange: return "NoChange";
        case FailureKind::EmptyOutput: return "EmptyOutput";
        case FailureKind::ModelError: return "ModelError";
    }
    return "?";
}

// ---- sanitation ----

std::string sanitize(std::string_view raw) {
    std::string s(raw);
    while (true) {
        auto before = s;
        s = util::trim(s);
        s = std::regex_replace(s, echo_prefix(), "", std::regex_constants::format_first_only);
        s = util::trim(s);
        s = strip_quotes_once(s);
        if (s == before) return s;
    }
}

std::string normalize_for_change(std::string_view s) {
    auto out = util::trim(util::collapse_whitespace(util::to_lower(s)));
    while (!out.empty() && std::string_view(".!?;:,\"' ").find(out.back()) != std::string_view::npos) out.pop_back();
    return out;
}

TransformOutcome transform_with_prompt(const TransformPrompt& prompt, std::string_view text, llm::ChatModel& model,
                                       const TransformOptions& opts) {
    if (util::is_blank(text)) throw PreconditionError("transform " + prompt.id + " needs nonblank text");
    auto values = opts.slots;
    llm::ChatRequest req;
    for (const auto& [in, out] : prompt.examples) {
        values["TEXT"] = in;
        req.messages.push_back({"user", prompt.fill(values)});
        req.messages.push_back({"assistant", out});
    }
    values["TEXT"] = std::string(text);
    req.messages.push_back({"user", prompt.fill(values)});

    TransformOutcome outcome;
    const auto source_norm = normalize_for_change(text);
    for (int attempt = 0; attempt <= std::max(opts.retries, 0); ++attempt) {
        req.run_index = attempt;
        ++outcome.attempts;
        llm::ChatResponse resp;
        try {
            resp = model.chat(req);
        } catch (const TransportError& e) {
            outcome.calls.push_back(call_entry(attempt, nullptr, e.what()));
            outcome.failure = FailureKind::ModelError;
            outcome.failure_detail = e.what();
            continue;
        } catch (const ProtocolError& e) {
            outcome.calls.push_back(call_entry(attempt, nullptr, e.what()));
            outcome.failure = FailureKind::ModelError;
            outcome.failure_detail = e.what();
            continue;
        }
        outcome.calls.push_back(call_entry(attempt, &resp, ""));
        outcome.raw_response = resp.text;
        outcome.output_text = sanitize(resp.text);
        if (outcome.output_text.empty()) {
            outcome.failure = FailureKind::EmptyOutput;
            outcome.failure_detail = "empty response";
            continue;
        }
        if (prompt.expected_change == ExpectedChange::MustDiffer &&
            normalize_for_change(outcome.output_text) == source_norm) {
            outcome.failure = FailureKind::NoChange;
            outcome.failure_detail = "output equals input after normalization";
            continue;
        }
        outcome.failure.reset();
        outcome.failure_detail.clear();
        return outcome;
    }
    return outcome;
}

// ---- entities ----

bool contains_entity(std::string_view text, std::string_view entity) {
    if (entity.empty()) return false;
    for (std::size_t i = 0; i + entity.size() <= text.size(); ++i) {
        if (entity_at(text, i, entity)) return true;
    }
    return false;
}

std::string swap_entities(std::string_view text, std::string_view e1, std::string_view e2) {
    if (e1 == e2) return std::string(text);
    if (!contains_entity(text, e1)) throw PreconditionError("entity '" + std::string(e1) + "' does not occur in the text");
    if (!contains_entity(text, e2)) throw PreconditionError("entity '" + std::string(e2) + "' does not occur in the text");
    return substitute(text, {{e1, e2}, {e2, e1}});
}

std::string replace_entity(std::string_view text, std::string_view from, std::string_view to) {
    if (from.empty()) throw PreconditionError("cannot replace an empty entity");
    return substitute(text, {{from, to}});
}

// ---- composite transforms ----

std::string pivot_language_name(const std::string& code) {
    static const std::map<std::string, std::string> names{
        {"de", "German"}, {"fr", "French"},   {"es", "Spanish"}, {"it", "Italian"}, {"pt", "Portuguese"},
        {"nl", "Dutch"},  {"ru", "Russian"},  {"zh", "Chinese"}, {"ja", "Japanese"}};
    auto it = names.find(code);
    if (it == names.end()) throw PreconditionError("pivot language '" + code + "' is not configured");
    return it->second;
}

TransformOutcome back_translate(std::string_view text, const std::string& pivot, llm::ChatModel& model,
                                const PromptLibrary& library, int retries) {
    if (util::is_blank(text)) throw PreconditionError("back translation needs nonblank text");
    TransformOptions there{retries, {{"LANG", pivot_language_name(pivot)}}};
    auto first = transform_with_prompt(library.get("translate_to_pivot"), text, model, there);
    if (!first.ok()) return first;
    auto second = transform_with_prompt(library.get("translate_from_pivot"), first.output_text, model, {retries, {}});
    second.attempts += first.attempts;
    json calls = first.calls;
    for (auto& c : second.calls) calls.push_back(c);
    second.calls = std::move(calls);
    return second;
}

std::optional<std::string> final_exclamation(std::string_view text) {
    std::string s(text);
    auto end = s.find_last_not_of(" \t\r\n");
    if (end == std::string::npos) return std::nullopt;
    auto pos = end;
    while (pos > 0 && std::string_view("\"')]").find(s[pos]) != std::string_view::npos) --pos;
    char c = s[pos];
    if (c == '.') {
        s[pos] = '!';
        return s;
    }
    if (is_word_byte(static_cast<unsigned char>(c))) {
        s.insert(pos + 1, "!");
        return s;
    }
    return std::nullopt;
}

std::string conjoin(std::string_view first, std::string_view second) {
    auto a = util::trim(first);
    while (!a.empty() && std::string_view(".!?;").find(a.back()) != std::string_view::npos) a.pop_back();
    return a + " and " + util::trim(second);
}

// ---- cross-instance construction ----

namespace {

using datasets::DatasetInstance;

bool entailment(const DatasetInstance& d) {
    return d.task == TaskKind::NLI && d.gold_label && *d.gold_label == "entailment";
}

TaskInput nli_input(std::string premise, std::string hypothesis, const std::string& prompt_id) {
    return TaskInput{{{"premise", std::move(premise)}, {"hypothesis", std::move(hypothesis)}}, prompt_id};
}

std::vector<CrossInstanceGroup> conjoin_pairs(const std::vector<DatasetInstance>& instances, const std::string& prompt_id,
                                              bool share_hypothesis) {
    const std::string shared = share_hypothesis ? "hypothesis" : "premise";
    const std::string varied = share_hypothesis ? "premise" : "hypothesis";
    std::vector<std::string> keys;
    std::map<std::string, std::vector<const DatasetInstance*>> buckets;
    for (const auto& d : instances) {
        if (!entailment(d)) continue;
        auto key = util::trim(d.components.at(shared));
        if (!buckets.count(key)) keys.push_back(key);
        buckets[key].push_back(&d);
    }
    std::vector<CrossInstanceGroup> out;
    for (const auto& key : keys) {
        const auto& b = buckets[key];
        for (std::size_t i = 0; i + 1 < b.size(); i += 2) {
            const auto& a = *b[i];
            const auto& c = *b[i + 1];
            auto joined = conjoin(a.components.at(varied), c.components.at(varied));
            CrossInstanceGroup g;
            auto make = [&](const std::string& v) {
                return share_hypothesis ? nli_input(v, a.components.at(shared), prompt_id)
                                        : nli_input(a.components.at(shared), v, prompt_id);
            };
            g.inputs = {make(a.components.at(varied)), make(c.components.at(varied)), make(joined)};
            g.source_instance_ids = {a.instance_id, c.instance_id};
            g.gold_label = a.gold_label;
            g.trace = {{"construction", share_hypothesis ? "conjoin_premises" : "conjoin_hypotheses"},
                       {"conjoined", joined}};
            out.push_back(std::move(g));
        }
    }
    return out;
}

std::vector<CrossInstanceGroup> implied_groups(const std::vector<DatasetInstance>& instances, const std::string& prompt_id,
                                               bool chain, llm::ChatModel* model, const PromptLibrary* library,
                                               int retries) {
    if (!model || !library) throw ConfigError("chain and fork constructions need a transformation model");
    const auto& prompt = library->get("implied_sentence");
    std::vector<CrossInstanceGroup> out;
    for (const auto& d : instances) {
        if (!entailment(d)) continue;
        const auto& premise = d.components.at("premise");
        const auto& hypothesis = d.components.at("hypothesis");
        const auto& from = chain ? hypothesis : premise;
        auto outcome = transform_with_prompt(prompt, from, *model, {retries, {}});
        CrossInstanceGroup g;
        g.source_instance_ids = {d.instance_id};
        g.gold_label = d.gold_label;
        g.trace = {{"construction", chain ? "chain" : "fork"},
                   {"implied_from", chain ? "hypothesis" : "premise"},
                   {"transform", {{"template", prompt.id}, {"attempts", outcome.attempts}, {"calls", outcome.calls}}}};
        auto source = nli_input(premise, hypothesis, prompt_id);
        if (!outcome.ok()) {
            g.inputs = {source, source};
            g.pre_discard = DiscardReason::TransformFailed;
            g.discard_detail = std::string(to_string(*outcome.failure)) + ": " + outcome.failure_detail;
        } else {
            g.trace["generated"] = outcome.output_text;
            g.inputs = {source, chain ? nli_input(premise, outcome.output_text, prompt_id)
                                      : nli_input(hypothesis, outcome.output_text, prompt_id)};
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace

std::vector<CrossInstanceGroup> build_cross_instance_inputs(const std::string& construction,
                                                            const std::vector<datasets::DatasetInstance>& instances,
                                                            const std::string& prompt_id, llm::ChatModel* model,
                                                            const PromptLibrary* library, int retries) {
    if (construction == "conjoin_premises") return conjoin_pairs(instances, prompt_id, true);
    if (construction == "conjoin_hypotheses") return conjoin_pairs(instances, prompt_id, false);
    if (construction == "chain") return implied_groups(instances, prompt_id, true, model, library, retries);
    if (construction == "fork") return implied_groups(instances, prompt_id, false, model, library, retries);
    throw PreconditionError("unknown cross-instance construction '" + construction + "'");
}

}  // namespace morph::llmx
