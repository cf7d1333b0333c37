#include "morph/catalog.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "morph/error.hpp"
#include "morph/util.hpp"

#ifndef MORPH_DATA_DIR
#define MORPH_DATA_DIR "data"
#endif

namespace morph::catalog {

namespace {

constexpr int kCatalogSize = 191;
constexpr int kSchemaVersion = 1;

const std::set<int>& executable_id_set() {
    static const std::set<int> ids{1,   2,   3,   4,   5,   6,   7,   8,   9,   10,  19,  25,
                                   34,  49,  51,  57,  77,  78,  79,  80,  84,  102, 120, 126,
                                   127, 128, 136, 137, 141, 142, 149, 150, 151, 152, 154, 155};
    return ids;
}

bool is_cross_instance(int id) { return id >= 77 && id <= 80; }

TransformBinding parse_binding(const json& j, int id) {
    TransformBinding b;
    auto kind = j.at("kind").get<std::string>();
    if (kind == "rule") {
        b.kind = BindingKind::Rule;
        b.perturb = transforms::parse_perturb_kind(j.at("perturb").get<std::string>());
        if (transforms::mr_of(*b.perturb) != id) {
            throw ConfigError("MR-" + std::to_string(id) + " bound to perturbation of MR-" +
                              std::to_string(transforms::mr_of(*b.perturb)));
        }
    } else if (kind == "prompt") {
        b.kind = BindingKind::Prompt;
        b.template_id = j.at("template").get<std::string>();
    } else if (kind == "composite") {
        b.kind = BindingKind::Composite;
        b.composite = parse_composite_kind(j.at("composite").get<std::string>());
        b.templates = j.value("templates", std::vector<std::string>{});
    } else if (kind == "none") {
        b.kind = BindingKind::None;
    } else {
        throw ConfigError("MR-" + std::to_string(id) + ": unknown binding kind '" + kind + "'");
    }
    if ((b.kind == BindingKind::None) != is_cross_instance(id)) {
        throw ConfigError("MR-" + std::to_string(id) + ": binding 'none' is reserved for cross-instance MRs");
    }
    return b;
}

MRDefinition parse_entry(const json& j) {
    MRDefinition d;
    d.id = j.at("id").get<int>();
    d.task_tags = j.at("tasks").get<std::vector<std::string>>();
    d.input_relation = j.at("input_relation").get<std::string>();
    d.output_relation = j.at("output_relation").get<std::string>();
    d.source_ref = j.at("source").get<std::string>();
    d.grouping_note = j.value("grouping_note", "");
    d.executable = j.at("executable").get<bool>();
    d.arity = j.value("arity", 2);
    auto where = "MR-" + std::to_string(d.id);
    if (d.arity < 2) throw ConfigError(where + ": arity must be at least 2");
    if (d.executable != (executable_id_set().count(d.id) != 0)) {
        throw ConfigError(where + ": executable flag disagrees with the implemented set");
    }
    if (d.executable) {
        if (!j.contains("binding")) throw ConfigError(where + ": executable entry without binding");
        d.binding = parse_binding(j.at("binding"), d.id);
        for (auto& [task, rel] : j.at("applicable").items()) {
            d.applicable[parse_task_kind(task)] = parse_output_relation(rel.get<std::string>());
        }
        if (d.applicable.empty()) throw ConfigError(where + ": executable entry applies to no task");
    } else if (j.contains("binding") || j.contains("applicable")) {
        throw ConfigError(where + ": metadata-only entry carries a binding");
    }
    return d;
}

}  // namespace

std::string_view to_string(BindingKind k) {
    switch (k) {
        case BindingKind::Rule: return "rule";
        case BindingKind::Prompt: return "prompt";
        case BindingKind::Composite: return "composite";
        case BindingKind::None: return "none";
    }
    return "?";
}

std::string_view to_string(CompositeKind k) {
    switch (k) {
        case CompositeKind::BackTranslate: return "BackTranslate";
        case CompositeKind::EntitySubstitution: return "EntitySubstitution";
        case CompositeKind::EntitySwap: return "EntitySwap";
        case CompositeKind::FinalExclamation: return "FinalExclamation";
    }
    return "?";
}

CompositeKind parse_composite_kind(std::string_view s) {
    for (auto k : {CompositeKind::BackTranslate, CompositeKind::EntitySubstitution, CompositeKind::EntitySwap,
                   CompositeKind::FinalExclamation}) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("unknown composite transformation '" + std::string(s) + "'");
}

OutputRelationKind MRDefinition::relation_for(TaskKind t) const {
    auto it = applicable.find(t);
    if (it == applicable.end()) {
        throw PreconditionError("MR-" + std::to_string(id) + " does not apply to " + std::string(to_string(t)));
    }
    return it->second;
}

Catalog Catalog::from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("schema_version")) throw ConfigError("catalog: missing schema_version");
    if (doc.at("schema_version").get<int>() != kSchemaVersion) throw ConfigError("catalog: unsupported schema_version");
    Catalog c;
    c.version_ = doc.value("version", "");
    try {
        for (const auto& e : doc.at("entries")) c.entries_.push_back(parse_entry(e));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("catalog: ") + e.what());
    } catch (const ParseError& e) {
        throw ConfigError(std::string("catalog: ") + e.what());
    }
    std::sort(c.entries_.begin(), c.entries_.end(), [](auto& a, auto& b) { return a.id < b.id; });
    if (c.entries_.size() != kCatalogSize) {
        throw ConfigError("catalog: expected " + std::to_string(kCatalogSize) + " entries, found " +
                          std::to_string(c.entries_.size()));
    }
    for (int i = 0; i < kCatalogSize; ++i) {
        if (c.entries_[static_cast<std::size_t>(i)].id != i + 1) {
            throw ConfigError("catalog: ids must be 1.." + std::to_string(kCatalogSize) + " each exactly once");
        }
    }
    return c;
}

Catalog Catalog::load(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(util::read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(doc);
}

const Catalog& Catalog::builtin() {
    static const Catalog c = load(default_data_dir() / "catalog.json");
    return c;
}

const MRDefinition& Catalog::lookup(int id) const {
    if (id < 1 || id > static_cast<int>(entries_.size())) {
        throw NotFoundError("no MR with id " + std::to_string(id));
    }
    return entries_[static_cast<std::size_t>(id - 1)];
}

std::vector<int> Catalog::executable_ids() const {
    std::vector<int> out;
    for (const auto& e : entries_) {
        if (e.executable) out.push_back(e.id);
    }
    return out;
}

std::vector<std::pair<int, TaskKind>> Catalog::applicable_pairs() const {
    std::vector<std::pair<int, TaskKind>> out;
    for (const auto& e : entries_) {
        for (auto t : all_tasks()) {
            if (e.applies_to(t)) out.emplace_back(e.id, t);
        }
    }
    return out;
}

std::string cross_construction_for(int mr_id) {
    switch (mr_id) {
        case 77: return "conjoin_premises";
        case 78: return "conjoin_hypotheses";
        case 79: return "chain";
        case 80: return "fork";
        default: throw PreconditionError("MR-" + std::to_string(mr_id) + " is not a cross-instance MR");
    }
}

std::vector<TransformTarget> Catalog::expand_variants(int mr_id, TaskKind task) const {
    const auto& mr = lookup(mr_id);
    mr.relation_for(task);
    if (is_cross_instance(mr_id)) return {TransformTarget::cross(cross_construction_for(mr_id))};
    if (mr_id == 49) return {TransformTarget::all()};
    switch (task) {
        case TaskKind::SA: return {TransformTarget::component("text")};
        case TaskKind::RE:
            if (mr_id == 137) return {TransformTarget::set({"text", "head_entity"})};
            return {TransformTarget::component("text")};
        case TaskKind::QAc:
        case TaskKind::NLI: {
            const auto& names = component_names(task);
            return {TransformTarget::component(names[0]), TransformTarget::component(names[1]),
                    TransformTarget::all()};
        }
    }
    return {};
}

std::vector<std::string> Catalog::self_check(const std::function<bool(const std::string&)>& template_exists) const {
    std::vector<std::string> problems;
    auto where = [](const MRDefinition& e) { return "MR-" + std::to_string(e.id) + ": "; };
    for (const auto& e : entries_) {
        if (!e.executable) continue;
        const auto& b = *e.binding;
        switch (b.kind) {
            case BindingKind::Rule:
                if (!b.perturb) problems.push_back(where(e) + "rule binding without perturbation");
                break;
            case BindingKind::Prompt:
                if (!template_exists(b.template_id)) problems.push_back(where(e) + "missing template " + b.template_id);
                break;
            case BindingKind::Composite:
                for (const auto& t : b.templates) {
                    if (!template_exists(t)) problems.push_back(where(e) + "missing template " + t);
                }
                if (b.composite == CompositeKind::BackTranslate && b.templates.size() != 2) {
                    problems.push_back(where(e) + "back-translation needs two templates");
                }
                break;
            case BindingKind::None:
                if (!is_cross_instance(e.id)) problems.push_back(where(e) + "no transformation bound");
                else if (!template_exists("implied_sentence") && (e.id == 79 || e.id == 80))
                    problems.push_back(where(e) + "missing template implied_sentence");
                break;
        }
        for (const auto& [task, rel] : e.applicable) {
            try {
                auto variants = expand_variants(e.id, task);
                if (variants.empty()) problems.push_back(where(e) + "no variants for " + std::string(to_string(task)));
                for (const auto& v : variants) v.validate(task, e.id);
            } catch (const Error& err) {
                problems.push_back(where(e) + err.what());
            }
        }
        if (e.arity != (e.id == 77 || e.id == 78 ? 3 : 2)) problems.push_back(where(e) + "unexpected arity");
    }
    return problems;
}

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("MORPH_DATA_DIR"); env && *env) return env;
    return MORPH_DATA_DIR;
}

}  // namespace morph::catalog
