#pragma once

// Registry of all catalogued metamorphic relations. 36 carry executable
// bindings; the rest are reference metadata.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "morph/core.hpp"
#include "morph/transforms.hpp"

namespace morph::catalog {

enum class BindingKind { Rule, Prompt, Composite, None };

enum class CompositeKind {
    BackTranslate,       // pivot there and back
    EntitySubstitution,  // swap an entity for another of the same category
    EntitySwap,          // exchange head and tail entities
    FinalExclamation,    // final '.' becomes '!'
};

std::string_view to_string(BindingKind k);
std::string_view to_string(CompositeKind k);
CompositeKind parse_composite_kind(std::string_view s);

struct TransformBinding {
    BindingKind kind = BindingKind::None;
    std::optional<transforms::PerturbKind> perturb;  // Rule
    std::string template_id;                        // Prompt
    std::optional<CompositeKind> composite;         // Composite
    std::vector<std::string> templates;             // Composite: prompt templates it uses
};

struct MRDefinition {
    int id = 0;
    std::vector<std::string> task_tags;  // task codes as catalogued, groups expanded
    std::string input_relation;
    std::string output_relation;  // as catalogued; per-task kind lives in `applicable`
    std::string source_ref;
    std::string grouping_note;
    bool executable = false;
    int arity = 2;
    std::optional<TransformBinding> binding;  // only for executable entries
    std::map<TaskKind, OutputRelationKind> applicable;

    bool applies_to(TaskKind t) const { return applicable.count(t) != 0; }
    // Throws PreconditionError when the MR does not apply to `t`.
    OutputRelationKind relation_for(TaskKind t) const;
};

class Catalog {
public:
    // Validates the file: schema_version, 191 unique ids 1..191, arity >= 2,
    // bindings exactly on executable entries. Throws ConfigError.
    static Catalog load(const std::filesystem::path& path);
    static Catalog from_json(const json& doc);
    // catalog.json from default_data_dir().
    static const Catalog& builtin();

    const std::string& version() const { return version_; }
    const std::vector<MRDefinition>& entries() const { return entries_; }
    // Throws NotFoundError for unknown ids.
    const MRDefinition& lookup(int id) const;
    std::vector<int> executable_ids() const;
    // Every (mr, task) pair the executable MRs apply to, ordered by id then task.
    std::vector<std::pair<int, TaskKind>> applicable_pairs() const;
    // Throws PreconditionError for inapplicable pairs.
    std::vector<TransformTarget> expand_variants(int mr_id, TaskKind task) const;

    // Problems found when resolving every executable binding; empty when the
    // catalog is consistent with the implemented transformations.
    std::vector<std::string> self_check(const std::function<bool(const std::string&)>& template_exists) const;

private:
    std::string version_;
    std::vector<MRDefinition> entries_;  // sorted by id
};

// MORPH_DATA_DIR from the environment if set, else the build-time data path.
std::filesystem::path default_data_dir();

// Construction ids for the cross-instance MRs.
std::string cross_construction_for(int mr_id);

}  // namespace morph::catalog
