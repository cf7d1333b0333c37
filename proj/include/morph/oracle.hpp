#pragma once

// Output-relation judgment and the ground-truth comparison.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "morph/core.hpp"
#include "morph/llm.hpp"
#include "morph/tasks.hpp"

namespace morph::oracle {

struct ComparatorConfig {
    double equivalence_threshold = 0.8;
    double difference_threshold = 0.4;
    double sentiment_epsilon = 0.05;

    // Requires 0 <= difference < equivalence <= 1 and epsilon >= 0.
    void validate() const;
};

void to_json(json& j, const ComparatorConfig& c);
void from_json(const json& j, ComparatorConfig& c);

// Slack applied at threshold boundaries so a score computed as 0.7999999999
// for a nominal 0.8 still counts as reaching it.
inline constexpr double kBoundarySlack = 1e-9;

// Throws PreconditionError on dimension mismatch or a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct OracleTables {
    std::vector<std::string> unknown_phrases;             // canonical form
    std::map<std::string, std::set<std::string>> inverses;  // both directions
    std::set<std::string> symmetric_relations;

    // unknown_phrases.txt, relation_inverses.json, symmetric_relations.txt.
    static OracleTables load(const std::filesystem::path& resource_dir);

    // Lowercase, punctuation to spaces (apostrophes and '/' kept), collapsed.
    static std::string canonical(std::string_view s);
    // canonical(), with every unknown-answer phrasing mapped to "unknown".
    std::string canonical_answer(std::string_view s) const;
    bool is_symmetric(std::string_view relation) const;
    const std::set<std::string>* inverses_of(std::string_view relation) const;
};

// Judges outputs[0] (source) against the follow-ups. NotContradiction looks
// only at the last output. Throws PreconditionError when an output did not
// parse or the count does not fit the relation.
Verdict judge(OutputRelationKind relation, TaskKind task, std::span<const tasks::NormalizedOutput> outputs,
              const ComparatorConfig& cfg, llm::Embedder& embedder, const OracleTables& tables);

// Categorical tasks compare labels exactly; QAc and RE compare by embedding
// similarity against the equivalence threshold.
bool ground_truth_match(TaskKind task, const tasks::NormalizedOutput& source_output, const std::string& label,
                        const ComparatorConfig& cfg, llm::Embedder& embedder, const OracleTables& tables);

}  // namespace morph::oracle
