#pragma once

// Input transformations performed by prompting a transformation model, plus
// the rule-based helpers that share their pipeline (entity swap, final
// exclamation) and cross-instance group construction.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "morph/core.hpp"
#include "morph/datasets.hpp"
#include "morph/llm.hpp"

namespace morph::llmx {

enum class ExpectedChange { MustDiffer, MayEqual };

struct TransformPrompt {
    std::string id;
    std::string text;  // {TEXT} slot, optionally {LANG}
    std::vector<std::pair<std::string, std::string>> examples;
    ExpectedChange expected_change = ExpectedChange::MustDiffer;

    // Slot names ({NAME}) found in `text`, in order of appearance.
    std::vector<std::string> slots() const;
    // Throws PreconditionError for a missing slot value.
    std::string fill(const std::map<std::string, std::string>& values) const;
};

class PromptLibrary {
public:
    // Every template must contain {TEXT} exactly once and each other slot
    // exactly once. Throws ConfigError.
    static PromptLibrary load(const std::filesystem::path& path);
    static PromptLibrary from_json(const json& doc);

    bool contains(const std::string& id) const { return prompts_.count(id) != 0; }
    // Throws NotFoundError.
    const TransformPrompt& get(const std::string& id) const;
    std::vector<std::string> ids() const;

private:
    std::map<std::string, TransformPrompt> prompts_;
};

enum class FailureKind { NoChange, EmptyOutput, ModelError };
std::string_view to_string(FailureKind k);

struct TransformOutcome {
    std::string output_text;
    std::string raw_response;
    int attempts = 0;
    std::optional<FailureKind> failure;  // empty means valid
    std::string failure_detail;
    json calls = json::array();  // one entry per model call

    bool ok() const { return !failure.has_value(); }
};

struct TransformOptions {
    int retries = 2;  // extra attempts after the first
    std::map<std::string, std::string> slots;  // values besides TEXT
};

// Strips surrounding whitespace and quotes and leading echoes such as
// "Paraphrased text:" until nothing changes.
std::string sanitize(std::string_view raw);
// Case-folded, whitespace-collapsed, terminal punctuation removed.
std::string normalize_for_change(std::string_view s);

// Few-shot examples become alternating user/assistant turns before the
// final request. Attempt n is sent with run_index n so cached retries differ.
// Throws PreconditionError for blank text.
TransformOutcome transform_with_prompt(const TransformPrompt& prompt, std::string_view text, llm::ChatModel& model,
                                       const TransformOptions& opts = {});

// Exchanges every whole-word occurrence of e1 and e2 in one pass (the longer
// entity wins where both match). Returns the text unchanged when e1 == e2.
// Throws PreconditionError when either entity does not occur.
std::string swap_entities(std::string_view text, std::string_view e1, std::string_view e2);
bool contains_entity(std::string_view text, std::string_view entity);
// Whole-word replacement of every occurrence of `from`.
std::string replace_entity(std::string_view text, std::string_view from, std::string_view to);

// Pivot language name for a code, e.g. "de" -> "German". Throws
// PreconditionError for codes outside the pivot table.
std::string pivot_language_name(const std::string& code);
TransformOutcome back_translate(std::string_view text, const std::string& pivot, llm::ChatModel& model,
                                const PromptLibrary& library, int retries = 2);

// Replaces the final '.' with '!' (or appends '!' after a final word).
// Empty when the text already ends in '!' or '?'.
std::optional<std::string> final_exclamation(std::string_view text);

// Conjoins two sentences: "P1 and P2" with P1's terminal punctuation dropped.
std::string conjoin(std::string_view first, std::string_view second);

struct CrossInstanceGroup {
    std::vector<TaskInput> inputs;
    std::vector<std::string> source_instance_ids;
    std::optional<std::string> gold_label;
    std::optional<DiscardReason> pre_discard;
    std::string discard_detail;
    json trace = json::object();
};

// Builds groups for the NLI cross-instance constructions:
//   conjoin_premises   [(P1,H), (P2,H), (P1 and P2, H)]   pairs sharing H
//   conjoin_hypotheses [(P,H1), (P,H2), (P, H1 and H2)]   pairs sharing P
//   chain              [(P,H), (P,S)]  S generated as implied by H
//   fork               [(P,H), (H,S)]  S generated as implied by P
// Only entailment-labeled instances qualify. Pairing uses instances in the
// given order, each instance at most once per construction.
std::vector<CrossInstanceGroup> build_cross_instance_inputs(const std::string& construction,
                                                            const std::vector<datasets::DatasetInstance>& instances,
                                                            const std::string& prompt_id, llm::ChatModel* model,
                                                            const PromptLibrary* library, int retries = 2);

}  // namespace morph::llmx
