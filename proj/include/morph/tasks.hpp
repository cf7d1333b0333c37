#pragma once

// Zero-shot task prompts and output normalization.

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "morph/core.hpp"

namespace morph::tasks {

struct TaskPrompt {
    TaskKind task = TaskKind::NLI;
    std::string id;
    std::string template_text;  // {component} slots
    std::string answer_format_instruction;
};

class PromptSet {
public:
    // Each template must reference every component of its task exactly once
    // and nothing else. Throws ConfigError.
    static PromptSet load(const std::filesystem::path& path);
    static PromptSet from_json(const json& doc);
    // tasks.<name>.json under `prompts_dir`.
    static PromptSet load_named(const std::filesystem::path& prompts_dir, const std::string& name);

    const std::string& name() const { return name_; }
    const TaskPrompt& for_task(TaskKind t) const;
    // Throws NotFoundError.
    const TaskPrompt& by_id(const std::string& id) const;

private:
    std::string name_;
    std::map<TaskKind, TaskPrompt> prompts_;
};

// Component values are inserted JSON-quoted, so distinct inputs always give
// distinct prompts. Throws PreconditionError for an invalid input.
std::string render_task_prompt(const TaskPrompt& prompt, const TaskInput& input);

struct NormalizedOutput {
    TaskKind task = TaskKind::NLI;
    bool ok = false;
    // NLI label, SA label, or the trimmed answer / relation text.
    std::string value;
    std::optional<double> intensity;  // SA only
    std::string raw;
    std::string error;  // why parsing failed

    bool operator==(const NormalizedOutput&) const = default;
};

void to_json(json& j, const NormalizedOutput& o);
void from_json(const json& j, NormalizedOutput& o);

// NLI: exactly one distinct label word among entailment/contradiction/neutral.
// SA: exactly one of positive/negative, plus the first number in [0, 1] as
// intensity. QAc/RE: trimmed text. Blank responses never parse.
NormalizedOutput parse_task_output(TaskKind task, std::string_view raw);

}  // namespace morph::tasks
