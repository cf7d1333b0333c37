#pragma once

// Domain types shared by every module. Values only; no I/O.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace morph {

using json = nlohmann::json;

enum class TaskKind { QAc, NLI, SA, RE };

std::span<const TaskKind> all_tasks();
std::string_view to_string(TaskKind t);
// Accepts the canonical codes plus "QA" as an alias of QAc, case-insensitively.
TaskKind parse_task_kind(std::string_view s);
// Ordered input components of a task, e.g. NLI -> {premise, hypothesis}.
const std::vector<std::string>& component_names(TaskKind t);

enum class OutputRelationKind {
    EquivalenceSyntactic,
    EquivalenceSemantic,
    DifferenceSemantic,
    StrongerSentiment,
    OppositeRelation,
    NotContradiction,
    DifferenceSyntactic,
};

std::string_view to_string(OutputRelationKind r);
OutputRelationKind parse_output_relation(std::string_view s);

// A model input <i, p>: the textual components plus the id of the task prompt
// they are rendered into. Follow-ups share the source's prompt_id.
struct TaskInput {
    std::map<std::string, std::string> components;
    std::string prompt_id;

    const std::string& at(const std::string& name) const;
    // Throws PreconditionError unless every component of `task` is present
    // and nonblank, and no foreign component is present.
    void validate(TaskKind task) const;

    bool operator==(const TaskInput&) const = default;
};

// Which part of an input an MR's transformation acts on.
struct TransformTarget {
    enum class Kind { Component, AllComponents, ComponentSet, CrossInstance };

    Kind kind = Kind::AllComponents;
    std::vector<std::string> components;  // Component / ComponentSet
    std::string construction;             // CrossInstance

    static TransformTarget component(std::string name);
    static TransformTarget all();
    static TransformTarget set(std::vector<std::string> names);
    static TransformTarget cross(std::string construction_id);

    // Stable textual tag: "component:premise", "all", "set:text+head_entity",
    // "cross:chain". parse() is its inverse.
    std::string tag() const;
    static TransformTarget parse(std::string_view tag);

    // Component names this target touches for `task` (empty for CrossInstance).
    std::vector<std::string> resolve(TaskKind task) const;
    // Named components must exist in the task; CrossInstance only for MRs 77-80.
    void validate(TaskKind task, int mr_id) const;

    bool operator==(const TransformTarget&) const = default;
};

enum class DiscardReason { InputRelationUnmet, PreconditionUnmet, EmptyModelOutput, TransformFailed };

std::string_view to_string(DiscardReason r);
DiscardReason parse_discard_reason(std::string_view s);
std::span<const DiscardReason> all_discard_reasons();

enum class VerdictStatus { Satisfied, Violated, Discarded };

std::string_view to_string(VerdictStatus s);
VerdictStatus parse_verdict_status(std::string_view s);

// Outcome of the metamorphic oracle for one group. The factory functions are
// the only way to build one, so a discard always carries its reason and a
// judged verdict never does.
class Verdict {
public:
    static Verdict satisfied(std::optional<double> score = std::nullopt);
    static Verdict violated(std::optional<double> score = std::nullopt);
    static Verdict discarded(DiscardReason reason);

    VerdictStatus status() const { return status_; }
    const std::optional<double>& relation_score() const { return score_; }
    const std::optional<DiscardReason>& discard_reason() const { return reason_; }
    bool judged() const { return status_ != VerdictStatus::Discarded; }

    bool operator==(const Verdict&) const = default;

private:
    Verdict(VerdictStatus s, std::optional<double> score, std::optional<DiscardReason> reason)
        : status_(s), score_(score), reason_(reason) {}

    VerdictStatus status_;
    std::optional<double> score_;
    std::optional<DiscardReason> reason_;
};

enum class Quadrant { Q1_BothPass, Q2_MTPassGTFail, Q3_MTFailGTPass, Q4_BothFail };

std::string_view to_string(Quadrant q);
Quadrant parse_quadrant(std::string_view s);

// Joint outcome of the metamorphic oracle and the ground-truth oracle on the
// source output. Throws PreconditionError for discarded verdicts.
Quadrant classify_quadrant(const Verdict& mr_verdict, bool gt_match);

// A source input plus its follow-ups for one MR. inputs[0] is the source.
struct TestGroup {
    std::string group_id;
    int mr_id = 0;
    TaskKind task = TaskKind::NLI;
    TransformTarget variant;
    std::vector<TaskInput> inputs;
    std::vector<std::string> source_instance_ids;
    std::uint64_t seed = 0;

    OutputRelationKind relation = OutputRelationKind::EquivalenceSyntactic;
    // Gold label of the source instance when the dataset has one.
    std::optional<std::string> gold_label;
    // Set when construction already ruled the group out.
    std::optional<DiscardReason> pre_discard;
    std::string discard_detail;
    // Construction details: chosen positions, pool sentence, transform calls.
    json trace = json::object();
};

// Content address of a group: same (mr, task, variant, sources, seed) gives
// the same id in every campaign.
std::string compute_group_id(int mr_id, TaskKind task, const TransformTarget& variant,
                             std::span<const std::string> source_instance_ids, std::uint64_t seed);

enum class LabelKind { TP, FP_input, FP_output, FP_output_qa, FP_output_re, FP_mr, FP_other };

std::string_view to_string(LabelKind k);
// Throws ParseError on an unknown variant name.
LabelKind parse_label_kind(std::string_view s);
std::span<const LabelKind> all_label_kinds();

struct TriageLabel {
    std::string violation_id;
    LabelKind kind = LabelKind::TP;
    std::string annotator;
    std::string timestamp;
};

// ---- JSON ----

void to_json(json& j, const TaskInput& v);
void from_json(const json& j, TaskInput& v);
void to_json(json& j, const TransformTarget& v);
void from_json(const json& j, TransformTarget& v);
void to_json(json& j, const Verdict& v);
Verdict verdict_from_json(const json& j);
void to_json(json& j, const TestGroup& v);
void from_json(const json& j, TestGroup& v);
void to_json(json& j, const TriageLabel& v);
void from_json(const json& j, TriageLabel& v);

}  // namespace morph
