#include "morph/core.hpp"

#include <algorithm>
#include <array>

#include "morph/error.hpp"
#include "morph/util.hpp"

namespace morph {

namespace {

constexpr std::array kTasks{TaskKind::QAc, TaskKind::NLI, TaskKind::SA, TaskKind::RE};
constexpr std::array kDiscardReasons{DiscardReason::InputRelationUnmet, DiscardReason::PreconditionUnmet,
                                     DiscardReason::EmptyModelOutput, DiscardReason::TransformFailed};
constexpr std::array kLabelKinds{LabelKind::TP,           LabelKind::FP_input,     LabelKind::FP_output,
                                 LabelKind::FP_output_qa, LabelKind::FP_output_re, LabelKind::FP_mr,
                                 LabelKind::FP_other};

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<Enum, N>& values, std::string_view what) {
    for (Enum v : values) {
        if (to_string(v) == s) return v;
    }
    throw ParseError("unknown " + std::string(what) + ": '" + std::string(s) + "'");
}

}  // namespace

std::span<const TaskKind> all_tasks() { return kTasks; }

std::string_view to_string(TaskKind t) {
    switch (t) {
        case TaskKind::QAc: return "QAc";
        case TaskKind::NLI: return "NLI";
        case TaskKind::SA: return "SA";
        case TaskKind::RE: return "RE";
    }
    return "?";
}

TaskKind parse_task_kind(std::string_view s) {
    auto lower = util::to_lower(s);
    if (lower == "qac" || lower == "qa") return TaskKind::QAc;
    if (lower == "nli") return TaskKind::NLI;
    if (lower == "sa") return TaskKind::SA;
    if (lower == "re") return TaskKind::RE;
    throw ParseError("unknown task: '" + std::string(s) + "'");
}

const std::vector<std::string>& component_names(TaskKind t) {
    static const std::vector<std::string> qac{"context", "question"};
    static const std::vector<std::string> nli{"premise", "hypothesis"};
    static const std::vector<std::string> sa{"text"};
    static const std::vector<std::string> re{"text", "head_entity", "tail_entity"};
    switch (t) {
        case TaskKind::QAc: return qac;
        case TaskKind::NLI: return nli;
        case TaskKind::SA: return sa;
        case TaskKind::RE: return re;
    }
    return sa;
}

std::string_view to_string(OutputRelationKind r) {
    switch (r) {
        case OutputRelationKind::EquivalenceSyntactic: return "EquivalenceSyntactic";
        case OutputRelationKind::EquivalenceSemantic: return "EquivalenceSemantic";
        case OutputRelationKind::DifferenceSemantic: return "DifferenceSemantic";
        case OutputRelationKind::StrongerSentiment: return "StrongerSentiment";
        case OutputRelationKind::OppositeRelation: return "OppositeRelation";
        case OutputRelationKind::NotContradiction: return "NotContradiction";
        case OutputRelationKind::DifferenceSyntactic: return "DifferenceSyntactic";
    }
    return "?";
}

OutputRelationKind parse_output_relation(std::string_view s) {
    constexpr std::array all{OutputRelationKind::EquivalenceSyntactic, OutputRelationKind::EquivalenceSemantic,
                             OutputRelationKind::DifferenceSemantic,   OutputRelationKind::StrongerSentiment,
                             OutputRelationKind::OppositeRelation,     OutputRelationKind::NotContradiction,
                             OutputRelationKind::DifferenceSyntactic};
    return parse_enum(s, all, "output relation");
}

const std::string& TaskInput::at(const std::string& name) const {
    auto it = components.find(name);
    if (it == components.end()) throw PreconditionError("input has no component '" + name + "'");
    return it->second;
}

void TaskInput::validate(TaskKind task) const {
    const auto& names = component_names(task);
    for (const auto& name : names) {
        auto it = components.find(name);
        if (it == components.end()) {
            throw PreconditionError(std::string(to_string(task)) + " input is missing component '" + name + "'");
        }
        if (util::is_blank(it->second)) {
            throw PreconditionError(std::string(to_string(task)) + " input has blank component '" + name + "'");
        }
    }
    for (const auto& [name, _] : components) {
        if (std::find(names.begin(), names.end(), name) == names.end()) {
            throw PreconditionError(std::string(to_string(task)) + " input has unknown component '" + name + "'");
        }
    }
}

TransformTarget TransformTarget::component(std::string name) {
    return TransformTarget{Kind::Component, {std::move(name)}, {}};
}

TransformTarget TransformTarget::all() { return TransformTarget{Kind::AllComponents, {}, {}}; }

TransformTarget TransformTarget::set(std::vector<std::string> names) {
    return TransformTarget{Kind::ComponentSet, std::move(names), {}};
}

TransformTarget TransformTarget::cross(std::string construction_id) {
    return TransformTarget{Kind::CrossInstance, {}, std::move(construction_id)};
}

std::string TransformTarget::tag() const {
    switch (kind) {
        case Kind::Component: return "component:" + components.at(0);
        case Kind::AllComponents: return "all";
        case Kind::ComponentSet: return "set:" + util::join(components, "+");
        case Kind::CrossInstance: return "cross:" + construction;
    }
    return "?";
}

TransformTarget TransformTarget::parse(std::string_view tag) {
    if (tag == "all") return all();
    auto colon = tag.find(':');
    if (colon == std::string_view::npos) throw ParseError("bad transform target tag: '" + std::string(tag) + "'");
    auto head = tag.substr(0, colon);
    auto rest = std::string(tag.substr(colon + 1));
    if (head == "component") return component(rest);
    if (head == "set") return set(util::split(rest, '+'));
    if (head == "cross") return cross(rest);
    throw ParseError("bad transform target tag: '" + std::string(tag) + "'");
}

std::vector<std::string> TransformTarget::resolve(TaskKind task) const {
    switch (kind) {
        case Kind::Component:
        case Kind::ComponentSet: return components;
        case Kind::AllComponents: return component_names(task);
        case Kind::CrossInstance: return {};
    }
    return {};
}

void TransformTarget::validate(TaskKind task, int mr_id) const {
    const auto& names = component_names(task);
    for (const auto& c : components) {
        if (std::find(names.begin(), names.end(), c) == names.end()) {
            throw PreconditionError("component '" + c + "' does not exist in task " + std::string(to_string(task)));
        }
    }
    if ((kind == Kind::Component && components.size() != 1) || (kind == Kind::ComponentSet && components.empty())) {
        throw PreconditionError("malformed transform target " + tag());
    }
    bool cross_mr = mr_id >= 77 && mr_id <= 80;
    if ((kind == Kind::CrossInstance) != cross_mr) {
        throw PreconditionError("cross-instance targets are reserved for MRs 77-80 (got MR-" + std::to_string(mr_id) +
                                " with " + tag() + ")");
    }
}

std::string_view to_string(DiscardReason r) {
    switch (r) {
        case DiscardReason::InputRelationUnmet: return "InputRelationUnmet";
        case DiscardReason::PreconditionUnmet: return "PreconditionUnmet";
        case DiscardReason::EmptyModelOutput: return "EmptyModelOutput";
        case DiscardReason::TransformFailed: return "TransformFailed";
    }
    return "?";
}

DiscardReason parse_discard_reason(std::string_view s) { return parse_enum(s, kDiscardReasons, "discard reason"); }

std::span<const DiscardReason> all_discard_reasons() { return kDiscardReasons; }

std::string_view to_string(VerdictStatus s) {
    switch (s) {
        case VerdictStatus::Satisfied: return "Satisfied";
        case VerdictStatus::Violated: return "Violated";
        case VerdictStatus::Discarded: return "Discarded";
    }
    return "?";
}

VerdictStatus parse_verdict_status(std::string_view s) {
    constexpr std::array all{VerdictStatus::Satisfied, VerdictStatus::Violated, VerdictStatus::Discarded};
    return parse_enum(s, all, "verdict status");
}

Verdict Verdict::satisfied(std::optional<double> score) { return {VerdictStatus::Satisfied, score, std::nullopt}; }

Verdict Verdict::violated(std::optional<double> score) { return {VerdictStatus::Violated, score, std::nullopt}; }

Verdict Verdict::discarded(DiscardReason reason) { return {VerdictStatus::Discarded, std::nullopt, reason}; }

std::string_view to_string(Quadrant q) {
    switch (q) {
        case Quadrant::Q1_BothPass: return "Q1_BothPass";
        case Quadrant::Q2_MTPassGTFail: return "Q2_MTPassGTFail";
        case Quadrant::Q3_MTFailGTPass: return "Q3_MTFailGTPass";
        case Quadrant::Q4_BothFail: return "Q4_BothFail";
    }
    return "?";
}

Quadrant parse_quadrant(std::string_view s) {
    constexpr std::array all{Quadrant::Q1_BothPass, Quadrant::Q2_MTPassGTFail, Quadrant::Q3_MTFailGTPass,
                             Quadrant::Q4_BothFail};
    return parse_enum(s, all, "quadrant");
}

Quadrant classify_quadrant(const Verdict& mr_verdict, bool gt_match) {
    switch (mr_verdict.status()) {
        case VerdictStatus::Satisfied: return gt_match ? Quadrant::Q1_BothPass : Quadrant::Q2_MTPassGTFail;
        case VerdictStatus::Violated: return gt_match ? Quadrant::Q3_MTFailGTPass : Quadrant::Q4_BothFail;
        case VerdictStatus::Discarded: break;
    }
    throw PreconditionError("quadrant undefined for discarded group");
}

std::string compute_group_id(int mr_id, TaskKind task, const TransformTarget& variant,
                             std::span<const std::string> source_instance_ids, std::uint64_t seed) {
    util::Hasher h;
    h.add(std::int64_t{mr_id}).add(to_string(task)).add(variant.tag());
    h.add(static_cast<std::int64_t>(source_instance_ids.size()));
    for (const auto& id : source_instance_ids) h.add(id);
    h.add(util::hex64(seed));
    return h.hex();
}

std::string_view to_string(LabelKind k) {
    switch (k) {
        case LabelKind::TP: return "TP";
        case LabelKind::FP_input: return "FP_input";
        case LabelKind::FP_output: return "FP_output";
        case LabelKind::FP_output_qa: return "FP_output_qa";
        case LabelKind::FP_output_re: return "FP_output_re";
        case LabelKind::FP_mr: return "FP_mr";
        case LabelKind::FP_other: return "FP_other";
    }
    return "?";
}

LabelKind parse_label_kind(std::string_view s) { return parse_enum(s, kLabelKinds, "triage label"); }

std::span<const LabelKind> all_label_kinds() { return kLabelKinds; }

void to_json(json& j, const TaskInput& v) {
    j = json{{"components", v.components}, {"prompt_id", v.prompt_id}};
}

void from_json(const json& j, TaskInput& v) {
    v.components = j.at("components").get<std::map<std::string, std::string>>();
    v.prompt_id = j.at("prompt_id").get<std::string>();
}

void to_json(json& j, const TransformTarget& v) { j = v.tag(); }

void from_json(const json& j, TransformTarget& v) { v = TransformTarget::parse(j.get<std::string>()); }

void to_json(json& j, const Verdict& v) {
    j = json{{"status", to_string(v.status())}};
    if (v.relation_score()) j["relation_score"] = *v.relation_score();
    if (v.discard_reason()) j["discard_reason"] = to_string(*v.discard_reason());
}

Verdict verdict_from_json(const json& j) {
    auto status = parse_verdict_status(j.at("status").get<std::string>());
    std::optional<double> score;
    if (j.contains("relation_score")) score = j.at("relation_score").get<double>();
    switch (status) {
        case VerdictStatus::Satisfied: return Verdict::satisfied(score);
        case VerdictStatus::Violated: return Verdict::violated(score);
        case VerdictStatus::Discarded: break;
    }
    return Verdict::discarded(parse_discard_reason(j.at("discard_reason").get<std::string>()));
}

void to_json(json& j, const TestGroup& v) {
    j = json{{"group_id", v.group_id},
             {"mr_id", v.mr_id},
             {"task", to_string(v.task)},
             {"variant", v.variant},
             {"inputs", v.inputs},
             {"source_instance_ids", v.source_instance_ids},
             {"seed", v.seed},
             {"relation", to_string(v.relation)},
             {"trace", v.trace}};
    j["gold_label"] = v.gold_label ? json(*v.gold_label) : json(nullptr);
    if (v.pre_discard) {
        j["pre_discard"] = to_string(*v.pre_discard);
        j["discard_detail"] = v.discard_detail;
    }
}

void from_json(const json& j, TestGroup& v) {
    v.group_id = j.at("group_id").get<std::string>();
    v.mr_id = j.at("mr_id").get<int>();
    v.task = parse_task_kind(j.at("task").get<std::string>());
    v.variant = j.at("variant").get<TransformTarget>();
    v.inputs = j.at("inputs").get<std::vector<TaskInput>>();
    v.source_instance_ids = j.at("source_instance_ids").get<std::vector<std::string>>();
    v.seed = j.at("seed").get<std::uint64_t>();
    v.relation = parse_output_relation(j.at("relation").get<std::string>());
    v.trace = j.value("trace", json::object());
    v.gold_label.reset();
    if (j.contains("gold_label") && !j.at("gold_label").is_null()) v.gold_label = j.at("gold_label").get<std::string>();
    v.pre_discard.reset();
    v.discard_detail.clear();
    if (j.contains("pre_discard")) {
        v.pre_discard = parse_discard_reason(j.at("pre_discard").get<std::string>());
        v.discard_detail = j.value("discard_detail", "");
    }
}

void to_json(json& j, const TriageLabel& v) {
    j = json{{"violation_id", v.violation_id},
             {"variant", to_string(v.kind)},
             {"annotator", v.annotator},
             {"timestamp", v.timestamp}};
}

void from_json(const json& j, TriageLabel& v) {
    v.violation_id = j.at("violation_id").get<std::string>();
    v.kind = parse_label_kind(j.at("variant").get<std::string>());
    v.annotator = j.at("annotator").get<std::string>();
    v.timestamp = j.value("timestamp", "");
}

}  // namespace morph
