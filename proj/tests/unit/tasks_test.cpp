#include <gtest/gtest.h>

#include "morph/catalog.hpp"
#include "morph/error.hpp"
#include "morph/tasks.hpp"

using namespace morph;
using namespace morph::tasks;

namespace {
const PromptSet& prompts() {
    static auto set = PromptSet::load_named(catalog::default_data_dir() / "prompts", "default");
    return set;
}
}  // namespace

TEST(PromptSet, BundledDefault) {
    EXPECT_EQ(prompts().name(), "default");
    for (auto t : all_tasks()) {
        const auto& p = prompts().for_task(t);
        EXPECT_EQ(p.task, t);
        EXPECT_EQ(&prompts().by_id(p.id), &p);
    }
    EXPECT_THROW(prompts().by_id("nope"), NotFoundError);
    EXPECT_THROW(PromptSet::load_named(catalog::default_data_dir() / "prompts", "other"), ConfigError);
}

TEST(PromptSet, RejectsTemplatesWithWrongSlots) {
    auto doc = json::parse(R"({"schema_version":1,"prompt_set":"x","prompts":[
        {"task":"NLI","id":"n","template":"{premise} {premise} {hypothesis}"}]})");
    EXPECT_THROW(PromptSet::from_json(doc), ConfigError);
    doc["prompts"][0]["template"] = "{premise}";
    EXPECT_THROW(PromptSet::from_json(doc), ConfigError);
    doc["prompts"][0]["template"] = "{premise} {hypothesis} {text}";
    EXPECT_THROW(PromptSet::from_json(doc), ConfigError);
    doc["prompts"][0]["template"] = "{premise} / {hypothesis}";
    EXPECT_NO_THROW(PromptSet::from_json(doc));
    doc["prompts"][0]["task"] = "XX";
    EXPECT_THROW(PromptSet::from_json(doc), ConfigError);
}

TEST(Render, QuotesComponentsAndAppendsInstruction) {
    const auto& p = prompts().for_task(TaskKind::NLI);
    TaskInput in{{{"premise", "He said \"hi\"."}, {"hypothesis", "He spoke."}}, p.id};
    auto s = render_task_prompt(p, in);
    EXPECT_NE(s.find("Premise: \"He said \\\"hi\\\".\""), std::string::npos) << s;
    EXPECT_NE(s.find("Hypothesis: \"He spoke.\""), std::string::npos);
    EXPECT_EQ(s.substr(s.size() - p.answer_format_instruction.size()), p.answer_format_instruction);

    TaskInput other = in;
    other.components["premise"] = "He said";
    other.components["hypothesis"] = "\"hi\". He spoke.";
    EXPECT_NE(render_task_prompt(p, other), s);

    TaskInput bad{{{"premise", "x"}}, p.id};
    EXPECT_THROW(render_task_prompt(p, bad), PreconditionError);
}

TEST(Parse, Nli) {
    EXPECT_EQ(parse_task_output(TaskKind::NLI, "Entailment.").value, "entailment");
    EXPECT_EQ(parse_task_output(TaskKind::NLI, "The answer is: neutral").value, "neutral");
    EXPECT_TRUE(parse_task_output(TaskKind::NLI, "contradiction, contradiction").ok);
    auto amb = parse_task_output(TaskKind::NLI, "entailment or neutral");
    EXPECT_FALSE(amb.ok);
    EXPECT_NE(amb.error.find("ambiguous"), std::string::npos);
    EXPECT_FALSE(parse_task_output(TaskKind::NLI, "entailed").ok);
    EXPECT_FALSE(parse_task_output(TaskKind::NLI, "  ").ok);
}

TEST(Parse, Sentiment) {
    auto o = parse_task_output(TaskKind::SA, "Positive, 0.7");
    EXPECT_TRUE(o.ok);
    EXPECT_EQ(o.value, "positive");
    EXPECT_DOUBLE_EQ(*o.intensity, 0.7);
    EXPECT_DOUBLE_EQ(*parse_task_output(TaskKind::SA, "negative (score 5, i.e. .9)").intensity, 0.9);
    EXPECT_DOUBLE_EQ(*parse_task_output(TaskKind::SA, "negative, 1.").intensity, 1.0);
    EXPECT_FALSE(parse_task_output(TaskKind::SA, "positive").intensity.has_value());
    EXPECT_FALSE(parse_task_output(TaskKind::SA, "positive and negative, 0.5").ok);
}

TEST(Parse, FreeTextTasks) {
    EXPECT_EQ(parse_task_output(TaskKind::QAc, "  Paris \n").value, "Paris");
    EXPECT_EQ(parse_task_output(TaskKind::RE, "country").value, "country");
    EXPECT_FALSE(parse_task_output(TaskKind::QAc, "").ok);
}

TEST(Parse, JsonRoundTrip) {
    for (auto [t, raw] : std::vector<std::pair<TaskKind, std::string>>{
             {TaskKind::SA, "positive, 0.25"}, {TaskKind::NLI, "nope"}, {TaskKind::QAc, "Rome"}}) {
        auto o = parse_task_output(t, raw);
        json j = o;
        auto back = j.get<NormalizedOutput>();
        back.task = t;
        EXPECT_EQ(back, o);
    }
}
