#include <gtest/gtest.h>

#include <set>

#include "morph/core.hpp"
#include "morph/error.hpp"

using namespace morph;

TEST(TaskKind, ParseAndComponents) {
    EXPECT_EQ(parse_task_kind("qa"), TaskKind::QAc);
    EXPECT_EQ(parse_task_kind("QAc"), TaskKind::QAc);
    EXPECT_EQ(parse_task_kind("nli"), TaskKind::NLI);
    EXPECT_THROW(parse_task_kind("ner"), ParseError);
    EXPECT_EQ(component_names(TaskKind::RE), (std::vector<std::string>{"text", "head_entity", "tail_entity"}));
    EXPECT_EQ(component_names(TaskKind::NLI), (std::vector<std::string>{"premise", "hypothesis"}));
    for (auto t : all_tasks()) EXPECT_EQ(parse_task_kind(to_string(t)), t);
}

TEST(Enums, RoundTripThroughStrings) {
    for (auto r : all_discard_reasons()) EXPECT_EQ(parse_discard_reason(to_string(r)), r);
    for (auto k : all_label_kinds()) EXPECT_EQ(parse_label_kind(to_string(k)), k);
    EXPECT_EQ(all_label_kinds().size(), 7u);
    EXPECT_EQ(parse_output_relation("NotContradiction"), OutputRelationKind::NotContradiction);
    EXPECT_EQ(parse_quadrant("Q3_MTFailGTPass"), Quadrant::Q3_MTFailGTPass);
    EXPECT_THROW(parse_label_kind("FP"), ParseError);
}

TEST(TaskInput, Validate) {
    TaskInput in{{{"premise", "a"}, {"hypothesis", "b"}}, "nli-0"};
    EXPECT_NO_THROW(in.validate(TaskKind::NLI));
    EXPECT_THROW(in.validate(TaskKind::SA), PreconditionError);
    in.components["hypothesis"] = "  ";
    EXPECT_THROW(in.validate(TaskKind::NLI), PreconditionError);
    in.components.erase("hypothesis");
    EXPECT_THROW(in.validate(TaskKind::NLI), PreconditionError);
    EXPECT_THROW(in.at("hypothesis"), PreconditionError);
}

TEST(TransformTarget, TagsRoundTrip) {
    for (const auto& t : {TransformTarget::component("premise"), TransformTarget::all(),
                          TransformTarget::set({"text", "head_entity"}), TransformTarget::cross("chain")}) {
        EXPECT_EQ(TransformTarget::parse(t.tag()), t);
        json j = t;
        EXPECT_EQ(j.get<TransformTarget>(), t);
    }
    EXPECT_EQ(TransformTarget::set({"text", "head_entity"}).tag(), "set:text+head_entity");
    EXPECT_THROW(TransformTarget::parse("bogus"), ParseError);
}

TEST(TransformTarget, ResolveAndValidate) {
    EXPECT_EQ(TransformTarget::all().resolve(TaskKind::QAc), (std::vector<std::string>{"context", "question"}));
    EXPECT_TRUE(TransformTarget::cross("chain").resolve(TaskKind::NLI).empty());
    EXPECT_NO_THROW(TransformTarget::component("text").validate(TaskKind::SA, 1));
    EXPECT_THROW(TransformTarget::component("premise").validate(TaskKind::SA, 1), PreconditionError);
    EXPECT_NO_THROW(TransformTarget::cross("chain").validate(TaskKind::NLI, 79));
    EXPECT_THROW(TransformTarget::cross("chain").validate(TaskKind::NLI, 8), PreconditionError);
    EXPECT_THROW(TransformTarget::all().validate(TaskKind::NLI, 78), PreconditionError);
}

TEST(Verdict, FactoriesAndQuadrants) {
    auto s = Verdict::satisfied(0.9);
    auto v = Verdict::violated();
    auto d = Verdict::discarded(DiscardReason::EmptyModelOutput);
    EXPECT_TRUE(s.judged());
    EXPECT_FALSE(d.judged());
    EXPECT_EQ(d.discard_reason(), DiscardReason::EmptyModelOutput);
    EXPECT_FALSE(v.discard_reason().has_value());

    EXPECT_EQ(classify_quadrant(s, true), Quadrant::Q1_BothPass);
    EXPECT_EQ(classify_quadrant(s, false), Quadrant::Q2_MTPassGTFail);
    EXPECT_EQ(classify_quadrant(v, true), Quadrant::Q3_MTFailGTPass);
    EXPECT_EQ(classify_quadrant(v, false), Quadrant::Q4_BothFail);
    EXPECT_THROW(classify_quadrant(d, true), PreconditionError);

    for (const auto& x : {s, v, d}) {
        json j = x;
        EXPECT_EQ(verdict_from_json(j), x);
    }
}

TEST(GroupId, StableAndSensitiveToEveryField) {
    std::vector<std::string> ids{"a", "b"};
    auto base = compute_group_id(8, TaskKind::NLI, TransformTarget::all(), ids, 1);
    EXPECT_EQ(base.size(), 16u);
    EXPECT_EQ(base, compute_group_id(8, TaskKind::NLI, TransformTarget::all(), ids, 1));
    std::set<std::string> variants{
        base,
        compute_group_id(9, TaskKind::NLI, TransformTarget::all(), ids, 1),
        compute_group_id(8, TaskKind::QAc, TransformTarget::all(), ids, 1),
        compute_group_id(8, TaskKind::NLI, TransformTarget::component("premise"), ids, 1),
        compute_group_id(8, TaskKind::NLI, TransformTarget::all(), std::vector<std::string>{"ab"}, 1),
        compute_group_id(8, TaskKind::NLI, TransformTarget::all(), ids, 2),
    };
    EXPECT_EQ(variants.size(), 6u);
}

TEST(TestGroup, JsonRoundTrip) {
    TestGroup g;
    g.mr_id = 141;
    g.task = TaskKind::RE;
    g.variant = TransformTarget::component("text");
    g.inputs = {TaskInput{{{"text", "A met B."}, {"head_entity", "A"}, {"tail_entity", "B"}}, "re-0"}};
    g.source_instance_ids = {"r1"};
    g.seed = 0xffffffffffffffffULL;
    g.relation = OutputRelationKind::OppositeRelation;
    g.pre_discard = DiscardReason::PreconditionUnmet;
    g.discard_detail = "relation is not symmetric";
    g.group_id = compute_group_id(g.mr_id, g.task, g.variant, g.source_instance_ids, g.seed);
    json j = g;
    auto back = j.get<TestGroup>();
    EXPECT_EQ(json(back), j);
    EXPECT_EQ(back.seed, g.seed);
    EXPECT_FALSE(back.gold_label.has_value());
    EXPECT_EQ(back.pre_discard, DiscardReason::PreconditionUnmet);
}

TEST(TriageLabel, JsonUsesVariantKey) {
    TriageLabel l{"m:g", LabelKind::FP_output_re, "ann", "2024-01-01T00:00:00Z"};
    json j = l;
    EXPECT_EQ(j.at("variant"), "FP_output_re");
    auto back = j.get<TriageLabel>();
    EXPECT_EQ(back.kind, LabelKind::FP_output_re);
    EXPECT_EQ(back.annotator, "ann");
}
