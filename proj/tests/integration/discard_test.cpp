#include <gtest/gtest.h>

#include "campaign_support.hpp"
#include "morph/report.hpp"
#include "morph/runner.hpp"
#include "test_support.hpp"

using namespace morph;
using morph::testing::instance;
using morph::testing::TempDir;

namespace {

const json kEchoTransformer = json::parse(R"js({"default": "", "rules": [
    {"match": "^Paraphrase the following text: \"([\\s\\S]*)\" Only output", "response": "$1"}]})js");

const json kMut = json::parse(R"js({"default": "", "rules": [
    {"match": "Nobody speaks", "response": "   "},
    {"match": "^Decide whether", "response": "entailment"},
    {"match": "^Answer the question", "response": "Paris"},
    {"match": "^Identify the relation", "response": "spouse"}]})js");

struct Outcome {
    RunArtifact artifact;
    report::MetricsReport metrics;
};

// One instance per discard trigger:
//   q1  single-sentence context, shuffled by MR-19
//   r1  tail entity missing from the text, swapped by MR-141
//   n1  paraphrase echoed back unchanged (MR-51)
//   n2  model under test answers with whitespace only (MR-49)
Outcome run_discard_campaign(const TempDir& dir) {
    std::map<TaskKind, std::vector<json>> data{
        {TaskKind::QAc,
         {instance("q1", TaskKind::QAc, {{"context", "Paris is the capital of France."}, {"question", "Which city?"}},
                   "Paris")}},
        {TaskKind::RE,
         {instance("r1", TaskKind::RE,
                   {{"text", "Ann married Bo in June."}, {"head_entity", "Ann"}, {"tail_entity", "Cy"}}, "spouse")}},
        {TaskKind::NLI,
         {instance("n1", TaskKind::NLI, {{"premise", "A man runs."}, {"hypothesis", "He moves."}}, "entailment"),
          instance("n2", TaskKind::NLI, {{"premise", "Nobody speaks."}, {"hypothesis", "It is quiet."}}, "entailment")}},
    };
    auto doc = morph::testing::mock_campaign(dir.path(), kMut, kEchoTransformer, data, {19, 49, 51, 141});
    auto cfg = runner::CampaignConfig::from_json(doc, dir.path());
    auto a = runner::run_campaign(cfg, dir / "run");
    auto m = report::compute_metrics(a);
    return {std::move(a), std::move(m)};
}

long discards(const report::Counts& c, DiscardReason r) {
    auto it = c.discards.find(r);
    return it == c.discards.end() ? 0 : it->second;
}

}  // namespace

TEST(Discards, EachTriggerIsTalliedByReasonAndExcludedFromLambda) {
    TempDir dir("discard");
    auto [a, m] = run_discard_campaign(dir);

    const auto& mr19 = m.by_mr.at(19);
    // QAc: context, question and both; RE: text. All single sentences.
    EXPECT_EQ(mr19.discarded, 3 + 1);
    EXPECT_EQ(discards(mr19, DiscardReason::InputRelationUnmet), 4);
    EXPECT_EQ(mr19.groups, 0);

    const auto& mr141 = m.by_mr.at(141);
    EXPECT_EQ(mr141.discarded, 1);
    EXPECT_EQ(discards(mr141, DiscardReason::PreconditionUnmet), 1);

    // The echo fails every MR-51 variant.
    const auto& mr51 = m.by_mr.at(51);
    EXPECT_EQ(discards(mr51, DiscardReason::TransformFailed), mr51.discarded);
    EXPECT_EQ(mr51.discarded, 3 + 2 * 3 + 1);  // QAc, 2 x NLI, RE
    EXPECT_EQ(mr51.groups, 0);

    const auto& mr49 = m.by_mr.at(49);
    EXPECT_EQ(mr49.discarded, 1);
    EXPECT_EQ(discards(mr49, DiscardReason::EmptyModelOutput), 1);
    EXPECT_EQ(mr49.groups, 3);  // q1, r1, n1
    EXPECT_EQ(mr49.violations, 0);

    const auto& all = m.overall;
    EXPECT_EQ(all.discarded, 4 + 1 + 10 + 1);
    EXPECT_EQ(discards(all, DiscardReason::InputRelationUnmet), 4);
    EXPECT_EQ(discards(all, DiscardReason::PreconditionUnmet), 1);
    EXPECT_EQ(discards(all, DiscardReason::TransformFailed), 10);
    EXPECT_EQ(discards(all, DiscardReason::EmptyModelOutput), 1);
    EXPECT_EQ(all.groups, 3);
    EXPECT_EQ(all.groups + all.discarded + all.infra_failed, long(a.results.at("mut").size()));
    EXPECT_DOUBLE_EQ(all.lambda(), 0.0);
    ASSERT_EQ(all.labeled, 3);
    EXPECT_DOUBLE_EQ(*all.quadrant_rate(0), 1.0);
}

TEST(Discards, ResultsCarryTheDetail) {
    TempDir dir("discard");
    auto [a, m] = run_discard_campaign(dir);
    for (const auto& r : a.results.at("mut")) {
        if (!r.discarded()) continue;
        EXPECT_TRUE(r.trace.contains("discard_detail")) << r.group_id;
        EXPECT_FALSE(r.quadrant) << r.group_id;
        const auto* g = a.find_group(r.group_id);
        if (g->mr_id == 19) {
            EXPECT_NE(g->discard_detail.find("two distinct sentences"), std::string::npos);
        }
        if (g->mr_id == 51) {
            EXPECT_NE(g->discard_detail.find("NoChange"), std::string::npos) << g->discard_detail;
        }
    }
}

TEST(Discards, EchoIsRetriedBeforeGivingUp) {
    TempDir dir("discard");
    auto [a, m] = run_discard_campaign(dir);
    for (const auto& g : a.groups) {
        if (g.mr_id != 51) continue;
        for (const auto& [comp, t] : g.trace.items()) {
            if (t.is_object() && t.contains("attempts")) {
                EXPECT_EQ(t["attempts"], 3) << comp;
            }
        }
    }
}

TEST(ParaphraseViolation, FlippedNliLabelLandsInQ3) {
    TempDir dir("fig");
    const json transformer = json::parse(R"js({"default": "", "rules": [
        {"match": "^Paraphrase the following text: \"([\\s\\S]*)\" Only output", "response": "$1 Indeed."}]})js");
    const json mut = json::parse(R"js({"default": "", "rules": [
        {"match": "Indeed", "response": "Entailment"},
        {"match": "^Decide whether", "response": "Neutral"}]})js");
    std::map<TaskKind, std::vector<json>> data{
        {TaskKind::NLI,
         {instance("n1", TaskKind::NLI,
                   {{"premise", "A woman is holding a baby."}, {"hypothesis", "The woman is the baby's mother."}},
                   "neutral")}}};
    auto doc = morph::testing::mock_campaign(dir.path(), mut, transformer, data, {51});
    auto a = runner::run_campaign(runner::CampaignConfig::from_json(doc, dir.path()), dir / "run");
    ASSERT_EQ(a.groups.size(), 3u);  // premise, hypothesis, both
    for (const auto& r : a.results.at("mut")) {
        ASSERT_TRUE(r.verdict);
        EXPECT_EQ(r.outputs[0].value, "neutral");
        EXPECT_EQ(r.outputs[1].value, "entailment");
        EXPECT_EQ(r.verdict->status(), VerdictStatus::Violated);
        EXPECT_EQ(a.find_group(r.group_id)->relation, OutputRelationKind::EquivalenceSyntactic);
        EXPECT_EQ(r.gt_match, true);
        EXPECT_EQ(r.quadrant, Quadrant::Q3_MTFailGTPass);
    }
}
