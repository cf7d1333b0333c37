// Acceptance run: one PASS/FAIL line per primary criterion. Exits nonzero if
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "campaign_support.hpp"
#include "metrics_oracle.hpp"
#include "morph/catalog.hpp"
#include "morph/datasets.hpp"
#include "morph/llm_transforms.hpp"
#include "morph/oracle.hpp"
#include "morph/report.hpp"
#include "morph/runner.hpp"
#include "morph/transforms.hpp"
#include "smoke_expectations.hpp"
#include "test_support.hpp"

using namespace morph;
using morph::testing::instance;
using morph::testing::TempDir;
namespace fs = std::filesystem;

namespace {

// Collects failed expectations of one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        if (!ok) ++count_;
    }
    bool ok() const { return count_ == 0; }
    std::string summary() const {
        std::string s = std::to_string(count_) + " failed:";
        for (const auto& f : failures_) s += " [" + f + "]";
        return s;
    }
    std::string note;

private:
    std::vector<std::string> failures_;
    long count_ = 0;
};

std::map<std::string, std::string> artifact_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        auto rel = fs::relative(e.path(), dir);
        if (*rel.begin() == "cache" || !e.is_regular_file()) continue;
        out[rel.generic_string()] = util::read_text_file(e.path());
    }
    return out;
}

const json kParaphraseIndeed = json::parse(R"js({"default": "", "rules": [
    {"match": "^Paraphrase the following text: \"([\\s\\S]*)\" Only output", "response": "$1 Indeed."}]})js");

// ---- criteria ----

void hermetic_campaign(Check& c) {
    TempDir dir("acc-e2e");
    auto cfg = runner::CampaignConfig::load(morph::testing::fixture_dir() / "campaign" / "config.json");
    auto t0 = std::chrono::steady_clock::now();
    auto a = runner::run_campaign(cfg, dir / "run1");
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    runner::run_campaign(cfg, dir / "run2");
    c.expect(seconds < 60.0, "campaign took " + std::to_string(seconds) + " s");

    auto f1 = artifact_files(dir / "run1"), f2 = artifact_files(dir / "run2");
    c.expect(f1.size() == 7 && f1 == f2, "artifacts differ between runs");

    std::map<TaskKind, std::set<int>> mrs;
    std::map<TaskKind, std::set<std::string>> instances;
    for (const auto& g : a.groups) {
        mrs[g.task].insert(g.mr_id);
        for (const auto& id : g.source_instance_ids) instances[g.task].insert(id);
    }
    c.expect(mrs.size() == 4, "tasks covered");
    for (const auto& [t, s] : mrs) {
        c.expect(s.size() >= 8, std::string(to_string(t)) + " has fewer than 8 MRs");
        c.expect(instances[t].size() == 10, std::string(to_string(t)) + " instance count");
    }

    auto m = report::compute_metrics(a);
    const auto& want = morph::testing::smoke_expectations();
    c.expect(m.cells.size() == want.size() * a.models.size(), "cell count");
    for (const auto& model : a.models) {
        for (const auto& [key, e] : want) {
            auto where = model + " MR-" + std::to_string(key.first) + " " + std::string(to_string(key.second));
            auto it = m.cells.find({key.first, key.second, model});
            if (it == m.cells.end()) {
                c.expect(false, where + " missing");
                continue;
            }
            const auto& got = it->second;
            c.expect(got.groups == e.groups && got.violations == e.violations && got.quadrants == e.quadrants &&
                         got.discarded == e.discarded,
                     where);
            c.expect(got.lambda() == double(e.violations) / double(e.groups), where + " lambda");
            for (std::size_t q = 0; q < 4; ++q) {
                c.expect(got.quadrant_rate(q) == double(e.quadrants[q]) / double(e.groups), where + " quadrant rate");
            }
        }
    }
    std::ostringstream note;
    note.precision(3);
    note << a.groups.size() << " groups x " << a.models.size() << " models in " << seconds << " s";
    c.note = note.str();
}

void paraphrase_violation(Check& c) {
    TempDir dir("acc-nli");
    const json mut = json::parse(R"js({"default": "", "rules": [
        {"match": "Indeed", "response": "entailment"},
        {"match": "^Decide whether", "response": "neutral"}]})js");
    std::map<TaskKind, std::vector<json>> data{
        {TaskKind::NLI,
         {instance("n1", TaskKind::NLI,
                   {{"premise", "A woman is holding a baby."}, {"hypothesis", "The woman is the baby's mother."}},
                   "neutral")}}};
    auto doc = morph::testing::mock_campaign(dir.path(), mut, kParaphraseIndeed, data, {51});
    auto a = runner::run_campaign(runner::CampaignConfig::from_json(doc, dir.path()), dir / "run");
    const auto& rs = a.results.at("mut");
    c.expect(!rs.empty(), "no groups");
    for (const auto& r : rs) {
        const auto* g = a.find_group(r.group_id);
        c.expect(g->relation == OutputRelationKind::EquivalenceSyntactic, "relation");
        c.expect(r.outputs.size() == 2 && r.outputs[0].value == "neutral" && r.outputs[1].value == "entailment",
                 "outputs");
        c.expect(r.verdict && r.verdict->status() == VerdictStatus::Violated, "verdict");
        c.expect(r.quadrant == Quadrant::Q3_MTFailGTPass, "quadrant");
    }
    c.note = std::to_string(rs.size()) + " variants Violated/Q3";
}

void oracle_thresholds(Check& c) {
    auto tables = oracle::OracleTables::load(catalog::default_data_dir() / "resources");
    json emb{{"src", {1.0, 0.0}}};
    for (double cos : {0.85, 0.80, 0.79, 0.35, 0.40, 0.41}) {
        emb["f" + std::to_string(std::lround(cos * 100))] = {cos, std::sqrt(1.0 - cos * cos)};
    }
    auto e = llm::MockBackend::from_json({{"default", ""}, {"embedding_dim", 2}, {"embeddings", emb}});
    auto judge = [&](OutputRelationKind rel, double cos) {
        std::vector<tasks::NormalizedOutput> outs(2);
        for (auto& o : outs) {
            o.task = TaskKind::QAc;
            o.ok = true;
        }
        outs[0].value = outs[0].raw = "src";
        outs[1].value = outs[1].raw = "f" + std::to_string(std::lround(cos * 100));
        return oracle::judge(rel, TaskKind::QAc, outs, {}, *e, tables).status();
    };
    using S = VerdictStatus;
    const std::vector<std::tuple<OutputRelationKind, double, S>> cases{
        {OutputRelationKind::EquivalenceSemantic, 0.85, S::Satisfied},
        {OutputRelationKind::EquivalenceSemantic, 0.80, S::Satisfied},
        {OutputRelationKind::EquivalenceSemantic, 0.79, S::Violated},
        {OutputRelationKind::DifferenceSemantic, 0.35, S::Satisfied},
        {OutputRelationKind::DifferenceSemantic, 0.40, S::Satisfied},
        {OutputRelationKind::DifferenceSemantic, 0.41, S::Violated}};
    std::string got;
    for (const auto& [rel, cos, want] : cases) {
        auto s = judge(rel, cos);
        c.expect(s == want, std::string(to_string(rel)) + " at " + std::to_string(cos));
        got += std::string(to_string(s)).substr(0, 1);
    }
    c.note = "got " + got;
}

void metrics_identities(Check& c) {
    constexpr int kArtifacts = 1000;
    util::Rng rng(4242);
    for (int n = 0; n < kArtifacts; ++n) {
        auto run = morph::testing::random_run(rng);
        auto m = report::compute_metrics(run.groups, run.results, false);
        auto err = morph::testing::check_metrics(run, m);
        c.expect(err.empty(), "artifact " + std::to_string(n) + ": " + err);
    }
    c.note = std::to_string(kArtifacts) + " artifacts";
}

void transform_properties(Check& c) {
    using namespace transforms;
    constexpr int kCases = 10000;
    auto tables = std::make_shared<const ResourceTables>(ResourceTables::load(catalog::default_data_dir() / "resources"));
    const std::vector<std::string> words{"the", "river", "Paris", "is", "a", "capital", "NASA", "élan", "dog's", "42"};
    auto sentence = [&](util::Rng& rng) {
        std::string s;
        for (auto i = 1 + rng.below(7); i > 0; --i) s += (s.empty() ? "" : " ") + words[rng.below(words.size())];
        return s + (rng.below(2) ? "." : "!");
    };
    auto text = [&](util::Rng& rng) {
        std::string s;
        for (auto i = 1 + rng.below(4); i > 0; --i) s += (s.empty() ? "" : " ") + sentence(rng);
        return s;
    };
    auto config = [&](util::Rng& rng) {
        return PerturbConfig{0.05 + 0.45 * rng.unit(), rng.next(), tables};
    };
    auto sorted = [](std::string_view s) {
        auto u = util::utf8_decode(s);
        std::sort(u.begin(), u.end());
        return u;
    };

    util::Rng rng(77);
    for (int i = 0; i < kCases; ++i) {
        auto t = text(rng);
        auto cfg = config(rng);
        for (auto kind : all_perturb_kinds()) {
            c.expect(perturb(kind, t, cfg) == perturb(kind, t, cfg), "determinism " + std::string(to_string(kind)));
        }
        c.expect(perturb(PerturbKind::Identity, t, cfg) == t, "identity");
        c.expect(sorted(perturb(PerturbKind::SwapAdjacentChars, t, cfg)) == sorted(t), "swap multiset");
        c.expect(util::utf8_decode(perturb(PerturbKind::DeleteChar, t, cfg)).size() < util::utf8_decode(t).size(),
                 "delete length");
        c.expect(perturb(PerturbKind::LeetConvert, "leet", cfg) == "l337", "leet golden");
        auto before = split_sentences(t), after = split_sentences(perturb(PerturbKind::ShuffleSentences, t, cfg));
        std::sort(before.begin(), before.end());
        std::sort(after.begin(), after.end());
        c.expect(before == after, "shuffle multiset");
    }
    const std::vector<std::string> names{"Marie Curie", "Warsaw", "Acme Corp", "Bo", "New York City"};
    for (int i = 0; i < kCases; ++i) {
        auto a = rng.below(names.size());
        auto b = (a + 1 + rng.below(names.size() - 1)) % names.size();
        auto t = sentence(rng) + " " + names[a] + " " + sentence(rng) + " " + names[b] + ".";
        auto once = llmx::swap_entities(t, names[a], names[b]);
        c.expect(once != t && llmx::swap_entities(once, names[a], names[b]) == t, "swap_entities involution");
    }
    c.note = std::to_string(kCases) + " cases per property";
}

void variant_expansion(Check& c) {
    const auto& cat = catalog::Catalog::builtin();
    auto nli8 = cat.expand_variants(8, TaskKind::NLI).size();
    auto sa150 = cat.expand_variants(150, TaskKind::SA).size();
    auto pairs = cat.applicable_pairs().size();
    c.expect(nli8 == 3, "(MR-8, NLI) = " + std::to_string(nli8));
    c.expect(sa150 == 1, "(MR-150, SA) = " + std::to_string(sa150));
    c.expect(pairs == 108, "pairs = " + std::to_string(pairs));
    c.note = std::to_string(nli8) + "/" + std::to_string(sa150) + "/" + std::to_string(pairs);
}

void flakiness(Check& c) {
    TempDir dir("acc-flaky");
    const json mut = json::parse(R"js({"default": "", "rules": [
        {"match": "Indeed", "responses": ["entailment", "entailment", "entailment", "neutral"]},
        {"match": "^Decide whether", "response": "neutral"}]})js");
    std::map<TaskKind, std::vector<json>> data{
        {TaskKind::NLI,
         {instance("f", TaskKind::NLI, {{"premise", "Birds sing."}, {"hypothesis", "Birds make noise."}}, "neutral")}}};
    auto doc = morph::testing::mock_campaign(dir.path(), mut, kParaphraseIndeed, data, {51});
    auto cfg = runner::CampaignConfig::from_json(doc, dir.path());
    runner::run_campaign(cfg, dir / "run");
    auto rep = runner::rerun_failures(dir / "run", 9);
    c.expect(rep.runs() == 10, "runs");
    c.expect(rep.counted() == 3 && rep.histogram.size() == 10 && rep.histogram[2] == 3, "3/10 bucket");
    auto f = rep.fractions();
    c.expect(std::abs(std::accumulate(f.begin(), f.end(), 0.0) - 1.0) < 1e-12, "fractions sum");

    // Same ten runs of one group against a warm cache, with the cache bypassed.
    auto rt = runner::Runtime::create(cfg, dir / "probe");
    auto groups = runner::build_test_groups(51, TaskKind::NLI, runner::load_task_instances(*rt, TaskKind::NLI), *rt);
    const auto& mock = *rt->mocks.at("mut");
    for (int run = 0; run < 10; ++run) runner::execute_group(groups[0], "mut", *rt, run);
    auto before = mock.calls_matching("Indeed");
    rt->bypass_model_caches(true);
    int failures = 0;
    for (int run = 0; run < 10; ++run) failures += runner::execute_group(groups[0], "mut", *rt, run).violated();
    auto calls = mock.calls_matching("Indeed") - before;
    c.expect(calls == 10, "follow-up calls = " + std::to_string(calls));
    c.expect(failures == 3, "failures = " + std::to_string(failures));
    c.note = "bucket 3/10 holds " + std::to_string(rep.histogram[2]) + " groups; " + std::to_string(calls) +
             " calls per group";
}

void discard_accounting(Check& c) {
    TempDir dir("acc-discard");
    const json transformer = json::parse(R"js({"default": "", "rules": [
        {"match": "^Paraphrase the following text: \"([\\s\\S]*)\" Only output", "response": "$1"}]})js");
    const json mut = json::parse(R"js({"default": "", "rules": [
        {"match": "Nobody speaks", "response": ""},
        {"match": "^Decide whether", "response": "entailment"},
        {"match": "^Answer the question", "response": "Paris"},
        {"match": "^Identify the relation", "response": "spouse"}]})js");
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
    auto doc = morph::testing::mock_campaign(dir.path(), mut, transformer, data, {19, 49, 51, 141});
    auto a = runner::run_campaign(runner::CampaignConfig::from_json(doc, dir.path()), dir / "run");
    auto m = report::compute_metrics(a);
    auto reason = [](const report::Counts& k, DiscardReason r) {
        auto it = k.discards.find(r);
        return it == k.discards.end() ? 0L : it->second;
    };
    const auto& o = m.overall;
    c.expect(reason(m.by_mr.at(19), DiscardReason::InputRelationUnmet) == 4, "MR-19 single sentence");
    c.expect(reason(m.by_mr.at(141), DiscardReason::PreconditionUnmet) == 1, "MR-141 missing entity");
    c.expect(reason(m.by_mr.at(51), DiscardReason::TransformFailed) == 10, "MustDiffer no-change");
    c.expect(reason(m.by_mr.at(49), DiscardReason::EmptyModelOutput) == 1, "empty model output");
    c.expect(o.discarded == 16 && o.groups == 3 && o.violations == 0, "overall tallies");
    c.expect(o.groups + o.discarded == long(a.results.at("mut").size()), "denominator");
    c.expect(o.lambda() == 0.0, "lambda");
    c.note = "discarded " + std::to_string(o.discarded) + " of " + std::to_string(a.results.at("mut").size()) +
             ", judged " + std::to_string(o.groups);
}

void dataset_adapters(Check& c) {
    using namespace datasets;
    auto dir = morph::testing::fixture_dir() / "datasets";
    LoadOptions opts;
    opts.relation_names = load_relation_names(catalog::default_data_dir() / "resources" / "redocred_relations.json");
    const std::vector<std::tuple<TaskKind, const char*, Format>> samples{
        {TaskKind::QAc, "squad2_sample.json", Format::Squad2Json},
        {TaskKind::NLI, "snli_sample.jsonl", Format::SnliJsonl},
        {TaskKind::SA, "sst2_sample.tsv", Format::Sst2Tsv},
        {TaskKind::RE, "redocred_sample.json", Format::RedocredJson}};
    std::map<TaskKind, LoadReport> loaded;
    for (const auto& [task, file, format] : samples) {
        auto r = load_dataset(task, dir / file, format, opts);
        c.expect(r.raw_rows == 20 && r.skipped == 0 && r.instances.size() == 20, std::string(file) + " counts");
        loaded[task] = std::move(r);
    }

    // SQuAD: context/question/answer, unanswerable -> "unknown".
    auto squad = json::parse(util::read_text_file(dir / "squad2_sample.json"));
    std::size_t i = 0;
    for (const auto& art : squad["data"]) {
        for (const auto& para : art["paragraphs"]) {
            for (const auto& qa : para["qas"]) {
                const auto& d = loaded[TaskKind::QAc].instances.at(i++);
                auto gold = qa.value("is_impossible", false) ? "unknown" : qa["answers"][0]["text"].get<std::string>();
                c.expect(d.instance_id == qa["id"] && d.components.at("context") == para["context"] &&
                             d.components.at("question") == qa["question"] && d.gold_label == gold,
                         "squad " + d.instance_id);
            }
        }
    }
    // SNLI: sentence1/sentence2/gold_label.
    std::ifstream snli(dir / "snli_sample.jsonl");
    std::string line;
    i = 0;
    while (std::getline(snli, line)) {
        if (util::is_blank(line)) continue;
        auto row = json::parse(line);
        const auto& d = loaded[TaskKind::NLI].instances.at(i++);
        c.expect(d.components.at("premise") == row["sentence1"] && d.components.at("hypothesis") == row["sentence2"] &&
                     d.gold_label == row["gold_label"].get<std::string>(),
                 "snli " + d.instance_id);
    }
    // SST-2: sentence, label 1 -> positive.
    std::ifstream sst(dir / "sst2_sample.tsv");
    std::getline(sst, line);
    i = 0;
    while (std::getline(sst, line)) {
        auto cols = util::split(line, '\t');
        const auto& d = loaded[TaskKind::SA].instances.at(i++);
        c.expect(d.components.at("text") == cols[0] && d.gold_label == (cols[1] == "1" ? "positive" : "negative"),
                 "sst2 " + d.instance_id);
    }
    // Re-DocRED: entities and readable relation of the chosen label.
    auto docred = json::parse(util::read_text_file(dir / "redocred_sample.json"));
    for (i = 0; i < docred.size(); ++i) {
        const auto& doc = docred[i];
        const auto& d = loaded[TaskKind::RE].instances.at(i);
        const auto& label = doc["labels"][d.metadata.at("label_index").get<std::size_t>()];
        c.expect(d.components.at("head_entity") == doc["vertexSet"][label["h"].get<int>()][0]["name"] &&
                     d.components.at("tail_entity") == doc["vertexSet"][label["t"].get<int>()][0]["name"] &&
                     d.gold_label == opts.relation_names.at(label["r"].get<std::string>()),
                 "redocred " + d.instance_id);
    }
    c.note = "4 x 20 rows, 0 skipped";
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<void(Check&)>>> criteria{
        {"hermetic end-to-end campaign", hermetic_campaign},
        {"NLI paraphrase violation (neutral -> entailment, gold neutral)", paraphrase_violation},
        {"oracle thresholds (0.80 / 0.40, inclusive)", oracle_thresholds},
        {"metrics identities", metrics_identities},
        {"transform properties", transform_properties},
        {"variant expansion", variant_expansion},
        {"flakiness", flakiness},
        {"discard accounting", discard_accounting},
        {"dataset adapters", dataset_adapters},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Check c;
        try {
            fn(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        std::cout << (c.ok() ? "PASS" : "FAIL") << "  " << name;
        if (!c.note.empty()) std::cout << " (" << c.note << ")";
        if (!c.ok()) std::cout << "  " << c.summary();
        std::cout << "\n";
        failed += !c.ok();
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
