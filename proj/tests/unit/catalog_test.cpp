#include <gtest/gtest.h>

#include <map>
#include <set>

#include "morph/catalog.hpp"
#include "morph/error.hpp"
#include "morph/llm_transforms.hpp"
#include "morph/util.hpp"

using namespace morph;
using namespace morph::catalog;

namespace {
const Catalog& cat() { return Catalog::builtin(); }
}  // namespace

TEST(Catalog, Sizes) {
    EXPECT_EQ(cat().entries().size(), 191u);
    EXPECT_EQ(cat().executable_ids().size(), 36u);
    EXPECT_EQ(cat().applicable_pairs().size(), 108u);
}

TEST(Catalog, ApplicablePairsPerTask) {
    std::map<TaskKind, int> per_task;
    for (const auto& [id, t] : cat().applicable_pairs()) {
        ++per_task[t];
        EXPECT_TRUE(cat().lookup(id).executable);
    }
    int sum = 0;
    for (auto& [t, n] : per_task) sum += n;
    EXPECT_EQ(sum, 108);
    EXPECT_EQ(per_task.size(), 4u);
}

TEST(Catalog, PairsAreOrderedAndUnique) {
    auto pairs = cat().applicable_pairs();
    for (std::size_t i = 1; i < pairs.size(); ++i) EXPECT_LT(pairs[i - 1], pairs[i]);
}

TEST(Catalog, VariantExpansion) {
    auto v8 = cat().expand_variants(8, TaskKind::NLI);
    ASSERT_EQ(v8.size(), 3u);
    EXPECT_EQ(v8[0].tag(), "component:premise");
    EXPECT_EQ(v8[1].tag(), "component:hypothesis");
    EXPECT_EQ(v8[2].tag(), "all");
    auto v150 = cat().expand_variants(150, TaskKind::SA);
    ASSERT_EQ(v150.size(), 1u);
    EXPECT_EQ(v150[0].tag(), "component:text");
    EXPECT_EQ(cat().expand_variants(49, TaskKind::NLI).size(), 1u);
    EXPECT_EQ(cat().expand_variants(137, TaskKind::RE)[0].tag(), "set:text+head_entity");
    EXPECT_EQ(cat().expand_variants(79, TaskKind::NLI)[0].tag(), "cross:" + cross_construction_for(79));
    EXPECT_THROW(cat().expand_variants(150, TaskKind::NLI), PreconditionError);
}

TEST(Catalog, EveryVariantValidates) {
    for (const auto& [id, t] : cat().applicable_pairs()) {
        for (const auto& v : cat().expand_variants(id, t)) EXPECT_NO_THROW(v.validate(t, id)) << id;
    }
}

TEST(Catalog, SelfCheckAgainstBundledPrompts) {
    auto lib = llmx::PromptLibrary::load(default_data_dir() / "prompts" / "transforms.json");
    auto problems = cat().self_check([&](const std::string& id) { return lib.contains(id); });
    EXPECT_TRUE(problems.empty()) << util::join(problems, "\n");
    auto none = cat().self_check([](const std::string&) { return false; });
    EXPECT_FALSE(none.empty());
}

TEST(Catalog, LookupAndRelations) {
    EXPECT_THROW(cat().lookup(0), NotFoundError);
    EXPECT_THROW(cat().lookup(192), NotFoundError);
    const auto& mr51 = cat().lookup(51);
    EXPECT_TRUE(mr51.executable);
    EXPECT_EQ(mr51.relation_for(TaskKind::NLI), OutputRelationKind::EquivalenceSyntactic);
    const auto& mr141 = cat().lookup(141);
    EXPECT_EQ(mr141.relation_for(TaskKind::RE), OutputRelationKind::EquivalenceSemantic);
    EXPECT_EQ(cat().lookup(142).relation_for(TaskKind::RE), OutputRelationKind::OppositeRelation);
    for (int id : cat().executable_ids()) EXPECT_TRUE(cat().lookup(id).binding.has_value());
    for (const auto& e : cat().entries()) {
        if (!e.executable) EXPECT_FALSE(e.binding.has_value()) << e.id;
    }
}

TEST(Catalog, CrossInstanceArity) {
    EXPECT_EQ(cat().lookup(77).arity, 3);
    EXPECT_EQ(cat().lookup(79).arity, 2);
    std::set<std::string> constructions;
    for (int id = 77; id <= 80; ++id) constructions.insert(cross_construction_for(id));
    EXPECT_EQ(constructions.size(), 4u);
}

TEST(Catalog, RejectsMalformedDocuments) {
    auto doc = json::parse(util::read_text_file(default_data_dir() / "catalog.json"));
    EXPECT_NO_THROW(Catalog::from_json(doc));

    auto dup = doc;
    dup["entries"][1]["id"] = dup["entries"][0]["id"];
    EXPECT_THROW(Catalog::from_json(dup), ConfigError);

    auto short_doc = doc;
    short_doc["entries"].erase(short_doc["entries"].size() - 1);
    EXPECT_THROW(Catalog::from_json(short_doc), ConfigError);

    auto bad_version = doc;
    bad_version["schema_version"] = 99;
    EXPECT_THROW(Catalog::from_json(bad_version), ConfigError);
}
