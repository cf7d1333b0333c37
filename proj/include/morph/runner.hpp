#pragma once

// Campaign orchestration: builds test groups, executes them against every
// model under test, persists results incrementally and re-runs violations to
// measure flakiness.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "morph/artifact.hpp"
#include "morph/catalog.hpp"
#include "morph/core.hpp"
#include "morph/datasets.hpp"
#include "morph/llm.hpp"
#include "morph/llm_transforms.hpp"
#include "morph/oracle.hpp"
#include "morph/tasks.hpp"
#include "morph/transforms.hpp"

namespace morph::runner {

struct DatasetSource {
    std::string path;
    datasets::Format format = datasets::Format::CanonicalJsonl;
};

struct CampaignConfig {
    std::vector<llm::ModelEndpoint> models_under_test;
    llm::ModelEndpoint transformation_model;
    llm::ModelEndpoint embedder;
    std::map<TaskKind, DatasetSource> datasets;
    std::set<TaskKind> tasks;  // defaults to the dataset keys
    std::optional<std::set<int>> mr_filter;
    std::size_t sample_size = 1000;
    std::uint64_t seed = 0;
    oracle::ComparatorConfig comparator;
    int concurrency_limit = 4;
    bool cache = true;                  // cache_mode on | off
    std::optional<std::string> cache_dir;  // default <run>/cache
    std::optional<std::string> data_dir;   // default: the bundled data
    double perturb_rate = 0.1;
    std::string prompt_set = "default";
    std::string pivot_language = "de";
    int transform_retries = 2;
    bool record_latency = false;  // adds timings to traces; breaks byte-identity
    // Relative paths resolve against this (the config file's directory).
    std::filesystem::path base_dir;

    void validate() const;
    std::filesystem::path resolve(const std::string& p) const;

    static CampaignConfig load(const std::filesystem::path& path);
    static CampaignConfig from_json(const json& j, const std::filesystem::path& base_dir);
    json to_json() const;
};

// Resolved resources shared by all workers; read-only once built apart from
// the thread-safe model wrappers.
struct Runtime {
    CampaignConfig cfg;
    std::filesystem::path data_dir;
    catalog::Catalog catalog;
    std::shared_ptr<const transforms::ResourceTables> tables;
    llmx::PromptLibrary transform_prompts;
    tasks::PromptSet task_prompts;
    oracle::OracleTables oracle_tables;

    std::shared_ptr<llm::CachedModel> transformer;
    std::shared_ptr<llm::Embedder> embedder;
    struct ModelHandles {
        // Source inputs go through `shared` so one instance is asked once per
        // model; follow-ups go through `direct`, which skips the cache when
        // caching is off.
        std::shared_ptr<llm::CachedModel> shared;
        std::shared_ptr<llm::ChatModel> direct;
    };
    std::map<std::string, ModelHandles> models;
    // Mock backends by endpoint name, for call accounting.
    std::map<std::string, std::shared_ptr<llm::MockBackend>> mocks;

    static std::unique_ptr<Runtime> create(const CampaignConfig& cfg, const std::filesystem::path& run_dir);
    // Every call to a model under test goes to the backend, not the cache.
    void bypass_model_caches(bool on);
};

// Sampled instances of a task, in dataset order.
std::vector<datasets::DatasetInstance> load_task_instances(const Runtime& rt, TaskKind task);

std::vector<TestGroup> build_test_groups(int mr_id, TaskKind task, const std::vector<datasets::DatasetInstance>& instances,
                                         Runtime& rt);

GroupResult execute_group(const TestGroup& group, const std::string& model, Runtime& rt, int run_index = 0);

struct RunOptions {
    // Test hook: stop once this many results were persisted, without
    // finalizing, as if the process had been killed.
    std::optional<std::size_t> stop_after_results;
    std::function<void(const std::string&)> log;
};

// Creates `run_dir` (must not hold a run) and executes the campaign.
RunArtifact run_campaign(const CampaignConfig& cfg, const std::filesystem::path& run_dir, const RunOptions& opts = {});
// Continues an unfinished run; a complete run is returned unchanged.
RunArtifact resume_campaign(const std::filesystem::path& run_dir, const RunOptions& opts = {});

struct FlakinessEntry {
    std::string violation_id;
    std::string model;
    std::string group_id;
    int mr_id = 0;
    TaskKind task = TaskKind::NLI;
    std::vector<std::string> outcomes;  // verdict per run, run 0 first
    int failures = 0;
    bool infra_failed = false;  // some re-run could not execute
    std::optional<LabelKind> label;
};

struct FlakinessReport {
    int k = 0;
    std::vector<FlakinessEntry> groups;
    // histogram[n - 1] = groups failing n of k + 1 runs; infra-failed groups excluded.
    std::vector<long> histogram;
    std::map<LabelKind, std::vector<long>> by_label;

    int runs() const { return k + 1; }
    long counted() const;
    std::vector<double> fractions() const;
    json to_json() const;
};

// Re-executes each violated group k more times with run indices 1..k and the
// model caches bypassed. Groups are taken verbatim from the artifact. Writes
// flakiness.json into the run directory.
FlakinessReport rerun_failures(const std::filesystem::path& run_dir, int k, const RunOptions& opts = {});

}  // namespace morph::runner
