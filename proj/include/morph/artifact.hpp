#pragma once

// On-disk layout of a campaign run:
//
//   config.json            config snapshot
//   groups.jsonl           every test group, sorted by group_id
//   results/<model>.jsonl  one GroupResult per group, sorted by group_id
//   metrics.json           computed metrics
//   labels.jsonl           triage labels, append-only
//   status.json            progress and completion state
//   flakiness.json         written by the flakiness re-run

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "morph/core.hpp"
#include "morph/tasks.hpp"

namespace morph {

struct GroupResult {
    std::string group_id;
    std::string model;
    int run_index = 0;
    std::vector<tasks::NormalizedOutput> outputs;
    // Empty when the group could not be executed for infrastructure reasons.
    std::optional<Verdict> verdict;
    std::optional<Quadrant> quadrant;
    std::optional<bool> gt_match;
    std::string infra_error;
    json trace = json::object();

    bool infra_failed() const { return !verdict.has_value(); }
    bool violated() const { return verdict && verdict->status() == VerdictStatus::Violated; }
    bool discarded() const { return verdict && verdict->status() == VerdictStatus::Discarded; }
};

void to_json(json& j, const GroupResult& r);
void from_json(const json& j, GroupResult& r);

namespace artifact {

inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kGroupsFile = "groups.jsonl";
inline constexpr const char* kResultsDir = "results";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kLabelsFile = "labels.jsonl";
inline constexpr const char* kStatusFile = "status.json";
inline constexpr const char* kFlakinessFile = "flakiness.json";

std::filesystem::path results_path(const std::filesystem::path& run_dir, const std::string& model);
std::filesystem::path partial_results_path(const std::filesystem::path& run_dir, const std::string& model);

// Parses one JSON value per nonblank line. A malformed final line (a write
// cut short) is ignored when `tolerate_torn_tail` is set; otherwise throws.
std::vector<json> read_jsonl(const std::filesystem::path& path, bool tolerate_torn_tail = false);
std::string to_jsonl(const std::vector<json>& rows);

}  // namespace artifact

// A loaded run directory.
struct RunArtifact {
    std::filesystem::path dir;
    json config;
    json status;
    std::vector<TestGroup> groups;  // sorted by group_id
    std::vector<std::string> models;  // config order
    std::map<std::string, std::vector<GroupResult>> results;  // per model, sorted by group_id
    bool complete = false;

    // Reads final result files, or partial ones for an unfinished run.
    static RunArtifact load(const std::filesystem::path& dir);

    const TestGroup* find_group(const std::string& group_id) const;
    const GroupResult* find_result(const std::string& model, const std::string& group_id) const;
};

}  // namespace morph
