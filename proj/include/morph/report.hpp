#pragma once

// Metrics, triage sampling and label storage, word diffs, exports, and the
// triage HTTP service.

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "morph/artifact.hpp"
#include "morph/core.hpp"

namespace morph::report {

// ---- metrics ----

struct Counts {
    long groups = 0;      // judged: satisfied + violated
    long violations = 0;
    long satisfied = 0;
    long labeled = 0;     // judged groups with a ground-truth quadrant
    std::array<long, 4> quadrants{};
    long discarded = 0;
    long infra_failed = 0;
    std::map<DiscardReason, long> discards;

    double lambda() const { return groups ? double(violations) / double(groups) : 0.0; }
    // Fraction of labeled groups in quadrant i (0-based); nullopt without labels.
    std::optional<double> quadrant_rate(std::size_t i) const;
    // Violations among labeled groups over labeled groups.
    std::optional<double> lambda_labeled() const;

    Counts& operator+=(const Counts& o);
    bool operator==(const Counts&) const = default;
};

struct CellKey {
    int mr_id = 0;
    TaskKind task = TaskKind::NLI;
    std::string model;

    auto operator<=>(const CellKey&) const = default;
};

struct SummaryRow {
    std::string row;    // AVG | MED
    std::string scope;  // "by_mr" or a model name
    double groups = 0;
    double lambda = 0;
    std::array<std::optional<double>, 4> quadrants{};
};

struct MetricsReport {
    bool partial = false;
    std::map<CellKey, Counts> cells;
    std::map<int, Counts> by_mr;
    std::map<TaskKind, Counts> by_task;
    std::map<std::string, Counts> by_model;
    std::map<std::pair<std::string, int>, Counts> by_model_mr;
    Counts overall;

    // AVG and MED over the per-MR rows, pooled across models ("by_mr") and
    // for each model separately.
    std::vector<SummaryRow> summary_rows() const;
};

MetricsReport compute_metrics(const std::vector<TestGroup>& groups,
                              const std::map<std::string, std::vector<GroupResult>>& results, bool partial);
MetricsReport compute_metrics(const RunArtifact& artifact);

json metrics_to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const json& j);

// ---- triage ----

struct ViolationRef {
    std::string id;  // "<model>:<group_id>"
    std::string model;
    std::string group_id;
    int mr_id = 0;
    TaskKind task = TaskKind::NLI;

    bool operator==(const ViolationRef&) const = default;
};

std::string violation_id(const std::string& model, const std::string& group_id);
// Every violated result, ordered by (model, mr, task, group_id).
std::vector<ViolationRef> all_violations(const RunArtifact& artifact);
// Up to per_cell violations from each (model, task, MR) cell, chosen by seed.
std::vector<ViolationRef> sample_for_triage(const RunArtifact& artifact, std::size_t per_cell, std::uint64_t seed);

// Append-only label log with last-write-wins per (violation, annotator).
class LabelStore {
public:
    explicit LabelStore(std::filesystem::path file);

    void append(const TriageLabel& label);
    // violation -> annotator -> label, replayed from the log.
    std::map<std::string, std::map<std::string, TriageLabel>> current() const;
    // Most recently written label for a violation across annotators.
    std::optional<TriageLabel> latest(const std::string& violation_id) const;
    std::size_t log_size() const;

private:
    void replay();

    std::filesystem::path file_;
    mutable std::mutex mu_;
    std::vector<TriageLabel> log_;
};

// ---- diff ----

struct DiffSpan {
    enum class Op { Equal, Delete, Insert };
    Op op = Op::Equal;
    std::string text;

    bool operator==(const DiffSpan&) const = default;
};

std::string_view to_string(DiffSpan::Op op);
// Longest-common-subsequence diff over whitespace-separated tokens. Adjacent
// tokens with the same op are merged into one span, joined by single spaces.
std::vector<DiffSpan> word_diff(std::string_view before, std::string_view after);
json diff_to_json(const std::vector<DiffSpan>& spans);

// ---- export ----

enum class ExportFormat { Csv, Json };
ExportFormat parse_export_format(std::string_view s);

// CSV: cells.csv, by_mr.csv, by_task.csv, by_model.csv, labels.csv.
// JSON: metrics.json, labels.json. Returns the files written.
std::vector<std::filesystem::path> export_report(const RunArtifact& artifact, ExportFormat format,
                                                 const std::filesystem::path& out_dir);
std::string csv_escape(std::string_view field);

// ---- triage service ----

struct ApiResponse {
    int status = 200;
    json body;
};

// Endpoint logic independent of the HTTP layer.
class TriageService {
public:
    // `queue` empty means every violation in the artifact.
    TriageService(RunArtifact artifact, std::vector<ViolationRef> queue = {});

    ApiResponse list_violations(const std::map<std::string, std::string>& query) const;
    ApiResponse violation(const std::string& id) const;
    ApiResponse post_label(const std::string& id, const std::string& body);
    ApiResponse progress() const;
    ApiResponse metrics() const;
    ApiResponse label_summary() const;

    const std::vector<ViolationRef>& queue() const { return queue_; }
    LabelStore& labels() { return labels_; }

private:
    const ViolationRef* find(const std::string& id) const;
    json summary_item(const ViolationRef& ref) const;

    RunArtifact artifact_;
    std::vector<ViolationRef> queue_;
    std::map<std::string, std::size_t> index_;
    LabelStore labels_;
    json metrics_;
};

class TriageServer {
public:
    TriageServer(std::shared_ptr<TriageService> service, std::optional<std::filesystem::path> static_dir = {});
    ~TriageServer();

    // "host:port"; port 0 picks a free port. Returns the bound port.
    int start(const std::string& bind_address);
    void stop();
    // Blocks until stop() is called from another thread.
    void wait();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace morph::report
