#pragma once

// Benchmark dataset adapters and seeded sampling.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "morph/core.hpp"

namespace morph::datasets {

enum class Format { Squad2Json, SnliJsonl, Sst2Tsv, RedocredJson, CanonicalJsonl };

std::string_view to_string(Format f);
// squad2-json | snli-jsonl | sst2-tsv | redocred-json | canonical-jsonl
Format parse_format(std::string_view s);

struct DatasetInstance {
    std::string instance_id;
    TaskKind task = TaskKind::NLI;
    std::map<std::string, std::string> components;
    std::optional<std::string> gold_label;
    json metadata = json::object();  // where the row came from

    TaskInput to_input(const std::string& prompt_id) const;
    bool operator==(const DatasetInstance&) const = default;
};

void to_json(json& j, const DatasetInstance& d);
void from_json(const json& j, DatasetInstance& d);

struct LoadReport {
    std::vector<DatasetInstance> instances;
    std::size_t raw_rows = 0;
    std::size_t skipped = 0;
    std::vector<std::string> skip_reasons;  // first few, for logs
};

struct LoadOptions {
    std::uint64_t seed = 0;  // picks the relation of multi-relation documents
    // Relation id -> readable name, for Re-DocRED style "P17" ids.
    std::map<std::string, std::string> relation_names;
};

// Throws ConfigError when the file is missing, unparseable as a whole, or
// yields no valid rows. Malformed rows are skipped and counted.
LoadReport load_dataset(TaskKind task, const std::filesystem::path& path, Format format,
                        const LoadOptions& opts = {});

std::map<std::string, std::string> load_relation_names(const std::filesystem::path& path);

// n distinct instances chosen uniformly by `seed`, kept in dataset order.
// Throws PreconditionError when n exceeds the population.
std::vector<DatasetInstance> sample_instances(const std::vector<DatasetInstance>& instances, std::size_t n,
                                              std::uint64_t seed);

// Canonical JSONL: a header line {"schema_version":1,"task":...} then one
// instance per line.
void write_canonical(const std::filesystem::path& path, TaskKind task, const std::vector<DatasetInstance>& instances);

// Joins word tokens back into text, attaching punctuation and clitics.
std::string detokenize(const std::vector<std::string>& tokens);

}  // namespace morph::datasets
